//! Flat binary network format.
//!
//! Layout: magic `GSMN`, version `u32`, layer count `u32`; then per layer
//! `in_dim: u32`, `out_dim: u32`, activation tag `u8`, followed by the
//! weight matrix and the mask matrix as little-endian `f64` row-major.
//! Values are stored as `f64` regardless of the in-memory scalar type.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::scalar::Scalar;

use super::{ActivationKind, LayerSpec, Network};

pub const NETWORK_MAGIC: &[u8; 4] = b"GSMN";
pub const NETWORK_VERSION: u32 = 1;

struct Counter<R> {
    inner: R,
    offset: u64,
    path: String,
}

impl<R: Read> Counter<R> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            offset: self.offset,
            message: message.into(),
        }
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) => Err(self.fail(format!("truncated file: {e}"))),
        }
    }

    fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact(&mut b)?;
        Ok(b[0])
    }

    fn read_f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

impl<T: Scalar> Network<T> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        w.write_all(NETWORK_MAGIC)?;
        w.write_all(&NETWORK_VERSION.to_le_bytes())?;
        w.write_all(&(self.num_layers() as u32).to_le_bytes())?;
        for l in 0..self.num_layers() {
            let spec = self.layer_spec(l);
            w.write_all(&(spec.in_dim as u32).to_le_bytes())?;
            w.write_all(&(spec.out_dim as u32).to_le_bytes())?;
            w.write_all(&[spec.activation.tag()])?;
            for &x in self.weights(l).data() {
                w.write_all(&x.as_f64().to_le_bytes())?;
            }
            for &x in self.mask(l).data() {
                w.write_all(&x.as_f64().to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Network<T>> {
        let path_str = path.as_ref().display().to_string();
        let mut r = Counter {
            inner: BufReader::new(File::open(path.as_ref())?),
            offset: 0,
            path: path_str,
        };

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != NETWORK_MAGIC {
            return Err(Error::Format {
                path: r.path,
                offset: 0,
                message: format!("bad magic {magic:02x?}, expected {NETWORK_MAGIC:02x?}"),
            });
        }
        let version = r.read_u32()?;
        if version != NETWORK_VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let layer_count = r.read_u32()? as usize;
        if layer_count == 0 || layer_count > 1024 {
            return Err(r.fail(format!("implausible layer count {layer_count}")));
        }

        let mut specs = Vec::with_capacity(layer_count);
        let mut weights = Vec::with_capacity(layer_count);
        let mut masks = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let in_dim = r.read_u32()? as usize;
            let out_dim = r.read_u32()? as usize;
            let tag = r.read_u8()?;
            let activation = ActivationKind::from_tag(tag)
                .ok_or_else(|| r.fail(format!("unknown activation tag {tag}")))?;
            let len = (in_dim + 1) * out_dim;
            let read_matrix = |r: &mut Counter<_>| -> Result<Matrix<T>> {
                let mut data = Vec::with_capacity(len);
                for _ in 0..len {
                    data.push(T::of(r.read_f64()?));
                }
                Matrix::from_vec(in_dim + 1, out_dim, data)
            };
            weights.push(read_matrix(&mut r)?);
            masks.push(read_matrix(&mut r)?);
            specs.push(LayerSpec {
                in_dim,
                out_dim,
                activation,
            });
        }

        let mut net = Network::new(specs)?;
        for l in 0..layer_count {
            *net.weights_mut(l) = weights[l].clone();
            *net.mask_mut(l) = masks[l].clone();
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngState;
    use tempfile::tempdir;

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net.gsmn");
        let mut rng = RngState::new(17);
        let mut net = Network::<f64>::init(
            &[3, 5, 2],
            &[ActivationKind::Relu, ActivationKind::Softmax],
            &mut rng,
        )
        .unwrap();
        net.mask_mut(0).set(2, 1, 0.0);
        net.weights_mut(0).set(2, 1, 0.0);
        net.save(&path).unwrap();
        let loaded = Network::<f64>::load(&path).unwrap();
        assert_eq!(net, loaded);
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("junk.gsmn");
        std::fs::write(&path, b"NOPE0000000").unwrap();
        match Network::<f64>::load(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.gsmn");
        let mut rng = RngState::new(18);
        let net =
            Network::<f64>::init(&[2, 2], &[ActivationKind::Identity], &mut rng).unwrap();
        net.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match Network::<f64>::load(&path) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
