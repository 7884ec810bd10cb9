//! Dataset ingestion and synthetic generators.
//!
//! Supports the big-endian IDX image/label format, generic numeric CSV with
//! a header row, and seeded synthetic problems with known ground truth.
//! Desk-scale subsetting always takes the first `n` rows in file order, so
//! a subset is a pure function of the source file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::RngState;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar = f64> {
    pub features: Matrix<T>,
    /// One-hot rows for classification, raw values for regression.
    pub targets: Matrix<T>,
    pub task: Task,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Matrix<T>, targets: Matrix<T>, task: Task) -> Result<Self> {
        if features.rows() != targets.rows() {
            return Err(Error::Shape {
                op: "dataset",
                lhs_rows: features.rows(),
                lhs_cols: features.cols(),
                rhs_rows: targets.rows(),
                rhs_cols: targets.cols(),
            });
        }
        if !features.is_finite() || !targets.is_finite() {
            return Err(Error::numeric("dataset contains non-finite values"));
        }
        if task == Task::Classification {
            for i in 0..targets.rows() {
                let sum: T = targets.row(i).iter().copied().sum();
                if (sum - T::one()).abs() > T::of(1e-9) {
                    return Err(Error::numeric(format!(
                        "classification target row {i} does not sum to 1"
                    )));
                }
            }
        }
        Ok(Dataset {
            features,
            targets,
            task,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First `n` rows in file order.
    pub fn take_first(&self, n: usize) -> Dataset<T> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        Dataset {
            features: self.features.select_rows(&idx),
            targets: self.targets.select_rows(&idx),
            task: self.task,
        }
    }

    /// Split off the last `floor(fraction * len)` rows as a validation set.
    pub fn split_validation(&self, fraction: f64) -> Result<(Dataset<T>, Option<Dataset<T>>)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::param(format!(
                "validation fraction must be in [0, 1), got {fraction}"
            )));
        }
        let n_val = (self.len() as f64 * fraction).floor() as usize;
        if n_val == 0 {
            return Ok((self.clone(), None));
        }
        let n_train = self.len() - n_val;
        let train_idx: Vec<usize> = (0..n_train).collect();
        let val_idx: Vec<usize> = (n_train..self.len()).collect();
        let train = Dataset {
            features: self.features.select_rows(&train_idx),
            targets: self.targets.select_rows(&train_idx),
            task: self.task,
        };
        let val = Dataset {
            features: self.features.select_rows(&val_idx),
            targets: self.targets.select_rows(&val_idx),
            task: self.task,
        };
        Ok((train, Some(val)))
    }

    /// Widen one-hot targets to `width` classes by zero-padding.
    pub fn pad_one_hot(&mut self, width: usize) -> Result<()> {
        if self.task != Task::Classification {
            return Err(Error::param("pad_one_hot only applies to classification"));
        }
        let old = self.targets.cols();
        if width < old {
            return Err(Error::param(format!(
                "cannot narrow one-hot targets from {old} to {width}"
            )));
        }
        if width == old {
            return Ok(());
        }
        let mut t = Matrix::zeros(self.targets.rows(), width);
        for i in 0..self.targets.rows() {
            t.row_mut(i)[..old].copy_from_slice(self.targets.row(i));
        }
        self.targets = t;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// IDX format
// ---------------------------------------------------------------------------

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxReader<R> {
    inner: R,
    offset: u64,
    path: String,
}

impl<R: Read> IdxReader<R> {
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

    fn read_u32_be(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_be_bytes(b))
    }
}

fn open_idx(path: &Path) -> Result<IdxReader<BufReader<File>>> {
    Ok(IdxReader {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
        path: path.display().to_string(),
    })
}

/// Load an IDX image/label pair: pixels scaled to `[0, 1]`, labels one-hot.
pub fn load_idx<T: Scalar>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<T>> {
    let mut ir = open_idx(images_path.as_ref())?;
    let magic = ir.read_u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(ir.fail(format!(
            "bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let n = ir.read_u32_be()? as usize;
    let rows = ir.read_u32_be()? as usize;
    let cols = ir.read_u32_be()? as usize;
    let dim = rows * cols;
    let mut pixels = vec![0u8; n * dim];
    ir.read_exact(&mut pixels)?;

    let mut lr = open_idx(labels_path.as_ref())?;
    let magic = lr.read_u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(lr.fail(format!(
            "bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let n_labels = lr.read_u32_be()? as usize;
    if n_labels != n {
        return Err(lr.fail(format!("{n_labels} labels for {n} images")));
    }
    let mut labels = vec![0u8; n];
    lr.read_exact(&mut labels)?;

    let scale = T::of(1.0 / 255.0);
    let features = Matrix::from_vec(
        n,
        dim,
        pixels.iter().map(|&p| T::of(p as f64) * scale).collect(),
    )?;
    let n_classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut targets = Matrix::zeros(n, n_classes);
    for (i, &l) in labels.iter().enumerate() {
        targets.set(i, l as usize, T::one());
    }
    Dataset::new(features, targets, Task::Classification)
}

/// Write an IDX image/label pair (the inverse of [`load_idx`]).
pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    pixels: &[u8],
    labels: &[u8],
    rows: usize,
    cols: usize,
) -> Result<()> {
    let n = labels.len();
    if pixels.len() != n * rows * cols {
        return Err(Error::param(format!(
            "{} pixels for {n} images of {rows}x{cols}",
            pixels.len()
        )));
    }
    let mut iw = BufWriter::new(File::create(images_path.as_ref())?);
    iw.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    iw.write_all(&(n as u32).to_be_bytes())?;
    iw.write_all(&(rows as u32).to_be_bytes())?;
    iw.write_all(&(cols as u32).to_be_bytes())?;
    iw.write_all(pixels)?;
    iw.flush()?;

    let mut lw = BufWriter::new(File::create(labels_path.as_ref())?);
    lw.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    lw.write_all(&(n as u32).to_be_bytes())?;
    lw.write_all(labels)?;
    lw.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Load a numeric CSV with a header row.
///
/// Every non-target column becomes a feature, in file order. Classification
/// targets must be small non-negative integer labels and are one-hot
/// encoded. No standardization happens here; see [`Standardizer`].
pub fn load_csv<T: Scalar>(
    path: impl AsRef<Path>,
    target_column: &str,
    task: Task,
) -> Result<Dataset<T>> {
    let path_str = path.as_ref().display().to_string();
    let file = BufReader::new(File::open(path.as_ref())?);
    let mut lines = file.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Format {
                path: path_str,
                offset: 0,
                message: "empty file".to_string(),
            })
        }
    };
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let target_idx = names
        .iter()
        .position(|n| n == target_column)
        .ok_or_else(|| {
            Error::config(format!(
                "target column {target_column:?} not found in {path_str} (columns: {})",
                names.join(", ")
            ))
        })?;

    let mut feats: Vec<T> = Vec::new();
    let mut raw_targets: Vec<T> = Vec::new();
    let mut n_rows = 0usize;
    for (line_no, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(Error::Parse {
                path: path_str,
                row: line_no + 2,
                column: format!("(cell count {} != {})", cells.len(), names.len()),
                message: "wrong number of cells".to_string(),
            });
        }
        for (c, cell) in cells.iter().enumerate() {
            let value = T::parse_str(cell).ok_or_else(|| Error::Parse {
                path: path_str.clone(),
                row: line_no + 2,
                column: names[c].clone(),
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if c == target_idx {
                raw_targets.push(value);
            } else {
                feats.push(value);
            }
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::Format {
            path: path_str,
            offset: 0,
            message: "no data rows".to_string(),
        });
    }

    let features = Matrix::from_vec(n_rows, names.len() - 1, feats)?;
    let targets = match task {
        Task::Regression => Matrix::from_vec(n_rows, 1, raw_targets)?,
        Task::Classification => {
            let labels: Vec<usize> = raw_targets
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let f = v.as_f64();
                    if f.fract() != 0.0 || f < 0.0 || f > 1e6 {
                        Err(Error::Parse {
                            path: path_str.clone(),
                            row: i + 2,
                            column: target_column.to_string(),
                            message: format!("label {f} is not a small non-negative integer"),
                        })
                    } else {
                        Ok(f as usize)
                    }
                })
                .collect::<Result<_>>()?;
            let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
            let mut t = Matrix::zeros(n_rows, n_classes);
            for (i, &l) in labels.iter().enumerate() {
                t.set(i, l, T::one());
            }
            t
        }
    };
    Dataset::new(features, targets, task)
}

/// Dump a dataset to CSV: features, then a single `target` column holding
/// the label index (classification) or the raw value (regression).
///
/// Values print in shortest round-tripping form, so dump-and-reload is
/// bit-identical whenever every class actually occurs in the data.
pub fn write_csv<T: Scalar>(ds: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    let d = ds.features.cols();
    for j in 0..d {
        write!(w, "feature_{j},")?;
    }
    writeln!(w, "target")?;
    for i in 0..ds.len() {
        for &x in ds.features.row(i) {
            write!(w, "{x},")?;
        }
        match ds.task {
            Task::Regression => writeln!(w, "{}", ds.targets.get(i, 0))?,
            Task::Classification => {
                let label = ds
                    .targets
                    .row(i)
                    .iter()
                    .position(|&x| x == T::one())
                    .expect("one-hot row has a 1");
                writeln!(w, "{label}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

/// Per-column affine transform fitted on the training split only.
///
/// Constant columns (sd below the floor) map to all zeros.
#[derive(Debug, Clone)]
pub struct Standardizer<T: Scalar = f64> {
    mean: Vec<T>,
    scale: Vec<T>,
}

const SD_FLOOR: f64 = 1e-12;

impl<T: Scalar> Standardizer<T> {
    pub fn fit(features: &Matrix<T>) -> Self {
        let (n, d) = features.shape();
        let mut mean = vec![T::zero(); d];
        for i in 0..n {
            for (m, &x) in mean.iter_mut().zip(features.row(i)) {
                *m += x;
            }
        }
        let inv_n = T::of(1.0 / n as f64);
        for m in mean.iter_mut() {
            *m = *m * inv_n;
        }
        let mut var = vec![T::zero(); d];
        for i in 0..n {
            for j in 0..d {
                let c = features.get(i, j) - mean[j];
                var[j] += c * c;
            }
        }
        let scale = var
            .iter()
            .map(|&v| {
                let sd = (v * inv_n).sqrt();
                if sd < T::of(SD_FLOOR) {
                    T::zero()
                } else {
                    T::one() / sd
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, features: &mut Matrix<T>) {
        for i in 0..features.rows() {
            let row = features.row_mut(i);
            for (j, x) in row.iter_mut().enumerate() {
                *x = (*x - self.mean[j]) * self.scale[j];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

/// Sparse linear regression with known truth: `X ~ N(0,1)`,
/// `y = X w* + noise`, `w*` nonzero only on `active_set`.
pub fn synth_sparse_regression<T: Scalar>(
    n: usize,
    d: usize,
    active_set: &[usize],
    w_scale: f64,
    noise_sd: f64,
    rng: &mut RngState,
) -> Result<(Dataset<T>, Vec<T>)> {
    if active_set.iter().any(|&j| j >= d) {
        return Err(Error::param(format!(
            "active set index out of range for d={d}"
        )));
    }
    let mut true_w = vec![T::zero(); d];
    for &j in active_set {
        true_w[j] = T::of(w_scale);
    }
    let mut features = Matrix::zeros(n, d);
    for x in features.data_mut() {
        let z: f64 = rand::Rng::sample(rng, StandardNormal);
        *x = T::of(z);
    }
    let mut targets = Matrix::zeros(n, 1);
    for i in 0..n {
        let mut y = T::zero();
        for (j, &w) in true_w.iter().enumerate() {
            y += features.get(i, j) * w;
        }
        let eps: f64 = rand::Rng::sample(rng, StandardNormal);
        targets.set(i, 0, y + T::of(noise_sd * eps));
    }
    Ok((Dataset::new(features, targets, Task::Regression)?, true_w))
}

/// Gaussian class blobs for classification smoke tests.
///
/// Class centers sit at `separation * N(0,1)^d`; points scatter around them
/// with unit-ish `spread`. Classes are assigned round-robin.
pub fn synth_blobs<T: Scalar>(
    n: usize,
    d: usize,
    classes: usize,
    separation: f64,
    spread: f64,
    rng: &mut RngState,
) -> Result<Dataset<T>> {
    if classes < 2 {
        return Err(Error::param("need at least 2 classes"));
    }
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = rand::Rng::sample(rng, StandardNormal);
                    separation * z
                })
                .collect()
        })
        .collect();
    let mut features = Matrix::zeros(n, d);
    let mut targets = Matrix::zeros(n, classes);
    for i in 0..n {
        let c = i % classes;
        for j in 0..d {
            let z: f64 = rand::Rng::sample(rng, StandardNormal);
            features.set(i, j, T::of(centers[c][j] + spread * z));
        }
        targets.set(i, c, T::one());
    }
    Dataset::new(features, targets, Task::Classification)
}
