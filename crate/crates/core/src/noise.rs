//! Multiplicative noise distributions.
//!
//! A [`NoiseSpec`] describes the distribution of the per-unit factor λ that
//! corrupts a layer input during training. Moments are analytic; sampling is
//! exact. The bias pathway is never corrupted: the constant-1 input appended
//! to every layer always receives λ = 1.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::numerics::rng::RngState;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Degenerate noise, λ = c always. `Constant { c: 1.0 }` disables noise.
    Constant { c: f64 },
    /// Dropout: λ = 1 with probability `keep_prob`, else 0.
    Bernoulli { keep_prob: f64 },
    Gaussian { mean: f64, sd: f64 },
    Beta { alpha: f64, beta: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Constant { c } => {
                if !c.is_finite() {
                    return Err(Error::param(format!("constant noise value {c} is not finite")));
                }
            }
            NoiseSpec::Bernoulli { keep_prob } => {
                if !(keep_prob > 0.0 && keep_prob <= 1.0) {
                    return Err(Error::param(format!(
                        "bernoulli keep_prob must be in (0, 1], got {keep_prob}"
                    )));
                }
            }
            NoiseSpec::Gaussian { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || sd < 0.0 {
                    return Err(Error::param(format!(
                        "gaussian noise needs finite mean and sd >= 0, got mean={mean}, sd={sd}"
                    )));
                }
            }
            NoiseSpec::Beta { alpha, beta } => {
                if !(alpha > 0.0 && beta > 0.0) {
                    return Err(Error::param(format!(
                        "beta noise needs alpha > 0 and beta > 0, got alpha={alpha}, beta={beta}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True for distributions with a density (EM needs a differentiable λ).
    pub fn is_continuous(&self) -> bool {
        matches!(self, NoiseSpec::Gaussian { .. } | NoiseSpec::Beta { .. })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseSpec::Constant { c } => c,
            NoiseSpec::Bernoulli { keep_prob } => keep_prob,
            NoiseSpec::Gaussian { mean, .. } => mean,
            NoiseSpec::Beta { alpha, beta } => alpha / (alpha + beta),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::Constant { .. } => 0.0,
            NoiseSpec::Bernoulli { keep_prob } => keep_prob * (1.0 - keep_prob),
            NoiseSpec::Gaussian { sd, .. } => sd * sd,
            NoiseSpec::Beta { alpha, beta } => {
                let s = alpha + beta;
                alpha * beta / (s * s * (s + 1.0))
            }
        }
    }

    /// Exact raw moment E[λᵏ].
    pub fn raw_moment(&self, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        match *self {
            NoiseSpec::Constant { c } => c.powi(k as i32),
            NoiseSpec::Bernoulli { keep_prob } => keep_prob,
            NoiseSpec::Gaussian { mean, sd } => gaussian_raw_moment(mean, sd, k),
            NoiseSpec::Beta { alpha, beta } => (0..k)
                .map(|r| (alpha + r as f64) / (alpha + beta + r as f64))
                .product(),
        }
    }

    /// d/dλ of log p(λ), where the density exists and is differentiable.
    ///
    /// Returns `None` outside the support (or for distributions without a
    /// density), so callers can treat the contribution as zero.
    pub fn log_density_grad(&self, lambda: f64) -> Option<f64> {
        match *self {
            NoiseSpec::Gaussian { mean, sd } => {
                if sd > 0.0 {
                    Some(-(lambda - mean) / (sd * sd))
                } else {
                    None
                }
            }
            NoiseSpec::Beta { alpha, beta } => {
                if lambda > 0.0 && lambda < 1.0 {
                    Some((alpha - 1.0) / lambda - (beta - 1.0) / (1.0 - lambda))
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// One draw of λ. All sampling is done in `f64`.
    pub fn sample(&self, rng: &mut RngState) -> f64 {
        match *self {
            NoiseSpec::Constant { c } => c,
            NoiseSpec::Bernoulli { keep_prob } => {
                if rng.unit_uniform() < keep_prob {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseSpec::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            NoiseSpec::Beta { alpha, beta } => {
                let x = gamma_draw(rng, alpha);
                let y = gamma_draw(rng, beta);
                x / (x + y)
            }
        }
    }
}

fn gaussian_raw_moment(mean: f64, sd: f64, k: u32) -> f64 {
    let (m, s2) = (mean, sd * sd);
    match k {
        1 => m,
        2 => m * m + s2,
        3 => m.powi(3) + 3.0 * m * s2,
        4 => m.powi(4) + 6.0 * m * m * s2 + 3.0 * s2 * s2,
        _ => unimplemented!("gaussian raw moments supported up to order 4"),
    }
}

/// Gamma(α, 1) via the Marsaglia–Tsang rejection scheme, with the
/// `Gamma(α) = Gamma(α+1)·U^{1/α}` boost for α < 1.
pub(crate) fn gamma_draw(rng: &mut RngState, alpha: f64) -> f64 {
    if alpha < 1.0 {
        let u = rng.unit_uniform();
        return gamma_draw(rng, alpha + 1.0) * u.powf(1.0 / alpha);
    }
    let d = alpha - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v3 = v * v * v;
        let u = rng.unit_uniform();
        if u < 1.0 - 0.0331 * x.powi(4) {
            return d * v3;
        }
        if u.ln() < 0.5 * x * x + d * (1.0 - v3 + v3.ln()) {
            return d * v3;
        }
    }
}

/// `n` independent draws from `dist`, advancing `rng` deterministically.
pub fn draw<T: Scalar>(rng: &mut RngState, dist: &NoiseSpec, n: usize) -> Result<Vec<T>> {
    if n == 0 {
        return Err(Error::param("draw count must be at least 1"));
    }
    dist.validate()?;
    Ok((0..n).map(|_| T::of(dist.sample(rng))).collect())
}

/// One sampled noise field: a λ vector per layer, one entry per layer input
/// plus the bias slot, which is pinned to exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaField<T: Scalar = f64> {
    layers: Vec<Vec<T>>,
}

impl<T: Scalar> LambdaField<T> {
    /// Field of all ones (no corruption) for the given layer input dims.
    pub fn all_ones(layer_input_dims: &[usize]) -> Self {
        LambdaField {
            layers: layer_input_dims
                .iter()
                .map(|&d| vec![T::one(); d + 1])
                .collect(),
        }
    }

    pub fn from_layers(layers: Vec<Vec<T>>) -> Self {
        LambdaField { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// λ vector for layer `l`, length `in_dim + 1`; the last entry is the
    /// bias slot.
    pub fn layer(&self, l: usize) -> &[T] {
        &self.layers[l]
    }
}

/// Sample one λ per (layer, input unit). The bias position stays at 1.
pub fn sample_lambda_field<T: Scalar>(
    spec: &NoiseSpec,
    layer_input_dims: &[usize],
    rng: &mut RngState,
) -> LambdaField<T> {
    let layers = layer_input_dims
        .iter()
        .map(|&d| {
            let mut v: Vec<T> = (0..d).map(|_| T::of(spec.sample(rng))).collect();
            v.push(T::one());
            v
        })
        .collect();
    LambdaField::from_layers(layers)
}

/// Test-time bias correction: scale every noise-exposed weight row by E[λ].
///
/// The bias row (the appended constant-1 input) was never corrupted, so it
/// is left unscaled. Fails for zero-mean noise, where the correction is
/// undefined.
pub fn expectation_correction<T: Scalar>(net: &Network<T>, spec: &NoiseSpec) -> Result<Network<T>> {
    let m = spec.mean();
    if m == 0.0 {
        return Err(Error::DegenerateCorrection);
    }
    let scale = T::of(m);
    let mut out = net.clone();
    for l in 0..out.num_layers() {
        let in_dim = out.layer_spec(l).in_dim;
        let w = out.weights_mut(l);
        for r in 0..in_dim {
            for x in w.row_mut(r) {
                *x = *x * scale;
            }
        }
    }
    Ok(out)
}
