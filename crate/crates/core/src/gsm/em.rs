//! Type-II maximum likelihood for the noise scales.
//!
//! For linear regression the E-step is the exact conjugate Gaussian
//! posterior of the weights under the current per-coordinate prior
//! N(0, σ₀²λ_j²); its off-diagonal covariance is discarded, keeping only
//! per-coordinate moments. The M-step sets each λ̂² to the averaged squared
//! posterior mean plus posterior variance of the weights sharing that scale,
//! optionally adjusted by the derivative of the log noise density, and
//! floored.
//!
//! The M-step's prior term is a known ambiguity: the derivation yields a
//! density-derivative term whose units do not match the moment terms, so it
//! is exposed as an additive, possibly-zero adjustment and the flat prior
//! (no adjustment) is the default. Discrete noise has no usable density
//! derivative at all and is rejected; Beta(α=β<1) is the continuous
//! stand-in for Bernoulli(0.5).

use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::numerics::linalg::spd_inverse;
use crate::numerics::matrix::Matrix;
use crate::scalar::Scalar;

use super::{GsmConfig, LayerMoments, RowMoments};

/// One M-step for a single row of moments: the weights leaving one unit.
///
/// `λ̂² = max(floor, mean(E²[v]) + mean(Var[v]) + adjust(λ_provisional))`
/// where the adjustment, if any, is evaluated at the square root of the
/// unadjusted value.
pub fn em_m_step<T: Scalar>(
    means: &[T],
    vars: &[T],
    log_prior_grad: Option<&dyn Fn(f64) -> f64>,
    cfg: &GsmConfig,
) -> Result<T> {
    cfg.validate()?;
    if means.is_empty() || means.len() != vars.len() {
        return Err(Error::param(format!(
            "moment row needs matching non-empty means/vars, got {}/{}",
            means.len(),
            vars.len()
        )));
    }
    let d = T::of(means.len() as f64);
    let mut mean_sq = T::zero();
    let mut var_sum = T::zero();
    for (&m, &v) in means.iter().zip(vars) {
        mean_sq += m * m;
        var_sum += v;
    }
    let mut lambda_sq = (mean_sq + var_sum) / d;
    if let Some(grad) = log_prior_grad {
        lambda_sq += T::of(grad(lambda_sq.as_f64().max(0.0).sqrt()));
    }
    Ok(lambda_sq.max(T::of(cfg.lambda_floor)))
}

/// Moments of the prior itself: what the E-step returns with no data.
pub fn em_prior_moments<T: Scalar>(lambda_sq: &[T], cfg: &GsmConfig) -> RowMoments<T> {
    let d = lambda_sq.len();
    let s0 = T::of(cfg.sigma0 * cfg.sigma0);
    let mean = Matrix::zeros(d, 1);
    let mut var = Matrix::zeros(d, 1);
    for (j, &l2) in lambda_sq.iter().enumerate() {
        var.set(j, 0, s0 * l2);
    }
    RowMoments {
        layers: vec![LayerMoments { mean, var }],
    }
}

#[derive(Debug, Clone)]
pub struct EmFit<T: Scalar = f64> {
    /// Converged λ̂² per coordinate.
    pub lambda_sq: Vec<T>,
    /// Final posterior moments, one single-output row per coordinate.
    pub moments: RowMoments<T>,
}

/// Alternate exact conjugate E-steps with per-coordinate M-steps for
/// Bayesian linear regression `y = Xv + ε`, `ε ~ N(0, obs_noise_var)`.
///
/// `noise_prior`, if given, contributes its log-density derivative to the
/// M-step; it must be a continuous distribution. `None` is the flat prior.
pub fn em_fit_linear<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    obs_noise_var: f64,
    noise_prior: Option<&NoiseSpec>,
    cfg: &GsmConfig,
    iters: usize,
) -> Result<EmFit<T>> {
    cfg.validate()?;
    if !(obs_noise_var > 0.0) {
        return Err(Error::param(format!(
            "obs_noise_var must be > 0, got {obs_noise_var}"
        )));
    }
    if y.len() != x.rows() {
        return Err(Error::Shape {
            op: "em_fit_linear targets",
            lhs_rows: x.rows(),
            lhs_cols: x.cols(),
            rhs_rows: y.len(),
            rhs_cols: 1,
        });
    }
    if let Some(spec) = noise_prior {
        spec.validate()?;
        if !spec.is_continuous() {
            return Err(Error::param(
                "EM needs a continuous noise distribution; use Beta(a=b<1) as \
                 the continuous stand-in for Bernoulli",
            ));
        }
    }

    let d = x.cols();
    let grad_fn = noise_prior.map(|spec| {
        move |lambda: f64| spec.log_density_grad(lambda).unwrap_or(0.0)
    });

    let mut lambda_sq = vec![T::one(); d];
    let mut moments = em_prior_moments(&lambda_sq, cfg);

    // data-dependent pieces that never change across iterations
    let xt = x.transpose();
    let xtx = xt.matmul(x)?;
    let xty = xt.matmul(&Matrix::from_vec(y.len(), 1, y.to_vec())?)?;
    let inv_obs = T::of(1.0 / obs_noise_var);
    let s0_sq = T::of(cfg.sigma0 * cfg.sigma0);

    for _ in 0..iters {
        // E-step: posterior precision A = XᵀX/s² + diag(1/(σ₀²λ²))
        let mut a = xtx.scale(inv_obs);
        for j in 0..d {
            a.set(j, j, a.get(j, j) + T::one() / (s0_sq * lambda_sq[j]));
        }
        let cov = spd_inverse(&a).map_err(|_| {
            Error::numeric("singular posterior precision in the E-step")
        })?;
        let mut mean = Matrix::zeros(d, 1);
        for i in 0..d {
            let mut acc = T::zero();
            for j in 0..d {
                acc += cov.get(i, j) * xty.get(j, 0);
            }
            mean.set(i, 0, acc * inv_obs);
        }
        let mut var = Matrix::zeros(d, 1);
        for j in 0..d {
            // the factorized-posterior assumption: keep the diagonal only
            var.set(j, 0, cov.get(j, j));
        }

        // M-step, coordinate by coordinate
        for j in 0..d {
            lambda_sq[j] = em_m_step(
                &[mean.get(j, 0)],
                &[var.get(j, 0)],
                grad_fn.as_ref().map(|g| g as &dyn Fn(f64) -> f64),
                cfg,
            )?;
        }
        moments = RowMoments {
            layers: vec![LayerMoments { mean, var }],
        };
    }

    Ok(EmFit { lambda_sq, moments })
}
