//! Closed-form regularization penalties induced by multiplicative noise.

use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::numerics::matrix::Matrix;
use crate::scalar::Scalar;

use super::{GsmConfig, RowMoments};

fn check_linear_dims<T: Scalar>(x: &Matrix<T>, w: &[T], op: &'static str) -> Result<()> {
    if x.cols() != w.len() {
        return Err(Error::Shape {
            op,
            lhs_rows: x.rows(),
            lhs_cols: x.cols(),
            rhs_rows: w.len(),
            rhs_cols: 1,
        });
    }
    Ok(())
}

/// Data-driven L2 penalty for linear regression under multiplicative noise:
/// `(1/2) Var[λ] Σ_j w_j² Σ_i x_{ij}²`.
pub fn penalty_linear_mn<T: Scalar>(x: &Matrix<T>, w: &[T], spec: &NoiseSpec) -> Result<T> {
    check_linear_dims(x, w, "penalty_linear_mn")?;
    spec.validate()?;
    let var_lambda = T::of(spec.variance());
    let mut total = T::zero();
    for (j, &wj) in w.iter().enumerate() {
        let mut col_sq = T::zero();
        for i in 0..x.rows() {
            let v = x.get(i, j);
            col_sq += v * v;
        }
        total += wj * wj * col_sq;
    }
    Ok(T::of(0.5) * var_lambda * total)
}

/// Exact expected noisy squared loss for linear regression:
/// the squared loss at the mean-scaled weights plus [`penalty_linear_mn`].
///
/// The expectation is over λ only; it holds for any noise mean because the
/// loss is expanded around `E[λ]·w`.
pub fn mn_linear_loss_closed_form<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    w: &[T],
    spec: &NoiseSpec,
) -> Result<T> {
    check_linear_dims(x, w, "mn_linear_loss_closed_form")?;
    if y.len() != x.rows() {
        return Err(Error::Shape {
            op: "mn_linear_loss_closed_form targets",
            lhs_rows: x.rows(),
            lhs_cols: x.cols(),
            rhs_rows: y.len(),
            rhs_cols: 1,
        });
    }
    let mean_lambda = T::of(spec.mean());
    let half = T::of(0.5);
    let mut base = T::zero();
    for i in 0..x.rows() {
        let mut pred = T::zero();
        for (j, &wj) in w.iter().enumerate() {
            pred += x.get(i, j) * mean_lambda * wj;
        }
        let r = y[i] - pred;
        base += half * r * r;
    }
    Ok(base + penalty_linear_mn(x, w, spec)?)
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Logistic negative log likelihood `-Σ_i [y ln f + (1-y) ln(1-f)]`
/// (a sum over examples, not a mean).
pub fn logistic_nll<T: Scalar>(x: &Matrix<T>, y: &[T], w: &[T]) -> Result<T> {
    check_linear_dims(x, w, "logistic_nll")?;
    let lo = T::of(1e-12);
    let hi = T::one() - lo;
    let mut total = T::zero();
    for i in 0..x.rows() {
        let mut z = T::zero();
        for (j, &wj) in w.iter().enumerate() {
            z += x.get(i, j) * wj;
        }
        let f = sigmoid(z).min(hi).max(lo);
        total = total - y[i] * f.ln() - (T::one() - y[i]) * (T::one() - f).ln();
    }
    Ok(total)
}

/// Second-order approximation of the noisy logistic loss: the plain NLL
/// plus `(1/2) Var[λ] Σ_j w_j² Σ_i f(x_i w)(1 - f(x_i w)) x_{ij}²`.
///
/// Accurate in the small-logit regime; it can substantially underestimate
/// the true noisy loss for large logits.
pub fn loss_logistic_mn_approx<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    w: &[T],
    spec: &NoiseSpec,
) -> Result<T> {
    check_linear_dims(x, w, "loss_logistic_mn_approx")?;
    spec.validate()?;
    if y.iter().any(|&t| t != T::zero() && t != T::one()) {
        return Err(Error::param("logistic targets must be 0 or 1"));
    }
    let nll = logistic_nll(x, y, w)?;
    let var_lambda = T::of(spec.variance());
    let mut penalty = T::zero();
    for i in 0..x.rows() {
        let mut z = T::zero();
        for (j, &wj) in w.iter().enumerate() {
            z += x.get(i, j) * wj;
        }
        let f = sigmoid(z);
        let curv = f * (T::one() - f);
        for (j, &wj) in w.iter().enumerate() {
            let xij = x.get(i, j);
            penalty += wj * wj * curv * xij * xij;
        }
    }
    Ok(nll + T::of(0.5) * var_lambda * penalty)
}

fn check_moments_shape<T: Scalar>(v: &[Matrix<T>], moments: &RowMoments<T>) -> Result<()> {
    if v.len() != moments.layers.len() {
        return Err(Error::param(format!(
            "{} weight layers vs {} moment layers",
            v.len(),
            moments.layers.len()
        )));
    }
    for (vl, ml) in v.iter().zip(&moments.layers) {
        if vl.shape() != ml.mean.shape() {
            return Err(Error::Shape {
                op: "gsm penalty moments",
                lhs_rows: vl.rows(),
                lhs_cols: vl.cols(),
                rhs_rows: ml.mean.rows(),
                rhs_cols: ml.mean.cols(),
            });
        }
    }
    Ok(())
}

/// The scale-mixture penalty: a per-row L2 whose strength is the inverse of
/// the row's averaged squared posterior mean plus posterior variance.
///
/// `(1/σ₀²) Σ_l Σ_j [Σ_k v²] / max(floor, (Σ_k E²[v] + Σ_k Var[v]) / d_l)`
pub fn penalty_r_gsm<T: Scalar>(
    v: &[Matrix<T>],
    moments: &RowMoments<T>,
    cfg: &GsmConfig,
) -> Result<T> {
    cfg.validate()?;
    check_moments_shape(v, moments)?;
    let floor = T::of(cfg.lambda_floor);
    let mut total = T::zero();
    for (vl, ml) in v.iter().zip(&moments.layers) {
        let d_l = T::of(vl.cols() as f64);
        for j in 0..vl.rows() {
            let mut num = T::zero();
            for &x in vl.row(j) {
                num += x * x;
            }
            let mut mean_sq = T::zero();
            let mut var_sum = T::zero();
            for (&m, &s) in ml.mean.row(j).iter().zip(ml.var.row(j)) {
                mean_sq += m * m;
                var_sum += s;
            }
            let denom = ((mean_sq + var_sum) / d_l).max(floor);
            total += num / denom;
        }
    }
    Ok(total / T::of(cfg.sigma0 * cfg.sigma0))
}

/// The simplified penalty at `v = E[v]`:
/// `(1/σ₀²) Σ_l Σ_j d_l / (1 + Σ_k Var[v] / Σ_k v²)`.
///
/// A row contributes nothing once its weights are sparse (`Σv² → 0`) or
/// robust to rescaling (`ΣVar → ∞`).
pub fn penalty_r_gsm_simplified<T: Scalar>(
    v: &[Matrix<T>],
    moments: &RowMoments<T>,
    cfg: &GsmConfig,
) -> Result<T> {
    cfg.validate()?;
    check_moments_shape(v, moments)?;
    let mut total = T::zero();
    for (vl, ml) in v.iter().zip(&moments.layers) {
        let d_l = T::of(vl.cols() as f64);
        for j in 0..vl.rows() {
            let mut v_sq = T::zero();
            for &x in vl.row(j) {
                v_sq += x * x;
            }
            if v_sq == T::zero() {
                continue; // the sparse path: zero contribution in the limit
            }
            let mut var_sum = T::zero();
            for &s in ml.var.row(j) {
                var_sum += s;
            }
            total += d_l / (T::one() + var_sum / v_sq);
        }
    }
    Ok(total / T::of(cfg.sigma0 * cfg.sigma0))
}

/// The recovered diffuse-prior penalty `(1/σ₀²) Σ_j v_j² / Var[v_j]`,
/// with floored variances.
pub fn penalty_r_gsmreg<T: Scalar>(v: &[T], var: &[T], cfg: &GsmConfig) -> Result<T> {
    cfg.validate()?;
    if v.len() != var.len() {
        return Err(Error::param(format!(
            "{} weights vs {} variances",
            v.len(),
            var.len()
        )));
    }
    let floor = T::of(cfg.lambda_floor);
    let mut total = T::zero();
    for (&x, &s) in v.iter().zip(var) {
        total += x * x / s.max(floor);
    }
    Ok(total / T::of(cfg.sigma0 * cfg.sigma0))
}
