//! Closed-form multiplicative-noise penalties, scale-mixture sampling
//! equivalence, and EM noise-scale estimation.

mod em;
mod penalty;
mod sampling;

pub use em::{em_fit_linear, em_m_step, em_prior_moments, EmFit};
pub use penalty::{
    loss_logistic_mn_approx, logistic_nll, mn_linear_loss_closed_form, penalty_linear_mn,
    penalty_r_gsm, penalty_r_gsm_simplified, penalty_r_gsmreg,
};
pub use sampling::{
    ecdf_sup_distance, gsm_sample_hierarchical, gsm_sample_product, raw_moment_with_se,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::scalar::Scalar;

/// Scale-mixture configuration: the Gaussian prior scale σ₀ and the
/// numerical floor applied to λ² denominators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GsmConfig {
    pub sigma0: f64,
    pub lambda_floor: f64,
}

impl Default for GsmConfig {
    fn default() -> Self {
        GsmConfig {
            sigma0: 1.0,
            lambda_floor: 1e-8,
        }
    }
}

impl GsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0) {
            return Err(Error::param(format!("sigma0 must be > 0, got {}", self.sigma0)));
        }
        if !(self.lambda_floor > 0.0) {
            return Err(Error::param(format!(
                "lambda_floor must be > 0, got {}",
                self.lambda_floor
            )));
        }
        Ok(())
    }
}

/// Posterior mean and variance per weight, organized like the weight
/// matrices themselves: row `j` of layer `l` holds the moments of every
/// weight leaving input unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMoments<T: Scalar = f64> {
    pub mean: Matrix<T>,
    pub var: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowMoments<T: Scalar = f64> {
    pub layers: Vec<LayerMoments<T>>,
}

impl<T: Scalar> RowMoments<T> {
    pub fn new(layers: Vec<LayerMoments<T>>) -> Result<Self> {
        for (l, lm) in layers.iter().enumerate() {
            if lm.mean.shape() != lm.var.shape() {
                return Err(Error::Shape {
                    op: "row moments",
                    lhs_rows: lm.mean.rows(),
                    lhs_cols: lm.mean.cols(),
                    rhs_rows: lm.var.rows(),
                    rhs_cols: lm.var.cols(),
                });
            }
            if lm.var.data().iter().any(|&v| v < T::zero()) {
                return Err(Error::numeric(format!("negative variance in layer {l}")));
            }
        }
        Ok(RowMoments { layers })
    }

    /// Single-layer moments from per-coordinate mean/variance columns.
    pub fn single_column(means: &[T], vars: &[T]) -> Result<Self> {
        let mean = Matrix::from_vec(means.len(), 1, means.to_vec())?;
        let var = Matrix::from_vec(vars.len(), 1, vars.to_vec())?;
        RowMoments::new(vec![LayerMoments { mean, var }])
    }
}
