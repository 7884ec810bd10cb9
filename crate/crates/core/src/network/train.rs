//! Monte Carlo multiplicative-noise training.
//!
//! Plain SGD on the noisy loss: a fresh λ field is sampled for every
//! minibatch forward pass, backpropagation runs through the corrupted
//! values, and the learning rate follows a polynomial decay schedule.
//! Everything is deterministic for a fixed seed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::noise::{sample_lambda_field, NoiseSpec};
use crate::numerics::rng::RngState;
use crate::scalar::Scalar;

use super::{LossKind, Network};

/// Polynomial decay: `lr_t = a * (b + t)^(-gamma)` with `t` the global step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_b() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    0.55
}

impl LrSchedule {
    pub fn new(a: f64) -> Self {
        LrSchedule {
            a,
            b: default_b(),
            gamma: default_gamma(),
        }
    }

    /// Fixed learning rate.
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            a: lr,
            b: 1.0,
            gamma: 0.0,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        self.a * (self.b + step as f64).powf(-self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.b > 0.0 && self.gamma >= 0.0) {
            return Err(Error::param(format!(
                "bad lr schedule: a={}, b={}, gamma={}",
                self.a, self.b, self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub loss: LossKind,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Mean noisy training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Train under multiplicative noise, observing each finished epoch.
///
/// The observer receives `(epoch, mean noisy train loss, net-so-far)`; the
/// CLI uses it to log validation metrics without a second training path.
pub fn train_mn_observed<T: Scalar>(
    net: &Network<T>,
    data: &Dataset<T>,
    spec: &NoiseSpec,
    cfg: &TrainConfig,
    rng: &mut RngState,
    mut observer: impl FnMut(usize, f64, &Network<T>),
) -> Result<(Network<T>, TrainReport)> {
    spec.validate()?;
    cfg.lr.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::param("batch_size must be at least 1"));
    }
    if data.features.cols() != net.input_dim() || data.targets.cols() != net.output_dim() {
        return Err(Error::Shape {
            op: "train_mn data",
            lhs_rows: data.features.rows(),
            lhs_cols: data.features.cols(),
            rhs_rows: net.input_dim(),
            rhs_cols: net.output_dim(),
        });
    }

    let mut net = net.clone();
    let mut report = TrainReport::default();
    let n = data.features.rows();
    let layer_dims = net.layer_input_dims();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        shuffle(&mut indices, rng);
        let mut epoch_loss = 0.0;
        for batch in indices.chunks(cfg.batch_size) {
            let x = data.features.select_rows(batch);
            let y = data.targets.select_rows(batch);
            let field = sample_lambda_field::<T>(spec, &layer_dims, rng);

            let acts = net.forward(&x, Some(&field))?;
            let batch_loss =
                super::loss(acts.last().expect("output present"), &y, cfg.loss)?.as_f64();
            let grads = net.backward_from_acts(&acts, &y, Some(&field), cfg.loss, None)?;

            let lr = T::of(cfg.lr.at(step));
            for (l, grad) in grads.iter().enumerate() {
                let w = net.weights_mut(l);
                for (wv, &gv) in w.data_mut().iter_mut().zip(grad.data()) {
                    *wv = *wv - lr * gv;
                }
            }

            epoch_loss += batch_loss * batch.len() as f64;
            step += 1;
        }
        epoch_loss /= n as f64;
        if !epoch_loss.is_finite() || !net.all_weights_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        report.epoch_losses.push(epoch_loss);
        observer(epoch, epoch_loss, &net);
    }
    Ok((net, report))
}

/// Train under multiplicative noise; see [`train_mn_observed`].
pub fn train_mn<T: Scalar>(
    net: &Network<T>,
    data: &Dataset<T>,
    spec: &NoiseSpec,
    cfg: &TrainConfig,
    rng: &mut RngState,
) -> Result<(Network<T>, TrainReport)> {
    train_mn_observed(net, data, spec, cfg, rng, |_, _, _| {})
}

fn shuffle(indices: &mut [usize], rng: &mut RngState) {
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
}
