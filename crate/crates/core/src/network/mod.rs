//! Dense feed-forward network with optional multiplicative noise.
//!
//! Forward propagation computes `h_l = f_l([h_{l-1}, 1] Λ_l W_l)` where the
//! bias is absorbed as the last row of each weight matrix, `Λ_l` is a sampled
//! per-input noise field, and every weight is gated by a binary prune mask.
//! With an all-ones (or absent) field this reduces bit-exactly to the plain
//! forward pass.

mod serialize;
mod train;

pub use train::{train_mn, train_mn_observed, LrSchedule, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::LambdaField;
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::RngState;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
    /// Row-wise softmax; permitted only on the final layer.
    Softmax,
}

impl ActivationKind {
    pub(crate) fn tag(self) -> u8 {
        match self {
            ActivationKind::Identity => 0,
            ActivationKind::Sigmoid => 1,
            ActivationKind::Tanh => 2,
            ActivationKind::Relu => 3,
            ActivationKind::Softmax => 4,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => ActivationKind::Identity,
            1 => ActivationKind::Sigmoid,
            2 => ActivationKind::Tanh,
            3 => ActivationKind::Relu,
            4 => ActivationKind::Softmax,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Negative log likelihood for softmax outputs, or binary cross-entropy
    /// for single-column sigmoid outputs.
    CrossEntropy,
    SquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: ActivationKind,
}

/// Optional Gaussian prior on the weights, scaled so that summing the batch
/// objective over one pass of the data applies the prior exactly once.
#[derive(Debug, Clone, Copy)]
pub struct GaussianPrior {
    pub sigma0: f64,
    pub n_total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar = f64> {
    layer_specs: Vec<LayerSpec>,
    /// One `(in_dim + 1) x out_dim` matrix per layer; last row is the bias.
    weights: Vec<Matrix<T>>,
    /// Binary gates, same shapes as `weights`. All ones at construction.
    masks: Vec<Matrix<T>>,
}

impl<T: Scalar> Network<T> {
    /// Zero-initialized network with all-ones masks.
    pub fn new(layer_specs: Vec<LayerSpec>) -> Result<Self> {
        if layer_specs.is_empty() {
            return Err(Error::param("network needs at least one layer"));
        }
        for w in layer_specs.windows(2) {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::param(format!(
                    "layer dims do not chain: out_dim {} then in_dim {}",
                    w[0].out_dim, w[1].in_dim
                )));
            }
            if w[0].activation == ActivationKind::Softmax {
                return Err(Error::param(
                    "softmax is permitted only on the final layer",
                ));
            }
        }
        if layer_specs.iter().any(|s| s.in_dim == 0 || s.out_dim == 0) {
            return Err(Error::param("layer dims must be positive"));
        }
        let weights = layer_specs
            .iter()
            .map(|s| Matrix::zeros(s.in_dim + 1, s.out_dim))
            .collect();
        let masks = layer_specs
            .iter()
            .map(|s| Matrix::ones(s.in_dim + 1, s.out_dim))
            .collect();
        Ok(Network {
            layer_specs,
            weights,
            masks,
        })
    }

    /// Network from a dims chain with seeded uniform ±sqrt(6/(in+out)) init.
    pub fn init(
        dims: &[usize],
        activations: &[ActivationKind],
        rng: &mut RngState,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::param(format!(
                "need {} activations for {} dims",
                dims.len().saturating_sub(1),
                dims.len()
            )));
        }
        let specs: Vec<LayerSpec> = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &activation)| LayerSpec {
                in_dim: d[0],
                out_dim: d[1],
                activation,
            })
            .collect();
        let mut net = Network::new(specs)?;
        for l in 0..net.num_layers() {
            let LayerSpec { in_dim, out_dim, .. } = net.layer_specs[l];
            let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
            for x in net.weights[l].data_mut() {
                *x = T::of((rng.unit_uniform() * 2.0 - 1.0) * limit);
            }
        }
        Ok(net)
    }

    pub fn num_layers(&self) -> usize {
        self.layer_specs.len()
    }

    pub fn layer_spec(&self, l: usize) -> &LayerSpec {
        &self.layer_specs[l]
    }

    pub fn layer_specs(&self) -> &[LayerSpec] {
        &self.layer_specs
    }

    pub fn input_dim(&self) -> usize {
        self.layer_specs[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layer_specs[self.num_layers() - 1].out_dim
    }

    pub fn output_activation(&self) -> ActivationKind {
        self.layer_specs[self.num_layers() - 1].activation
    }

    /// Input dimension of every layer, the shape a noise field must match.
    pub fn layer_input_dims(&self) -> Vec<usize> {
        self.layer_specs.iter().map(|s| s.in_dim).collect()
    }

    /// Total weight count including bias rows.
    pub fn num_weights(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum()
    }

    pub fn weights(&self, l: usize) -> &Matrix<T> {
        &self.weights[l]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut Matrix<T> {
        &mut self.weights[l]
    }

    pub fn mask(&self, l: usize) -> &Matrix<T> {
        &self.masks[l]
    }

    pub fn mask_mut(&mut self, l: usize) -> &mut Matrix<T> {
        &mut self.masks[l]
    }

    /// `weights ⊙ mask`; what forward and backward passes actually see.
    pub fn effective_weights(&self, l: usize) -> Matrix<T> {
        self.weights[l]
            .hadamard(&self.masks[l])
            .expect("weights and mask always share a shape")
    }

    pub fn all_weights_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "forward",
                lhs_rows: x.rows(),
                lhs_cols: x.cols(),
                rhs_rows: self.input_dim() + 1,
                rhs_cols: self.layer_specs[0].out_dim,
            });
        }
        Ok(())
    }

    fn check_lambdas(&self, lambdas: &LambdaField<T>) -> Result<()> {
        if lambdas.num_layers() != self.num_layers() {
            return Err(Error::param(format!(
                "noise field has {} layers, network has {}",
                lambdas.num_layers(),
                self.num_layers()
            )));
        }
        for (l, spec) in self.layer_specs.iter().enumerate() {
            if lambdas.layer(l).len() != spec.in_dim + 1 {
                return Err(Error::param(format!(
                    "noise field layer {l} has length {}, expected {}",
                    lambdas.layer(l).len(),
                    spec.in_dim + 1
                )));
            }
        }
        Ok(())
    }

    /// All layer activations, input first, final output last.
    ///
    /// With `lambdas` absent (or all ones) this is the plain forward pass.
    pub fn forward(
        &self,
        x: &Matrix<T>,
        lambdas: Option<&LambdaField<T>>,
    ) -> Result<Vec<Matrix<T>>> {
        self.check_input(x)?;
        if let Some(f) = lambdas {
            self.check_lambdas(f)?;
        }
        let mut acts = Vec::with_capacity(self.num_layers() + 1);
        acts.push(x.clone());
        for l in 0..self.num_layers() {
            let corrupted = corrupt_augment(&acts[l], lambdas.map(|f| f.layer(l)));
            let mut z = corrupted.matmul(&self.effective_weights(l))?;
            apply_activation(self.layer_specs[l].activation, &mut z);
            acts.push(z);
        }
        Ok(acts)
    }

    /// Final output only.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward(x, None)?.pop().expect("forward returns output"))
    }

    /// Pre-activation of the final layer (no noise).
    pub fn forward_logits(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for l in 0..self.num_layers() {
            let corrupted = corrupt_augment(&h, None);
            let mut z = corrupted.matmul(&self.effective_weights(l))?;
            if l + 1 < self.num_layers() {
                apply_activation(self.layer_specs[l].activation, &mut z);
            }
            h = z;
        }
        Ok(h)
    }

    /// Gradients of the mean batch loss (plus optional Gaussian prior) with
    /// respect to every weight. Masked weights get exactly zero gradient.
    pub fn backprop(
        &self,
        x: &Matrix<T>,
        y: &Matrix<T>,
        lambdas: Option<&LambdaField<T>>,
        loss_kind: LossKind,
        prior: Option<GaussianPrior>,
    ) -> Result<Vec<Matrix<T>>> {
        let acts = self.forward(x, lambdas)?;
        self.backward_from_acts(&acts, y, lambdas, loss_kind, prior)
    }

    pub(crate) fn backward_from_acts(
        &self,
        acts: &[Matrix<T>],
        y: &Matrix<T>,
        lambdas: Option<&LambdaField<T>>,
        loss_kind: LossKind,
        prior: Option<GaussianPrior>,
    ) -> Result<Vec<Matrix<T>>> {
        let layers = self.num_layers();
        let output = &acts[layers];
        if output.shape() != y.shape() {
            return Err(Error::Shape {
                op: "backprop targets",
                lhs_rows: output.rows(),
                lhs_cols: output.cols(),
                rhs_rows: y.rows(),
                rhs_cols: y.cols(),
            });
        }
        check_loss_compat(loss_kind, self.output_activation(), output.cols())?;
        if let Some(p) = prior {
            if p.sigma0 <= 0.0 {
                return Err(Error::param("prior sigma0 must be positive"));
            }
            if p.n_total == 0 {
                return Err(Error::param("prior n_total must be positive"));
            }
        }

        let inv_batch = T::of(1.0 / output.rows() as f64);
        // d(mean loss)/d(pre-activation) of the output layer. Cross-entropy
        // against softmax or a single sigmoid, and squared error against an
        // identity output, all reduce to (prediction - target) / batch.
        let mut delta = output.sub(y)?.scale(inv_batch);
        match (loss_kind, self.output_activation()) {
            (LossKind::CrossEntropy, _) | (LossKind::SquaredError, ActivationKind::Identity) => {}
            (LossKind::SquaredError, act) => {
                delta = delta.zip_map(output, |d, a| d * activation_grad(act, a))?;
            }
        }

        let mut grads = vec![Matrix::zeros(1, 1); layers];
        for l in (0..layers).rev() {
            let corrupted = corrupt_augment(&acts[l], lambdas.map(|f| f.layer(l)));
            let mut grad = corrupted.transpose().matmul(&delta)?;
            if let Some(p) = prior {
                let shrink = T::of(1.0 / (p.sigma0 * p.sigma0 * p.n_total as f64));
                grad = grad.zip_map(&self.weights[l], |g, w| g + w * shrink)?;
            }
            grads[l] = grad.hadamard(&self.masks[l])?;

            if l > 0 {
                let w_eff = self.effective_weights(l);
                let d_corrupted = delta.matmul(&w_eff.transpose())?;
                let act = self.layer_specs[l - 1].activation;
                let in_dim = self.layer_specs[l].in_dim;
                let mut next = Matrix::zeros(d_corrupted.rows(), in_dim);
                for i in 0..d_corrupted.rows() {
                    let dc_row = d_corrupted.row(i);
                    let a_row = acts[l].row(i);
                    let out_row = next.row_mut(i);
                    for j in 0..in_dim {
                        let lam = lambdas.map_or(T::one(), |f| f.layer(l)[j]);
                        out_row[j] = dc_row[j] * lam * activation_grad(act, a_row[j]);
                    }
                }
                delta = next;
            }
        }
        Ok(grads)
    }
}

/// Append the constant-1 bias input and apply the layer's λ vector.
fn corrupt_augment<T: Scalar>(h: &Matrix<T>, lambda: Option<&[T]>) -> Matrix<T> {
    let (rows, cols) = h.shape();
    let mut out = Matrix::zeros(rows, cols + 1);
    for i in 0..rows {
        let src = h.row(i);
        let dst = out.row_mut(i);
        match lambda {
            Some(lam) => {
                for j in 0..cols {
                    dst[j] = src[j] * lam[j];
                }
                dst[cols] = lam[cols];
            }
            None => {
                dst[..cols].copy_from_slice(src);
                dst[cols] = T::one();
            }
        }
    }
    out
}

fn apply_activation<T: Scalar>(kind: ActivationKind, z: &mut Matrix<T>) {
    match kind {
        ActivationKind::Identity => {}
        ActivationKind::Sigmoid => {
            for x in z.data_mut() {
                *x = T::one() / (T::one() + (-*x).exp());
            }
        }
        ActivationKind::Tanh => {
            for x in z.data_mut() {
                *x = x.tanh();
            }
        }
        ActivationKind::Relu => {
            for x in z.data_mut() {
                *x = x.max(T::zero());
            }
        }
        ActivationKind::Softmax => {
            for i in 0..z.rows() {
                let row = z.row_mut(i);
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                for x in row.iter_mut() {
                    *x = *x / sum;
                }
            }
        }
    }
}

/// Derivative of the activation expressed through its output value.
fn activation_grad<T: Scalar>(kind: ActivationKind, a: T) -> T {
    match kind {
        ActivationKind::Identity => T::one(),
        ActivationKind::Sigmoid => a * (T::one() - a),
        ActivationKind::Tanh => T::one() - a * a,
        ActivationKind::Relu => {
            if a > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        ActivationKind::Softmax => {
            unreachable!("softmax gradient is fused with cross-entropy")
        }
    }
}

fn check_loss_compat(loss: LossKind, act: ActivationKind, out_cols: usize) -> Result<()> {
    match loss {
        LossKind::CrossEntropy => {
            let ok = act == ActivationKind::Softmax
                || (act == ActivationKind::Sigmoid && out_cols == 1);
            if !ok {
                return Err(Error::param(
                    "cross-entropy needs a softmax output or a single sigmoid unit",
                ));
            }
        }
        LossKind::SquaredError => {
            if act == ActivationKind::Softmax {
                return Err(Error::param("squared error is not supported with softmax"));
            }
        }
    }
    Ok(())
}

const PROB_CLAMP: f64 = 1e-12;

/// Mean loss over the batch.
pub fn loss<T: Scalar>(pred: &Matrix<T>, target: &Matrix<T>, kind: LossKind) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            op: "loss",
            lhs_rows: pred.rows(),
            lhs_cols: pred.cols(),
            rhs_rows: target.rows(),
            rhs_cols: target.cols(),
        });
    }
    let batch = T::of(pred.rows() as f64);
    match kind {
        LossKind::SquaredError => {
            let half = T::of(0.5);
            let total = pred
                .data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| half * (p - t) * (p - t))
                .sum::<T>();
            Ok(total / batch)
        }
        LossKind::CrossEntropy => {
            let lo = T::of(PROB_CLAMP);
            let hi = T::one() - lo;
            let binary = pred.cols() == 1;
            let mut total = T::zero();
            for (&p, &t) in pred.data().iter().zip(target.data()) {
                if p < -lo || p > T::one() + lo {
                    return Err(Error::numeric(format!(
                        "prediction {p} is not a probability"
                    )));
                }
                let p = p.min(hi).max(lo);
                total = total - t * p.ln();
                if binary {
                    total = total - (T::one() - t) * (T::one() - p).ln();
                }
            }
            Ok(total / batch)
        }
    }
}
