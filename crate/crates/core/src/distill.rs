//! Soft-target retraining: a fresh, smaller student trained on the
//! teacher's output distributions.

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::network::{
    train_mn, ActivationKind, LossKind, LrSchedule, Network, TrainConfig,
};
use crate::noise::NoiseSpec;
use crate::numerics::matrix::Matrix;
use crate::numerics::rng::RngState;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct DistillConfig {
    /// Student dims chain, same depth as the teacher.
    pub student_layer_dims: Vec<usize>,
    /// Activations per layer, normally copied from the teacher.
    pub activations: Vec<ActivationKind>,
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
}

/// Temperature-scaled softmax outputs of a classification teacher.
///
/// The teacher is expected to be expectation-corrected already if it was
/// trained under multiplicative noise. `temperature → 0` approaches one-hot
/// argmax targets; `temperature = 1` is the teacher's plain softmax output.
pub fn soft_targets<T: Scalar>(
    teacher: &Network<T>,
    x: &Matrix<T>,
    temperature: f64,
) -> Result<Matrix<T>> {
    if teacher.output_activation() != ActivationKind::Softmax {
        return Err(Error::UnsupportedTask(
            "soft targets need a classification (softmax) teacher; soft-target \
             retraining does not carry over to regression"
                .to_string(),
        ));
    }
    if !(temperature > 0.0) {
        return Err(Error::param(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let logits = teacher.forward_logits(x)?;
    let inv_t = T::of(1.0 / temperature);
    let mut soft = logits.scale(inv_t);
    for i in 0..soft.rows() {
        let row = soft.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    Ok(soft)
}

/// Train a fresh student against soft targets with plain cross-entropy and
/// no multiplicative noise.
pub fn retrain_student<T: Scalar>(
    cfg: &DistillConfig,
    x: &Matrix<T>,
    soft: &Matrix<T>,
    rng: &mut RngState,
) -> Result<Network<T>> {
    if cfg.student_layer_dims.len() < 2 {
        return Err(Error::param("student needs at least input and output dims"));
    }
    if !(cfg.temperature > 0.0) {
        return Err(Error::param("temperature must be positive"));
    }
    let student = Network::<T>::init(&cfg.student_layer_dims, &cfg.activations, rng)?;
    let data = Dataset::new(x.clone(), soft.clone(), Task::Classification)?;
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        loss: LossKind::CrossEntropy,
    };
    let (trained, _) = train_mn(
        &student,
        &data,
        &NoiseSpec::Constant { c: 1.0 },
        &train_cfg,
        rng,
    )?;
    Ok(trained)
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Student dims for a parameter budget: input and output dims are kept,
/// hidden widths are scaled by one shared multiplier, rounded down to the
/// largest widths whose parameter count fits within `budget × teacher`.
pub fn student_dims_for_budget(teacher_dims: &[usize], budget: f64) -> Result<Vec<usize>> {
    if teacher_dims.len() < 2 {
        return Err(Error::param("teacher dims chain too short"));
    }
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(Error::param(format!(
            "parameter budget must be in (0, 1], got {budget}"
        )));
    }
    if budget == 1.0 || teacher_dims.len() == 2 {
        return Ok(teacher_dims.to_vec());
    }
    let target = budget * param_count(teacher_dims) as f64;
    let dims_for = |alpha: f64| -> Vec<usize> {
        let mut dims = teacher_dims.to_vec();
        for d in dims[1..teacher_dims.len() - 1].iter_mut() {
            *d = ((*d as f64 * alpha).round() as usize).max(1);
        }
        dims
    };
    // params(alpha) is monotone; bisect for the largest alpha that fits
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if param_count(&dims_for(mid)) as f64 <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(dims_for(lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn teacher(rng: &mut RngState) -> Network<f64> {
        let mut net = Network::init(
            &[3, 5, 4],
            &[ActivationKind::Tanh, ActivationKind::Softmax],
            rng,
        )
        .unwrap();
        // spread the logits so argmax is unambiguous
        for w in net.weights_mut(1).data_mut() {
            *w *= 3.0;
        }
        net
    }

    #[test]
    fn soft_target_rows_sum_to_one() {
        let mut rng = RngState::new(90);
        let t = teacher(&mut rng);
        let x = Matrix::from_vec(8, 3, (0..24).map(|i| (i as f64) * 0.3 - 3.0).collect()).unwrap();
        for temp in [0.25, 1.0, 4.0] {
            let soft = soft_targets(&t, &x, temp).unwrap();
            for i in 0..soft.rows() {
                let sum: f64 = soft.row(i).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "T={temp}, row sum {sum}");
                assert!(soft.row(i).iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn unit_temperature_is_the_plain_teacher_output() {
        let mut rng = RngState::new(91);
        let t = teacher(&mut rng);
        let x = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let soft = soft_targets(&t, &x, 1.0).unwrap();
        let direct = t.predict(&x).unwrap();
        assert!(soft.max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn near_zero_temperature_approaches_argmax_one_hot() {
        let mut rng = RngState::new(92);
        let t = teacher(&mut rng);
        let x = Matrix::from_rows(&[vec![1.0, 0.3, -0.8], vec![-2.0, 0.9, 0.4]]).unwrap();
        let soft = soft_targets(&t, &x, 1e-3).unwrap();
        let plain = t.predict(&x).unwrap();
        for i in 0..x.rows() {
            let arg = plain
                .row(i)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(soft.get(i, arg) > 0.999, "row {i} not near one-hot");
        }
    }

    #[test]
    fn regression_teacher_is_unsupported() {
        let mut rng = RngState::new(93);
        let t =
            Network::<f64>::init(&[3, 2, 1], &[ActivationKind::Tanh, ActivationKind::Identity], &mut rng)
                .unwrap();
        let x = Matrix::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            soft_targets(&t, &x, 1.0),
            Err(Error::UnsupportedTask(_))
        ));
    }

    #[test]
    fn zero_epochs_returns_a_fresh_deterministic_student() {
        let mut rng = RngState::new(94);
        let t = teacher(&mut rng);
        let x = Matrix::from_vec(6, 3, (0..18).map(|i| i as f64 * 0.1).collect()).unwrap();
        let soft = soft_targets(&t, &x, 1.0).unwrap();
        let cfg = DistillConfig {
            student_layer_dims: vec![3, 5, 4],
            activations: vec![ActivationKind::Tanh, ActivationKind::Softmax],
            temperature: 1.0,
            epochs: 0,
            batch_size: 4,
            lr: LrSchedule::new(0.1),
        };
        let a = retrain_student(&cfg, &x, &soft, &mut RngState::new(7)).unwrap();
        let b = retrain_student(&cfg, &x, &soft, &mut RngState::new(7)).unwrap();
        assert_eq!(a, b);
        // zero epochs means the init is untouched
        let init = Network::<f64>::init(
            &cfg.student_layer_dims,
            &cfg.activations,
            &mut RngState::new(7),
        )
        .unwrap();
        assert_eq!(a, init);
    }

    #[test]
    fn budget_one_reproduces_the_teacher_dims() {
        let dims = student_dims_for_budget(&[784, 100, 10], 1.0).unwrap();
        assert_eq!(dims, vec![784, 100, 10]);
    }

    #[test]
    fn half_budget_hand_check() {
        // teacher [4,10,2]: 5*10 + 11*2 = 72 params; target 36
        // student h: 5h + (h+1)*2 = 7h + 2 <= 36 -> h = 4
        let dims = student_dims_for_budget(&[4, 10, 2], 0.5).unwrap();
        assert_eq!(dims, vec![4, 4, 2]);
        assert!(param_count(&dims) as f64 <= 36.0);
    }

    #[test]
    fn budgets_never_exceed_the_target() {
        for &b in &[0.1, 0.25, 0.5, 0.75, 0.9] {
            let teacher_dims = [784usize, 100, 10];
            let dims = student_dims_for_budget(&teacher_dims, b).unwrap();
            assert!(param_count(&dims) as f64 <= b * param_count(&teacher_dims) as f64 + 1e-9);
            assert_eq!(dims[0], 784);
            assert_eq!(dims[2], 10);
        }
    }
}
