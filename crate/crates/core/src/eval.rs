//! Test metrics on a clean (noise-free) forward pass.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Fraction of misclassified examples.
    ErrorRate,
    /// Absolute number of misclassified examples.
    ErrorCount,
    /// Root mean squared error over all target entries.
    Rmse,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::ErrorRate => "error_rate",
            Metric::ErrorCount => "error_count",
            Metric::Rmse => "rmse",
        }
    }

    pub fn valid_for(self, task: Task) -> bool {
        match self {
            Metric::ErrorRate | Metric::ErrorCount => task == Task::Classification,
            Metric::Rmse => task == Task::Regression,
        }
    }
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Evaluate `net` on `data` with a plain forward pass.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset<T>, metric: Metric) -> Result<f64> {
    if !metric.valid_for(data.task) {
        return Err(Error::param(format!(
            "metric {} does not apply to {:?} tasks",
            metric.name(),
            data.task
        )));
    }
    let pred = net.predict(&data.features)?;
    match metric {
        Metric::ErrorRate | Metric::ErrorCount => {
            let mut errors = 0usize;
            for i in 0..pred.rows() {
                if argmax(pred.row(i)) != argmax(data.targets.row(i)) {
                    errors += 1;
                }
            }
            Ok(match metric {
                Metric::ErrorCount => errors as f64,
                _ => errors as f64 / pred.rows() as f64,
            })
        }
        Metric::Rmse => {
            let mut total = 0.0;
            for (&p, &t) in pred.data().iter().zip(data.targets.data()) {
                let d = p.as_f64() - t.as_f64();
                total += d * d;
            }
            Ok((total / pred.rows() as f64).sqrt())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ActivationKind;
    use crate::numerics::matrix::Matrix;
    use crate::numerics::rng::RngState;

    #[test]
    fn metrics_reject_mismatched_tasks() {
        let mut rng = RngState::new(1);
        let net =
            Network::<f64>::init(&[2, 1], &[ActivationKind::Identity], &mut rng).unwrap();
        let ds = Dataset::new(
            Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(),
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
            Task::Regression,
        )
        .unwrap();
        assert!(evaluate(&net, &ds, Metric::ErrorRate).is_err());
        assert!(evaluate(&net, &ds, Metric::Rmse).is_ok());
    }

    #[test]
    fn error_count_and_rate_agree() {
        let mut net = Network::<f64>::new(vec![crate::network::LayerSpec {
            in_dim: 1,
            out_dim: 2,
            activation: ActivationKind::Softmax,
        }])
        .unwrap();
        // output argmax follows the sign of the input
        net.weights_mut(0).set(0, 0, -5.0);
        net.weights_mut(0).set(0, 1, 5.0);
        let feats = Matrix::from_rows(&[vec![-1.0], vec![1.0], vec![1.0], vec![-1.0]]).unwrap();
        let targets = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0], // wrong on purpose
            vec![1.0, 0.0],
        ])
        .unwrap();
        let ds = Dataset::new(feats, targets, Task::Classification).unwrap();
        assert_eq!(evaluate(&net, &ds, Metric::ErrorCount).unwrap(), 1.0);
        assert_eq!(evaluate(&net, &ds, Metric::ErrorRate).unwrap(), 0.25);
    }
}
