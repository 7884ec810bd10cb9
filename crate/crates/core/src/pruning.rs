//! Posterior-moment weight pruning: scoring rules, mask application, and
//! fraction sweeps.
//!
//! Signal-to-noise orders weights by |μ|/σ and treats a large posterior
//! standard deviation as evidence of a noisy, disposable weight.
//! Signal-plus-robustness orders by |μ|+σ and treats the same spread as
//! rescaling robustness worth keeping. The two rules rank any pair with
//! equal |μ| and different σ in opposite order, which is the whole contest.

use crate::error::{Error, Result};
use crate::eval::{evaluate, Metric};
use crate::data::Dataset;
use crate::network::Network;
use crate::noise::{expectation_correction, NoiseSpec};
use crate::numerics::matrix::Matrix;
use crate::posterior::PosteriorMoments;
use crate::scalar::Scalar;

pub const DEFAULT_SNR_SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PruneRule {
    /// Signal-to-noise: |μ| / max(σ, floor). Low values pruned first.
    Snr { sigma_floor: f64 },
    /// Signal-plus-robustness: |μ| + σ.
    Spr,
    /// Plain magnitude: |μ|.
    Magnitude,
}

impl PruneRule {
    pub fn snr() -> Self {
        PruneRule::Snr {
            sigma_floor: DEFAULT_SNR_SIGMA_FLOOR,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PruneRule::Snr { .. } => "snr",
            PruneRule::Spr => "spr",
            PruneRule::Magnitude => "magnitude",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let PruneRule::Snr { sigma_floor } = self {
            if !(*sigma_floor > 0.0) {
                return Err(Error::param(format!(
                    "snr sigma floor must be positive, got {sigma_floor}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-weight scores; lower scores are pruned earlier.
pub fn score_weights<T: Scalar>(
    moments: &PosteriorMoments<T>,
    rule: &PruneRule,
) -> Result<Vec<Matrix<T>>> {
    rule.validate()?;
    let mut scores = Vec::with_capacity(moments.num_layers());
    for l in 0..moments.num_layers() {
        let mean = moments.mean(l);
        let var = moments.variance(l)?;
        let score = match *rule {
            PruneRule::Snr { sigma_floor } => {
                let floor = T::of(sigma_floor);
                mean.zip_map(&var, |m, v| m.abs() / v.sqrt().max(floor))?
            }
            PruneRule::Spr => mean.zip_map(&var, |m, v| m.abs() + v.sqrt())?,
            PruneRule::Magnitude => mean.map(|m| m.abs()),
        };
        scores.push(score);
    }
    Ok(scores)
}

#[derive(Debug, Clone, Copy)]
pub struct PruneOptions {
    /// Exclude bias rows from pruning (they count neither toward the weight
    /// total nor the pruned set).
    pub exempt_bias: bool,
}

impl Default for PruneOptions {
    fn default() -> Self {
        PruneOptions { exempt_bias: false }
    }
}

/// Zero out (weight and mask) the lowest-scoring `⌊fraction · W⌋` weights,
/// ties broken by (layer, row, col) order. Pure in its inputs: calling it
/// twice with the same arguments gives the same network.
pub fn prune_to_fraction<T: Scalar>(
    net: &Network<T>,
    scores: &[Matrix<T>],
    fraction: f64,
    opts: PruneOptions,
) -> Result<Network<T>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::param(format!(
            "prune fraction must be in [0, 1], got {fraction}"
        )));
    }
    if scores.len() != net.num_layers() {
        return Err(Error::param(format!(
            "{} score layers for {} network layers",
            scores.len(),
            net.num_layers()
        )));
    }
    let mut candidates: Vec<(T, usize, usize, usize)> = Vec::new();
    for l in 0..net.num_layers() {
        let w = net.weights(l);
        if scores[l].shape() != w.shape() {
            return Err(Error::Shape {
                op: "prune scores",
                lhs_rows: scores[l].rows(),
                lhs_cols: scores[l].cols(),
                rhs_rows: w.rows(),
                rhs_cols: w.cols(),
            });
        }
        let bias_row = net.layer_spec(l).in_dim;
        for r in 0..w.rows() {
            if opts.exempt_bias && r == bias_row {
                continue;
            }
            for c in 0..w.cols() {
                candidates.push((scores[l].get(r, c), l, r, c));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("scores are finite")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let k = (fraction * candidates.len() as f64).floor() as usize;
    let mut pruned = net.clone();
    for &(_, l, r, c) in candidates.iter().take(k) {
        pruned.weights_mut(l).set(r, c, T::zero());
        pruned.mask_mut(l).set(r, c, T::zero());
    }
    Ok(pruned)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrunePoint {
    pub fraction_pruned: f64,
    pub metric_name: &'static str,
    pub metric_value: f64,
    pub n_weights_total: usize,
    pub n_weights_pruned: usize,
}

/// One sweep's worth of (fraction, metric) records for a single rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneCurve {
    pub rule: String,
    pub points: Vec<PrunePoint>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub prune: PruneOptions,
    /// Expectation-correct the base weights before evaluation (for nets
    /// evaluated directly after multiplicative-noise training).
    pub correction: Option<NoiseSpec>,
}

/// Prune a fresh copy of `net` at each fraction and record the metric.
///
/// Each point is a pure function of `(net, scores, fraction)`; the sweep
/// never prunes cumulatively.
pub fn sweep<T: Scalar>(
    net: &Network<T>,
    moments: &PosteriorMoments<T>,
    rule: &PruneRule,
    fractions: &[f64],
    eval_data: &Dataset<T>,
    metric: Metric,
    opts: &SweepOptions,
) -> Result<PruneCurve> {
    if fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("prune fractions must be strictly increasing"));
    }
    if !moments.matches(net) {
        return Err(Error::param(
            "posterior moments do not match the network's layer shapes",
        ));
    }
    let base = match &opts.correction {
        Some(spec) => expectation_correction(net, spec)?,
        None => net.clone(),
    };
    let scores = score_weights(moments, rule)?;
    let total = if opts.prune.exempt_bias {
        (0..net.num_layers())
            .map(|l| net.layer_spec(l).in_dim * net.layer_spec(l).out_dim)
            .sum()
    } else {
        net.num_weights()
    };

    let mut points = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let pruned = prune_to_fraction(&base, &scores, fraction, opts.prune)?;
        let metric_value = evaluate(&pruned, eval_data, metric)?;
        if !metric_value.is_finite() {
            return Err(Error::numeric(format!(
                "metric {} is not finite at fraction {fraction}",
                metric.name()
            )));
        }
        points.push(PrunePoint {
            fraction_pruned: fraction,
            metric_name: metric.name(),
            metric_value,
            n_weights_total: total,
            n_weights_pruned: (fraction * total as f64).floor() as usize,
        });
    }
    Ok(PruneCurve {
        rule: rule.name().to_string(),
        points,
    })
}

/// Largest recorded fraction whose metric stays within
/// `tolerance_multiplier × baseline` (error-style metrics: lower is
/// better). Zero when no recorded point qualifies.
pub fn breakdown_fraction(
    curve: &PruneCurve,
    baseline_metric: f64,
    tolerance_multiplier: f64,
) -> f64 {
    let threshold = baseline_metric * tolerance_multiplier;
    curve
        .points
        .iter()
        .filter(|p| p.metric_value <= threshold)
        .map(|p| p.fraction_pruned)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ActivationKind, LossKind, LrSchedule};
    use crate::numerics::rng::RngState;
    use crate::posterior::{collect_moments, SgldConfig};
    use proptest::prelude::*;

    /// Moments with exactly chosen mean/σ per weight, built by recording
    /// two crafted networks (mean μ ± σ gives sample variance σ²... with
    /// two samples, variance = 2σ²/(2-1)... so record mean ± σ/√2).
    fn crafted_moments(
        net: &Network<f64>,
        mus: &[Vec<f64>],
        sigmas: &[Vec<f64>],
    ) -> PosteriorMoments<f64> {
        let mut lo = net.clone();
        let mut hi = net.clone();
        for l in 0..net.num_layers() {
            for (i, (&m, &s)) in mus[l].iter().zip(&sigmas[l]).enumerate() {
                let half = s / 2.0f64.sqrt();
                lo.weights_mut(l).data_mut()[i] = m - half;
                hi.weights_mut(l).data_mut()[i] = m + half;
            }
        }
        let mut moments = PosteriorMoments::for_network(net);
        moments.record(&lo);
        moments.record(&hi);
        moments
    }

    fn one_layer_net() -> Network<f64> {
        Network::new(vec![crate::network::LayerSpec {
            in_dim: 2,
            out_dim: 2,
            activation: ActivationKind::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn score_formulas_are_the_documented_ones() {
        let net = one_layer_net();
        // weight grid is 3x2: rows (x1, x2, bias) x cols
        let mus = vec![vec![0.1, 0.3, 1.0, 1.0, 1.0, 1.0]];
        let sigmas = vec![vec![1.0, 0.0, 0.1, 2.0, 0.0, 0.0]];
        let moments = crafted_moments(&net, &mus, &sigmas);

        let snr = score_weights(&moments, &PruneRule::snr()).unwrap();
        let spr = score_weights(&moments, &PruneRule::Spr).unwrap();
        let mag = score_weights(&moments, &PruneRule::Magnitude).unwrap();

        // μ=0.1, σ=1.0: SNR prunes it early, SPR keeps it
        assert!((snr[0].data()[0] - 0.1).abs() < 1e-12);
        assert!((spr[0].data()[0] - 1.1).abs() < 1e-12);
        // σ=0, μ=0.3 with floor 1e-8: SNR 3e7
        assert!((snr[0].data()[1] - 3e7).abs() / 3e7 < 1e-9);
        assert!((spr[0].data()[1] - 0.3).abs() < 1e-12);
        assert_eq!(mag[0].data()[1], 0.3);

        // equal |μ|, σ_a < σ_b: SNR prunes b first, SPR prunes a first
        let (a, b) = (2, 3);
        assert!(snr[0].data()[a] > snr[0].data()[b]);
        assert!(spr[0].data()[a] < spr[0].data()[b]);
    }

    #[test]
    fn fraction_zero_is_bit_identical_and_fraction_one_zeroes_everything() {
        let mut rng = RngState::new(80);
        let net = Network::<f64>::init(
            &[3, 4, 2],
            &[ActivationKind::Tanh, ActivationKind::Softmax],
            &mut rng,
        )
        .unwrap();
        let mut moments = PosteriorMoments::for_network(&net);
        moments.record(&net);
        let mut jitter = net.clone();
        for l in 0..jitter.num_layers() {
            for w in jitter.weights_mut(l).data_mut() {
                *w += 0.01;
            }
        }
        moments.record(&jitter);
        let scores = score_weights(&moments, &PruneRule::Spr).unwrap();

        let same = prune_to_fraction(&net, &scores, 0.0, PruneOptions::default()).unwrap();
        assert_eq!(same, net);
        let x = Matrix::from_rows(&[vec![0.2, -0.4, 0.6]]).unwrap();
        assert_eq!(same.predict(&x).unwrap(), net.predict(&x).unwrap());

        let dead = prune_to_fraction(&net, &scores, 1.0, PruneOptions::default()).unwrap();
        for l in 0..dead.num_layers() {
            assert!(dead.weights(l).data().iter().all(|&w| w == 0.0));
        }
        // softmax of all-zero logits: uniform prediction
        let p = dead.predict(&x).unwrap();
        for &v in p.row(0) {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn exactly_the_bottom_half_is_masked() {
        let net = one_layer_net(); // 6 weights
        let mus = vec![vec![0.6, 0.1, 0.5, 0.2, 0.4, 0.3]];
        let sigmas = vec![vec![0.0; 6]];
        let moments = crafted_moments(&net, &mus, &sigmas);
        let scores = score_weights(&moments, &PruneRule::Magnitude).unwrap();
        let pruned = prune_to_fraction(&net, &scores, 0.5, PruneOptions::default()).unwrap();
        let masked: Vec<usize> = pruned.mask(0)
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 0.0)
            .map(|(i, _)| i)
            .collect();
        // scores 0.1, 0.2, 0.3 live at flat indices 1, 3, 5
        assert_eq!(masked, vec![1, 3, 5]);
    }

    #[test]
    fn bias_exemption_skips_the_bias_row() {
        let net = one_layer_net();
        let mus = vec![vec![0.9, 0.9, 0.9, 0.9, 0.0, 0.0]]; // bias row has lowest |μ|
        let sigmas = vec![vec![0.0; 6]];
        let moments = crafted_moments(&net, &mus, &sigmas);
        let scores = score_weights(&moments, &PruneRule::Magnitude).unwrap();
        let pruned = prune_to_fraction(
            &net,
            &scores,
            0.5,
            PruneOptions { exempt_bias: true },
        )
        .unwrap();
        // bias row untouched, two of the four non-bias weights masked
        assert!(pruned.mask(0).row(2).iter().all(|&m| m == 1.0));
        let masked = pruned.mask(0).data().iter().filter(|&&m| m == 0.0).count();
        assert_eq!(masked, 2);
    }

    #[test]
    fn breakdown_fraction_edge_cases() {
        let mk = |pts: &[(f64, f64)]| PruneCurve {
            rule: "spr".into(),
            points: pts
                .iter()
                .map(|&(f, v)| PrunePoint {
                    fraction_pruned: f,
                    metric_name: "error_rate",
                    metric_value: v,
                    n_weights_total: 10,
                    n_weights_pruned: (10.0 * f) as usize,
                })
                .collect(),
        };
        // flat curve: last fraction survives
        let flat = mk(&[(0.0, 2.0), (0.3, 2.0), (0.9, 2.0)]);
        assert_eq!(breakdown_fraction(&flat, 2.0, 1.5), 0.9);
        // threshold crossing
        let cross = mk(&[(0.0, 2.0), (0.5, 2.5), (0.6, 10.0)]);
        assert_eq!(breakdown_fraction(&cross, 2.0, 1.5), 0.5);
        // strictly increasing from the baseline with multiplier 1.0
        let strict = mk(&[(0.0, 2.0), (0.2, 2.1), (0.4, 3.0)]);
        assert_eq!(breakdown_fraction(&strict, 2.0, 1.0), 0.0);
    }

    #[test]
    fn sweep_on_fraction_zero_returns_the_baseline_metric() {
        let mut rng = RngState::new(81);
        let data = crate::data::synth_blobs::<f64>(60, 3, 2, 3.0, 0.8, &mut rng).unwrap();
        let net = Network::init(
            &[3, 4, 2],
            &[ActivationKind::Tanh, ActivationKind::Softmax],
            &mut rng,
        )
        .unwrap();
        let cfg = SgldConfig {
            lr: LrSchedule::constant(1e-3),
            noise_variance_scale: 0.5,
            prior_sigma0: 1.0,
            burn_in: 20,
            thin: 1,
            n_samples: 30,
            batch_size: 60,
        };
        let (moments, _) =
            collect_moments(&net, &data, LossKind::CrossEntropy, &cfg, &mut rng).unwrap();
        let curve = sweep(
            &net,
            &moments,
            &PruneRule::snr(),
            &[0.0],
            &data,
            Metric::ErrorRate,
            &SweepOptions::default(),
        )
        .unwrap();
        let baseline = evaluate(&net, &data, Metric::ErrorRate).unwrap();
        assert_eq!(curve.points[0].metric_value, baseline);
    }

    #[test]
    fn spr_with_zero_sigma_degenerates_to_magnitude() {
        let mut rng = RngState::new(82);
        let data = crate::data::synth_blobs::<f64>(40, 3, 2, 3.0, 0.8, &mut rng).unwrap();
        let net = Network::init(
            &[3, 5, 2],
            &[ActivationKind::Tanh, ActivationKind::Softmax],
            &mut rng,
        )
        .unwrap();
        // zero-variance moments: record the same net twice
        let mut moments = PosteriorMoments::for_network(&net);
        moments.record(&net);
        moments.record(&net);
        let fractions: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let opts = SweepOptions::default();
        let spr = sweep(&net, &moments, &PruneRule::Spr, &fractions, &data, Metric::ErrorRate, &opts)
            .unwrap();
        let mag = sweep(
            &net,
            &moments,
            &PruneRule::Magnitude,
            &fractions,
            &data,
            Metric::ErrorRate,
            &opts,
        )
        .unwrap();
        for (a, b) in spr.points.iter().zip(&mag.points) {
            assert_eq!(a.metric_value, b.metric_value);
        }
    }

    #[test]
    fn unsorted_fractions_are_rejected() {
        let net = one_layer_net();
        let mut moments = PosteriorMoments::for_network(&net);
        moments.record(&net);
        moments.record(&net);
        let mut rng = RngState::new(83);
        let data = crate::data::synth_blobs::<f64>(10, 2, 2, 2.0, 0.5, &mut rng).unwrap();
        let r = sweep(
            &net,
            &moments,
            &PruneRule::Spr,
            &[0.2, 0.1],
            &data,
            Metric::ErrorRate,
            &SweepOptions::default(),
        );
        assert!(r.is_err());
    }

    proptest! {
        /// Masked sets grow monotonically with the fraction, and pruning is
        /// idempotent at a fixed fraction.
        #[test]
        fn mask_growth_is_monotone_and_idempotent(seed in 0u64..500, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let mut rng = RngState::new(seed);
            let net = Network::<f64>::init(
                &[3, 4, 2],
                &[ActivationKind::Relu, ActivationKind::Identity],
                &mut rng,
            ).unwrap();
            let mut a = net.clone();
            let mut b = net.clone();
            for l in 0..net.num_layers() {
                for w in a.weights_mut(l).data_mut() { *w += rng.unit_uniform() * 0.1; }
                for w in b.weights_mut(l).data_mut() { *w -= rng.unit_uniform() * 0.1; }
            }
            let mut moments = PosteriorMoments::for_network(&net);
            moments.record(&a);
            moments.record(&b);
            let scores = score_weights(&moments, &PruneRule::Spr).unwrap();
            let opts = PruneOptions::default();

            let p_lo = prune_to_fraction(&net, &scores, lo, opts).unwrap();
            let p_hi = prune_to_fraction(&net, &scores, hi, opts).unwrap();
            for l in 0..net.num_layers() {
                for (m_lo, m_hi) in p_lo.mask(l).data().iter().zip(p_hi.mask(l).data()) {
                    // masked at lo implies masked at hi
                    prop_assert!(!(*m_lo == 0.0 && *m_hi != 0.0));
                }
            }

            let again = prune_to_fraction(&p_hi, &scores, hi, opts).unwrap();
            prop_assert_eq!(again, p_hi);
        }

        /// For any pair with equal |μ| and distinct σ, SNR and SPR rank
        /// them in opposite orders.
        #[test]
        fn snr_and_spr_reverse_on_equal_means(mu in 0.01f64..10.0, s1 in 0.001f64..5.0, s2 in 0.001f64..5.0) {
            prop_assume!((s1 - s2).abs() > 1e-9);
            let snr = |s: f64| mu / s.max(DEFAULT_SNR_SIGMA_FLOOR);
            let spr = |s: f64| mu + s;
            prop_assert_eq!(snr(s1) > snr(s2), spr(s1) < spr(s2));
        }
    }
}
