//! The two equivalent scale-mixture parameterizations, as samplers.
//!
//! Product form: draw λ from the noise distribution and an independent
//! w ~ N(0, σ₀²), return λ·w. Hierarchical form: draw λ first, then
//! v ~ N(0, σ₀²λ²). The two are equal in distribution; the verification
//! suite checks that empirically, so the implementations are kept as
//! separate code paths on purpose.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::numerics::rng::RngState;
use crate::scalar::Scalar;

fn check_sampler_args(spec: &NoiseSpec, sigma0: f64, n: usize) -> Result<()> {
    spec.validate()?;
    if !(sigma0 > 0.0) {
        return Err(Error::param(format!("sigma0 must be > 0, got {sigma0}")));
    }
    if n == 0 {
        return Err(Error::param("sample count must be at least 1"));
    }
    Ok(())
}

/// `n` draws of λ·w with λ from the noise distribution and w ~ N(0, σ₀²).
pub fn gsm_sample_product<T: Scalar>(
    spec: &NoiseSpec,
    sigma0: f64,
    n: usize,
    rng: &mut RngState,
) -> Result<Vec<T>> {
    check_sampler_args(spec, sigma0, n)?;
    Ok((0..n)
        .map(|_| {
            let lambda = spec.sample(rng);
            let z: f64 = rng.sample(StandardNormal);
            T::of(lambda * (sigma0 * z))
        })
        .collect())
}

/// `n` draws of v ~ N(0, σ₀²λ²) with λ drawn first from the noise
/// distribution.
pub fn gsm_sample_hierarchical<T: Scalar>(
    spec: &NoiseSpec,
    sigma0: f64,
    n: usize,
    rng: &mut RngState,
) -> Result<Vec<T>> {
    check_sampler_args(spec, sigma0, n)?;
    Ok((0..n)
        .map(|_| {
            let lambda = spec.sample(rng);
            let sd = sigma0 * lambda.abs();
            let z: f64 = rng.sample(StandardNormal);
            T::of(sd * z)
        })
        .collect())
}

/// Two-sample Kolmogorov–Smirnov statistic: the supremum distance between
/// the empirical CDFs. Sorts both inputs in place.
pub fn ecdf_sup_distance(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    b.sort_unstable_by(|x, y| x.partial_cmp(y).expect("finite samples"));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup = 0.0f64;
    while i < n || j < m {
        let av = if i < n { a[i] } else { f64::INFINITY };
        let bv = if j < m { b[j] } else { f64::INFINITY };
        let v = av.min(bv);
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        let d = (i as f64 / n as f64 - j as f64 / m as f64).abs();
        if d > sup {
            sup = d;
        }
    }
    sup
}

/// Empirical raw moment E[xᵏ] and its standard error.
pub fn raw_moment_with_se(xs: &[f64], k: u32) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|x| x.powi(k as i32)).sum::<f64>() / n;
    let var = xs
        .iter()
        .map(|x| (x.powi(k as i32) - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_noise_product_draws_are_standard_normal() {
        let mut rng = RngState::new(30);
        let xs: Vec<f64> =
            gsm_sample_product(&NoiseSpec::Constant { c: 1.0 }, 1.0, 1_000_000, &mut rng).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.01, "variance {var}");
        assert!(mean.abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn constant_noise_hierarchical_matches_scaled_gaussian() {
        let mut rng = RngState::new(31);
        let xs: Vec<f64> =
            gsm_sample_hierarchical(&NoiseSpec::Constant { c: 2.0 }, 1.5, 200_000, &mut rng)
                .unwrap();
        // v ~ N(0, c² σ₀²) = N(0, 9)
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((var - 9.0).abs() / 9.0 < 0.02, "variance {var}");
    }

    #[test]
    fn bernoulli_product_variance_and_kurtosis() {
        let mut rng = RngState::new(32);
        let spec = NoiseSpec::Bernoulli { keep_prob: 0.5 };
        let xs: Vec<f64> = gsm_sample_product(&spec, 1.0, 1_000_000, &mut rng).unwrap();
        // Var = E[λ²] σ₀² = 0.5; kurtosis = 3 E[λ⁴]/E[λ²]² = 6
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / xs.len() as f64;
        let kurt = m4 / (var * var);
        assert!((var - 0.5).abs() / 0.5 < 0.02, "variance {var}");
        assert!((kurt - 6.0).abs() / 6.0 < 0.05, "kurtosis {kurt}");
    }

    #[test]
    fn ks_distance_on_identical_samples_is_zero() {
        let mut a = vec![3.0, 1.0, 2.0];
        let mut b = vec![1.0, 2.0, 3.0];
        assert_eq!(ecdf_sup_distance(&mut a, &mut b), 0.0);
    }

    #[test]
    fn ks_distance_on_disjoint_samples_is_one() {
        let mut a = vec![0.0, 0.1, 0.2];
        let mut b = vec![5.0, 5.1];
        assert_eq!(ecdf_sup_distance(&mut a, &mut b), 1.0);
    }

    #[test]
    fn ks_distance_handles_point_masses() {
        // half of each sample is an atom at zero
        let mut a = vec![0.0, 0.0, 1.0, 2.0];
        let mut b = vec![0.0, 0.0, 1.5, 2.5];
        let d = ecdf_sup_distance(&mut a, &mut b);
        assert!(d <= 0.25 + 1e-12, "distance {d}");
    }

    #[test]
    fn spike_and_slab_shape_for_bernoulli_noise() {
        let mut rng = RngState::new(33);
        let keep = 0.7;
        let n = 1_000_000;
        let xs: Vec<f64> =
            gsm_sample_hierarchical(&NoiseSpec::Bernoulli { keep_prob: keep }, 1.0, n, &mut rng)
                .unwrap();
        // exact point mass at zero with frequency 1 - keep
        let zeros = xs.iter().filter(|&&x| x == 0.0).count() as f64 / n as f64;
        let se = (keep * (1.0 - keep) / n as f64).sqrt();
        assert!(
            (zeros - (1.0 - keep)).abs() < 5.0 * se,
            "spike mass {zeros}"
        );
        // nonzero draws look Gaussian: skewness ~ 0, excess kurtosis ~ 0
        let slab: Vec<f64> = xs.iter().copied().filter(|&x| x != 0.0).collect();
        let m = slab.len() as f64;
        let mean = slab.iter().sum::<f64>() / m;
        let var = slab.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
        let skew = slab.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / m / var.powf(1.5);
        let kurt = slab.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / m / (var * var);
        assert!(skew.abs() < 6.0 * (6.0 / m).sqrt(), "slab skewness {skew}");
        assert!(
            (kurt - 3.0).abs() < 6.0 * (24.0 / m).sqrt(),
            "slab kurtosis {kurt}"
        );
    }
}
