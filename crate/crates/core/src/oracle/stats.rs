//! Goodness-of-fit statistics for judging samplers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Two-sample Kolmogorov–Smirnov distance `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS distance needs two nonempty samples");
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut sup) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    sup
}

/// One-sample Kolmogorov–Smirnov distance against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!sample.is_empty(), "KS distance needs a nonempty sample");
    let xs = sorted(sample);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |sup, (i, &x)| {
        let f = cdf(x);
        sup.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic p-value of a KS distance `d` for effective sample size `n_eff`
/// (`n` for one sample, `nm/(n+m)` for two).
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    // Stephens' small-sample correction
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson χ² of observed bin counts against expected probabilities
/// (normalised internally), with `bins − 1` degrees of freedom.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> ChiSquareTest {
    assert_eq!(counts.len(), probs.len());
    assert!(counts.len() >= 2, "χ² needs at least two bins");
    let n: u64 = counts.iter().sum();
    let total: f64 = probs.iter().sum();
    let statistic = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = n as f64 * p / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dof = counts.len() - 1;
    let p_value = ChiSquared::new(dof as f64).expect("dof is positive").sf(statistic);
    ChiSquareTest { statistic, dof, p_value }
}

/// Counts of `sample` in `bins` equal-width bins over [0, 1].
pub fn histogram(sample: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0; bins];
    for &x in sample {
        let b = ((x * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ks_two_sample_hand_cases() {
        assert_eq!(ks_two_sample(&[0.1, 0.2], &[0.1, 0.2]), 0.0);
        assert_eq!(ks_two_sample(&[0.1, 0.2], &[0.3, 0.4]), 1.0);
        assert!((ks_two_sample(&[0.1, 0.3], &[0.2, 0.4]) - 0.5).abs() < 1e-15);
        // ties across samples count together
        assert_eq!(ks_two_sample(&[0.5, 0.5, 0.7], &[0.5, 0.7, 0.7]), 1.0 / 3.0);
    }

    #[test]
    fn ks_one_sample_uniform() {
        assert!((ks_one_sample(&[0.5], |x| x) - 0.5).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        let d = ks_one_sample(&xs, |x| x);
        assert!(d < 0.015, "{d}");
        assert!(ks_p_value(d, xs.len() as f64) > 0.01);
        let skewed: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let d = ks_one_sample(&skewed, |x| x);
        assert!(ks_p_value(d, xs.len() as f64) < 1e-6);
    }

    #[test]
    fn ks_p_value_reference_points() {
        // Kolmogorov survival function: Q(1.36) ≈ 0.0494, Q(1.63) ≈ 0.0098
        assert!((ks_p_value(1.36 / 1e4, 1e8) - 0.0494).abs() < 5e-4);
        assert!((ks_p_value(1.63 / 1e4, 1e8) - 0.0098).abs() < 5e-4);
        assert_eq!(ks_p_value(0.0, 100.0), 1.0);
    }

    #[test]
    fn chi_square_reference() {
        // uniform counts give statistic 0 and p = 1
        let t = chi_square(&[10, 10, 10, 10], &[0.25; 4]);
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        // χ²₃ = 7.814728 is the 95% quantile
        let t = chi_square(&[25, 25, 25, 25], &[0.25; 4]);
        assert_eq!(t.dof, 3);
        let crit = ChiSquared::new(3.0).unwrap().sf(7.814728);
        assert!((crit - 0.05).abs() < 1e-6);
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(histogram(&[0.0, 0.24, 0.25, 0.99, 1.0], 4), vec![2, 1, 0, 2]);
    }
}
