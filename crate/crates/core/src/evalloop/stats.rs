use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::MetricsError;
use crate::par::{self, Execution};
use crate::rng;

/// Result of a paired bootstrap test on the mean of `a - b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub n: usize,
    pub resamples: usize,
    pub mean_difference: f64,
    /// Two-sided, `(hits + 1) / (resamples + 1)`.
    pub p_value: f64,
    /// 95% percentile interval of the resampled mean difference.
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Paired bootstrap under the null of zero mean difference.
///
/// Differences are centred on zero and resampled with replacement; a
/// resample counts as extreme when its mean is at least as far from zero as
/// the observed mean. Each resample draws from its own seeded stream.
pub fn significance_test(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<Significance, MetricsError> {
    significance_test_with(a, b, resamples, seed, Execution::default())
}

pub fn significance_test_with(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<Significance, MetricsError> {
    crate::metrics::check_lengths(a.len(), b.len())?;
    if a.is_empty() || resamples == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let observed = diffs.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = diffs.iter().map(|d| d - observed).collect();

    let means = par::map_range(exec, resamples, |r| {
        let mut g = rng::stream(seed, &["bootstrap", &r.to_string()]);
        let mut s = 0.0;
        for _ in 0..n {
            s += centred[g.random_range(0..n)];
        }
        s / n as f64
    });
    // Tolerance keeps an all-zero difference vector from flipping on rounding.
    let tol = 1e-12 * observed.abs().max(1.0);
    let hits = means.iter().filter(|m| m.abs() + tol >= observed.abs()).count();

    let mut shifted: Vec<f64> = means.iter().map(|m| m + observed).collect();
    shifted.sort_by(f64::total_cmp);
    let q = |f: f64| shifted[((f * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Ok(Significance {
        n,
        resamples,
        mean_difference: observed,
        p_value: (hits + 1) as f64 / (resamples + 1) as f64,
        ci_low: q(0.025),
        ci_high: q(0.975),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_are_not_significant() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let s = significance_test(&a, &a, 2000, 1).unwrap();
        assert_eq!(s.mean_difference, 0.0);
        assert!(s.p_value > 0.99);
    }

    #[test]
    fn separated_inputs_are_significant() {
        let a: Vec<f64> = (0..40).map(|i| 0.30 + 0.01 * (i % 5) as f64).collect();
        let b: Vec<f64> = (0..40).map(|i| 0.10 + 0.01 * (i % 3) as f64).collect();
        let s = significance_test(&a, &b, 5000, 3).unwrap();
        assert!(s.p_value < 0.001, "{}", s.p_value);
        assert!(s.ci_low > 0.0);
    }

    #[test]
    fn rejects_bad_input_and_is_deterministic() {
        assert!(matches!(
            significance_test(&[1.0], &[1.0, 2.0], 10, 0),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(significance_test(&[], &[], 10, 0).is_err());
        let a = [0.1, 0.5, 0.2, 0.9];
        let b = [0.2, 0.4, 0.1, 0.7];
        let s1 = significance_test_with(&a, &b, 500, 9, Execution::Sequential).unwrap();
        let s2 = significance_test_with(&a, &b, 500, 9, Execution::Parallel).unwrap();
        assert_eq!(s1, s2);
    }
}
