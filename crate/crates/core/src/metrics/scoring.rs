use serde::{Deserialize, Serialize};

use super::{hit, MetricsError};
use crate::market_data::Outcome;

pub fn brier(p: f64, outcome: Outcome) -> f64 {
    let d = p - outcome.as_f64();
    d * d
}

/// Sequential mean Brier score. Empty input yields `None`.
pub fn mean_brier(forecasts: &[(f64, Outcome)]) -> Option<f64> {
    if forecasts.is_empty() {
        return None;
    }
    let total: f64 = forecasts.iter().map(|&(p, o)| brier(p, o)).sum();
    Some(total / forecasts.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub value: f64,
    /// The probability of the realised outcome was clamped to `[eps, 1-eps]`.
    pub clamped: bool,
}

pub fn log_likelihood(p: f64, outcome: Outcome, eps: f64) -> Result<LogLikelihood, MetricsError> {
    if !(eps > 0.0 && eps <= 0.01) {
        return Err(MetricsError::InvalidEps(eps));
    }
    let q = match outcome {
        Outcome::Yes => p,
        Outcome::No => 1.0 - p,
    };
    let c = q.clamp(eps, 1.0 - eps);
    Ok(LogLikelihood {
        value: c.ln(),
        clamped: c != q,
    })
}

/// Fraction of forecasts whose favoured side occurred; even forecasts score a half.
pub fn accuracy(forecasts: &[(f64, Outcome)]) -> Option<f64> {
    if forecasts.is_empty() {
        return None;
    }
    Some(forecasts.iter().map(|&(p, o)| hit(p, o)).sum::<f64>() / forecasts.len() as f64)
}

/// One equal-width probability bin. Empty bins carry no means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub mean_confidence: Option<f64>,
    pub empirical_accuracy: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub ece: f64,
    pub mce: f64,
    pub bins: Vec<ReliabilityBin>,
}

fn bin_index(x: f64, bins: usize) -> usize {
    ((x * bins as f64).floor() as usize).min(bins - 1)
}

/// Expected and maximum calibration error over `bins` equal-width bins on
/// the YES probability. Bin `b` covers `[b/bins, (b+1)/bins)`, the last bin is
/// closed at 1.
pub fn ece_mce(forecasts: &[(f64, Outcome)], bins: usize) -> Result<Calibration, MetricsError> {
    if bins < 2 {
        return Err(MetricsError::InvalidBins(bins));
    }
    if forecasts.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum_p = vec![0.0; bins];
    let mut sum_o = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for &(p, o) in forecasts {
        let b = bin_index(p, bins);
        sum_p[b] += p;
        sum_o[b] += o.as_f64();
        count[b] += 1;
    }
    let n = forecasts.len() as f64;
    let mut ece = 0.0;
    let mut mce: f64 = 0.0;
    let mut out = Vec::with_capacity(bins);
    for b in 0..bins {
        let (conf, acc) = if count[b] > 0 {
            let c = count[b] as f64;
            let conf = sum_p[b] / c;
            let acc = sum_o[b] / c;
            let gap = (acc - conf).abs();
            ece += c / n * gap;
            mce = mce.max(gap);
            (Some(conf), Some(acc))
        } else {
            (None, None)
        };
        out.push(ReliabilityBin {
            bin_low: b as f64 / bins as f64,
            bin_high: (b + 1) as f64 / bins as f64,
            mean_confidence: conf,
            empirical_accuracy: acc,
            count: count[b],
        });
    }
    // ece is a weighted mean of the gaps, so it cannot exceed their maximum;
    // the clamp only absorbs summation rounding.
    Ok(Calibration {
        ece: ece.min(mce),
        mce,
        bins: out,
    })
}

/// `max(p, 1-p)`, the probability assigned to the favoured side.
pub fn confidence_of(p: f64) -> f64 {
    p.max(1.0 - p)
}

/// Weighted mean of `(mean confidence - hit rate)` over decile bins of
/// [`confidence_of`]. Positive values mean the forecaster is overconfident.
pub fn overconfidence_index(forecasts: &[(f64, Outcome)]) -> Result<f64, MetricsError> {
    if forecasts.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum_c = [0.0; 10];
    let mut sum_h = [0.0; 10];
    let mut count = [0usize; 10];
    for &(p, o) in forecasts {
        let c = confidence_of(p);
        let b = bin_index(c, 10);
        sum_c[b] += c;
        sum_h[b] += hit(p, o);
        count[b] += 1;
    }
    let n = forecasts.len() as f64;
    let mut total = 0.0;
    for b in 0..10 {
        if count[b] > 0 {
            total += (sum_c[b] - sum_h[b]) / n;
        }
    }
    Ok(total)
}

/// Population standard deviation of a confidence series; `None` below two points.
pub fn confidence_stability(confidences: &[f64]) -> Option<f64> {
    if confidences.len() < 2 {
        return None;
    }
    let n = confidences.len() as f64;
    let mean = confidences.iter().sum::<f64>() / n;
    let var = confidences.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    Some(var.sqrt())
}

/// Model minus baseline; negative means the model scored better.
pub fn baseline_delta(model_brier: f64, baseline_brier: f64) -> f64 {
    model_brier - baseline_brier
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n: usize,
    pub brier: f64,
    /// Mean log-likelihood of the realised outcomes.
    pub log_likelihood: f64,
    /// Forecasts whose log-likelihood hit the clamp.
    pub clamped: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub mce: f64,
    pub overconfidence: f64,
    pub reliability_bins: Vec<ReliabilityBin>,
}

pub fn score_report(forecasts: &[(f64, Outcome)], bins: usize, eps: f64) -> Result<ScoreReport, MetricsError> {
    let cal = ece_mce(forecasts, bins)?;
    let mut ll = 0.0;
    let mut clamped = 0;
    for &(p, o) in forecasts {
        let l = log_likelihood(p, o, eps)?;
        ll += l.value;
        clamped += usize::from(l.clamped);
    }
    let n = forecasts.len();
    Ok(ScoreReport {
        n,
        brier: mean_brier(forecasts).expect("non-empty"),
        log_likelihood: ll / n as f64,
        clamped,
        accuracy: accuracy(forecasts).expect("non-empty"),
        ece: cal.ece,
        mce: cal.mce,
        overconfidence: overconfidence_index(forecasts)?,
        reliability_bins: cal.bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(0.5, Outcome::Yes), 0.25);
        assert_eq!(brier(1.0, Outcome::Yes), 0.0);
        assert!(close(brier(0.7, Outcome::No), 0.49, 1e-15));
    }

    #[test]
    fn log_likelihood_examples() {
        let l = log_likelihood(1.0, Outcome::Yes, 1e-9).unwrap();
        assert!(l.value.abs() < 1e-8 && l.clamped);
        let l = log_likelihood(0.5, Outcome::No, 1e-9).unwrap();
        assert!(close(l.value, -std::f64::consts::LN_2, 1e-12) && !l.clamped);
        let l = log_likelihood(0.0, Outcome::Yes, 1e-9).unwrap();
        assert!(close(l.value, -20.723_265_836_946_41, 1e-9) && l.clamped);
        assert!(log_likelihood(0.5, Outcome::Yes, 0.5).is_err());
        assert!(log_likelihood(0.5, Outcome::Yes, 0.0).is_err());
    }

    #[test]
    fn calibration_examples() {
        let f = vec![(0.9, Outcome::Yes); 20];
        let c = ece_mce(&f, 10).unwrap();
        assert!(close(c.ece, 0.1, 1e-12) && close(c.mce, 0.1, 1e-12));
        assert_eq!(c.bins.len(), 10);
        assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), 20);
        assert_eq!(ece_mce(&[], 10), Err(MetricsError::EmptyInput));
        assert_eq!(ece_mce(&f, 1), Err(MetricsError::InvalidBins(1)));
        // p = 1.0 falls in the closed last bin
        let c = ece_mce(&[(1.0, Outcome::Yes)], 10).unwrap();
        assert_eq!(c.bins[9].count, 1);
    }

    #[test]
    fn overconfidence_and_stability() {
        // always says 0.9, right half the time
        let f: Vec<_> = (0..10).map(|i| (0.9, Outcome::from_bool(i % 2 == 0))).collect();
        assert!(close(overconfidence_index(&f).unwrap(), 0.4, 1e-12));
        assert_eq!(confidence_stability(&[0.7]), None);
        assert!(close(confidence_stability(&[0.6, 0.8]).unwrap(), 0.1, 1e-12));
        assert_eq!(baseline_delta(0.2, 0.18), 0.2 - 0.18);
    }

    #[test]
    fn report_fields_consistent() {
        let f = vec![
            (0.8, Outcome::Yes),
            (0.3, Outcome::No),
            (0.5, Outcome::Yes),
            (0.0, Outcome::Yes),
        ];
        let r = score_report(&f, 10, 1e-9).unwrap();
        assert_eq!(r.n, 4);
        assert_eq!(r.clamped, 1);
        assert!(close(r.accuracy, (1.0 + 1.0 + 0.5 + 0.0) / 4.0, 1e-15));
        assert!(r.mce >= r.ece);
        assert!(r.log_likelihood <= 0.0);
    }

    proptest! {
        #[test]
        fn mce_dominates_ece(raw in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200), bins in 2usize..25) {
            let f: Vec<_> = raw.into_iter().map(|(p, o)| (p, Outcome::from_bool(o))).collect();
            let c = ece_mce(&f, bins).unwrap();
            prop_assert!(c.mce >= c.ece);
            prop_assert!((0.0..=1.0).contains(&c.ece));
            prop_assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), f.len());
        }

        #[test]
        fn constant_half_scores_quarter(outcomes in prop::collection::vec(any::<bool>(), 1..500)) {
            let f: Vec<_> = outcomes.into_iter().map(|o| (0.5, Outcome::from_bool(o))).collect();
            prop_assert_eq!(mean_brier(&f), Some(0.25));
        }
    }
}
