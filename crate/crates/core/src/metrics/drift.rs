use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::scoring::confidence_of;
use super::{check_lengths, hit, MetricsError};
use crate::market_data::Outcome;

fn token_set(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Jaccard distance between the lowercased word sets of two traces. Two
/// empty traces are identical.
pub fn narrative_drift(prev: &str, curr: &str) -> f64 {
    let a = token_set(prev);
    let b = token_set(curr);
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    let inter = a.intersection(&b).count();
    1.0 - inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalForm {
    /// Probability movement in excess of market movement.
    #[default]
    Difference,
    /// Probability movement scaled by market movement.
    Product,
}

pub fn temporal_drift(p_prev: f64, p_curr: f64, m_prev: f64, m_curr: f64, form: TemporalForm) -> f64 {
    let dp = (p_curr - p_prev).abs();
    let dm = (m_curr - m_prev).abs();
    match form {
        TemporalForm::Difference => dp - dm,
        TemporalForm::Product => dp * dm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceDrift {
    pub value: f64,
    /// No resolved history fell in the forecast's confidence decile.
    pub low_evidence: bool,
}

/// Gap between `max(p, 1-p)` and the hit rate of past forecasts in the same
/// confidence decile.
pub fn confidence_drift(p: f64, history: &[(f64, Outcome)]) -> ConfidenceDrift {
    let decile = |c: f64| ((c * 10.0).floor() as usize).min(9);
    let target = decile(confidence_of(p));
    let mut hits = 0.0;
    let mut n = 0usize;
    for &(q, o) in history {
        if decile(confidence_of(q)) == target {
            hits += hit(q, o);
            n += 1;
        }
    }
    if n == 0 {
        return ConfidenceDrift {
            value: 0.0,
            low_evidence: true,
        };
    }
    ConfidenceDrift {
        value: (confidence_of(p) - hits / n as f64).abs(),
        low_evidence: false,
    }
}

/// Mean absolute gap between agent and market probabilities.
pub fn market_divergence(series_p: &[f64], series_m: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(series_p.len(), series_m.len())?;
    if series_p.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let total: f64 = series_p.iter().zip(series_m).map(|(p, m)| (p - m).abs()).sum();
    Ok(total / series_p.len() as f64)
}

/// One market's consecutive pair of observations for the drift algorithm.
#[derive(Debug, Clone, Copy)]
pub struct DriftInputs<'a> {
    pub p_prev: f64,
    pub p_curr: f64,
    pub m_prev: f64,
    pub m_curr: f64,
    pub trace_prev: &'a str,
    pub trace_curr: &'a str,
    /// Resolved forecasts of this agent available at the current cycle.
    pub history: &'a [(f64, Outcome)],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub d_narrative: f64,
    /// Temporal drift in the configured form; this is the term in `d_total`.
    pub d_temporal: f64,
    pub d_temporal_difference: f64,
    pub d_temporal_product: f64,
    pub d_confidence: f64,
    pub d_total: f64,
    pub market_divergence: f64,
    pub low_evidence: bool,
    pub form: TemporalForm,
}

pub fn drift_report(x: &DriftInputs<'_>, form: TemporalForm) -> DriftReport {
    let d_n = narrative_drift(x.trace_prev, x.trace_curr);
    let diff = temporal_drift(x.p_prev, x.p_curr, x.m_prev, x.m_curr, TemporalForm::Difference);
    let prod = temporal_drift(x.p_prev, x.p_curr, x.m_prev, x.m_curr, TemporalForm::Product);
    let d_t = match form {
        TemporalForm::Difference => diff,
        TemporalForm::Product => prod,
    };
    let dc = confidence_drift(x.p_curr, x.history);
    DriftReport {
        d_narrative: d_n,
        d_temporal: d_t,
        d_temporal_difference: diff,
        d_temporal_product: prod,
        d_confidence: dc.value,
        d_total: d_n + d_t + dc.value,
        market_divergence: (x.p_curr - x.m_curr).abs(),
        low_evidence: dc.low_evidence,
        form,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn narrative_examples() {
        assert_eq!(narrative_drift("Price is UP.", "price is up"), 0.0);
        assert_eq!(narrative_drift("alpha beta", "gamma delta"), 1.0);
        assert!((narrative_drift("a b c d", "a, b; e f") - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(narrative_drift("", "  "), 0.0);
    }

    #[test]
    fn temporal_examples() {
        let d = temporal_drift(0.40, 0.60, 0.50, 0.55, TemporalForm::Difference);
        assert!((d - 0.15).abs() < 1e-12);
        let p = temporal_drift(0.40, 0.60, 0.50, 0.55, TemporalForm::Product);
        assert!((p - 0.01).abs() < 1e-12);
        for form in [TemporalForm::Difference, TemporalForm::Product] {
            assert_eq!(temporal_drift(0.3, 0.3, 0.7, 0.7, form), 0.0);
        }
    }

    #[test]
    fn confidence_examples() {
        // ten forecasts at 0.85 (decile 8), seven right
        let h: Vec<_> = (0..10).map(|i| (0.85, Outcome::from_bool(i < 7))).collect();
        let d = confidence_drift(0.8, &h);
        assert!((d.value - 0.1).abs() < 1e-12 && !d.low_evidence);
        // NO-leaning forecasts share the decile of their mirror
        let d = confidence_drift(0.2, &h);
        assert!((d.value - 0.1).abs() < 1e-12);
        let d = confidence_drift(0.8, &[]);
        assert_eq!((d.value, d.low_evidence), (0.0, true));
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(market_divergence(&[0.2, 0.4], &[0.2, 0.4]), Ok(0.0));
        assert!((market_divergence(&[0.6, 0.7], &[0.5, 0.5]).unwrap() - 0.15).abs() < 1e-12);
        assert_eq!(
            market_divergence(&[0.1, 0.2, 0.3], &[0.1, 0.2]),
            Err(MetricsError::LengthMismatch { left: 3, right: 2 })
        );
    }

    proptest! {
        #[test]
        fn total_is_exact_sum(p0 in 0.0f64..=1.0, p1 in 0.0f64..=1.0, m0 in 0.0f64..=1.0, m1 in 0.0f64..=1.0,
                              product in any::<bool>()) {
            let h = [(0.8, Outcome::Yes), (0.1, Outcome::Yes)];
            let x = DriftInputs { p_prev: p0, p_curr: p1, m_prev: m0, m_curr: m1,
                                  trace_prev: "up trend", trace_curr: "down trend", history: &h };
            let form = if product { TemporalForm::Product } else { TemporalForm::Difference };
            let r = drift_report(&x, form);
            prop_assert_eq!(r.d_total, r.d_narrative + r.d_temporal + r.d_confidence);
            prop_assert!((0.0..=1.0).contains(&r.d_narrative));
            prop_assert!((0.0..=1.0).contains(&r.d_confidence));
        }
    }
}
