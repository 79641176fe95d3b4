//! Scoring, calibration, drift, risk and composite metrics.
//!
//! Every function here is pure. Inputs are probabilities of YES in `[0, 1]`
//! paired with binary outcomes where relevant.

mod composite;
mod drift;
mod risk;
mod scoring;

use serde::{Deserialize, Serialize};

pub use composite::{confidence_reasoning_alignment, hhis, reasoning_quality, CompositeScores, HhisWeights};
pub use drift::{
    confidence_drift, drift_report, market_divergence, narrative_drift, temporal_drift, ConfidenceDrift, DriftInputs,
    DriftReport, TemporalForm,
};
pub use risk::{
    risk_adjusted_return, risk_category, risk_report, var_cvar, var_cvar_raw, volatility, RiskCategory, RiskReport,
    VarCvar,
};
pub use scoring::{
    accuracy, baseline_delta, brier, confidence_of, confidence_stability, ece_mce, log_likelihood, mean_brier,
    overconfidence_index, score_report, Calibration, LogLikelihood, ReliabilityBin, ScoreReport,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
pub enum MetricsError {
    #[error("input is empty")]
    EmptyInput,
    #[error("bin count must be at least 2, got {0}")]
    InvalidBins(usize),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("alpha must lie in (0, 0.5), got {0}")]
    InvalidAlpha(f64),
    #[error("price must lie in (0, 1], got {0}")]
    InvalidPrice(f64),
    #[error("eps must lie in (0, 0.01], got {0}")]
    InvalidEps(f64),
    #[error("weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("input has zero variance or too few points")]
    DegenerateInput,
}

pub(crate) fn check_lengths(left: usize, right: usize) -> Result<(), MetricsError> {
    if left != right {
        return Err(MetricsError::LengthMismatch { left, right });
    }
    Ok(())
}

/// Outcome-weighted correctness of a probability on a binary event: 1 when
/// the favoured side happened, 0 when it did not, 0.5 for an even forecast.
pub(crate) fn hit(p: f64, outcome: crate::market_data::Outcome) -> f64 {
    use std::cmp::Ordering;
    match p.partial_cmp(&0.5) {
        Some(Ordering::Greater) => outcome.as_f64(),
        Some(Ordering::Less) => 1.0 - outcome.as_f64(),
        _ => 0.5,
    }
}
