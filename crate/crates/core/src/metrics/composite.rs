use serde::{Deserialize, Serialize};

use super::{check_lengths, MetricsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HhisWeights {
    pub correctness: f64,
    pub calibration: f64,
    pub drift: f64,
    pub risk: f64,
    pub reasoning: f64,
}

impl Default for HhisWeights {
    fn default() -> Self {
        Self {
            correctness: 0.2,
            calibration: 0.2,
            drift: 0.3,
            risk: 0.15,
            reasoning: 0.15,
        }
    }
}

impl HhisWeights {
    pub fn sum(&self) -> f64 {
        self.correctness + self.calibration + self.drift + self.risk + self.reasoning
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let s = self.sum();
        let nonneg = [
            self.correctness,
            self.calibration,
            self.drift,
            self.risk,
            self.reasoning,
        ]
        .iter()
        .all(|w| *w >= 0.0);
        if !nonneg || (s - 1.0).abs() > 1e-9 {
            return Err(MetricsError::WeightsNotNormalized(s));
        }
        Ok(())
    }
}

/// Holistic score `w1 C + w2 Cal + w3 (1 - D) + w4 R + w5 Q` with `D`
/// clamped to `[0, 1]`.
pub fn hhis(c: f64, cal: f64, d: f64, r: f64, q: f64, w: &HhisWeights) -> Result<f64, MetricsError> {
    w.validate()?;
    let d = d.clamp(0.0, 1.0);
    Ok(w.correctness * c + w.calibration * cal + w.drift * (1.0 - d) + w.risk * r + w.reasoning * q)
}

pub fn reasoning_quality(d_narrative: f64, d_confidence: f64) -> f64 {
    1.0 - (d_narrative + d_confidence) / 2.0
}

/// Pearson correlation of stated confidence against reasoning quality.
pub fn confidence_reasoning_alignment(confidences: &[f64], quality: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(confidences.len(), quality.len())?;
    if confidences.len() < 3 {
        return Err(MetricsError::DegenerateInput);
    }
    let n = confidences.len() as f64;
    let mx = confidences.iter().sum::<f64>() / n;
    let my = quality.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in confidences.iter().zip(quality) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeScores {
    pub hhis: f64,
    pub reasoning_quality: f64,
    /// Absent when confidence or quality never varied.
    pub confidence_reasoning_alignment: Option<f64>,
}
