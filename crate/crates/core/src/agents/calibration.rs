use serde::{Deserialize, Serialize};

use super::{CalibrationWindow, WindowMode};
use crate::money::Cents;

/// Probability shift applied when the window's win rate trails the stated
/// probability.
pub const PROB_PENALTY: f64 = -0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAdjustment {
    pub win_rate_adj: f64,
    pub prob_adjustment: f64,
}

/// Laplace-smoothed win rate over the rolling window and the resulting
/// probability adjustment.
///
/// An empty window uses the prior `0.5` with no adjustment. With fewer than
/// 30 entries the rate is `(wins + 1) / (n + 2)`; a full window uses
/// `wins / n`.
pub fn calibration_adjustment(window: &CalibrationWindow, stated_prob: f64) -> CalibrationAdjustment {
    if window.mode() == WindowMode::FirstCall {
        return CalibrationAdjustment {
            win_rate_adj: 0.5,
            prob_adjustment: 0.0,
        };
    }
    let wins = window.wins() as f64;
    let n = window.len() as f64;
    let win_rate_adj = if window.len() < CalibrationWindow::CAPACITY {
        (wins + 1.0) / (n + 2.0)
    } else {
        wins / n
    };
    let prob_adjustment = if win_rate_adj < stated_prob { PROB_PENALTY } else { 0.0 };
    CalibrationAdjustment {
        win_rate_adj,
        prob_adjustment,
    }
}

/// Perceived mispricing: calibrated probability minus the quoted price.
pub fn compute_edge(calibrated_probability: f64, market_price: f64) -> f64 {
    calibrated_probability - market_price
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("price must be positive")]
pub struct ZeroPrice;

/// Expected profit of a `bet` at `price` when the side wins with `prob`,
/// rounded half-to-even to whole cents.
pub fn expected_return(prob: f64, bet: Cents, price: f64) -> Result<Cents, ZeroPrice> {
    if price <= 0.0 || price.is_nan() {
        return Err(ZeroPrice);
    }
    let b = bet.as_f64();
    Ok(Cents::round_from(prob * b * (1.0 / price - 1.0) - (1.0 - prob) * b))
}
