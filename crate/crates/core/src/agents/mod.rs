//! Forecasting agents: records, decision batches, calibration, and the
//! forecaster interface.

mod calibration;
mod decision;
mod forecaster;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::contract::ContractHash;
use crate::market_data::Side;
use crate::money::Cents;

pub use calibration::{calibration_adjustment, compute_edge, expected_return, CalibrationAdjustment, ZeroPrice};
pub use decision::{
    compare_decisions, parse_decision_batch, rank_opportunities, validate_decision_batch, Opportunity, ParsedBatch,
    RejectionReport, ThresholdConfig, ValidatedBatch, Violation,
};
pub use forecaster::{
    count_tokens, sample_cycle, sample_forecast, truncate_to_budget, AgentError, AgentHistory, AgentResponse,
    CycleSample, DecisionPolicy, ForecastRequest, Forecaster, HttpForecaster, MarketForecast, OpenPositionView,
    PortfolioView, PrevForecast, RecordedAgent, RecordedCycle, ScriptedAgent, ScriptedKind, ScriptedSpec,
};

/// Strategy label attached to a forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    Momentum,
    MeanReversion,
    DriftAdjusted,
    RiskConfirmation,
    None,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Momentum,
        Strategy::MeanReversion,
        Strategy::DriftAdjusted,
        Strategy::RiskConfirmation,
        Strategy::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Momentum => "MOMENTUM",
            Strategy::MeanReversion => "MEAN_REVERSION",
            Strategy::DriftAdjusted => "DRIFT_ADJUSTED",
            Strategy::RiskConfirmation => "RISK_CONFIRMATION",
            Strategy::None => "NONE",
        }
    }
}

/// One agent's forecast for one market at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub condition_id: String,
    pub agent_id: String,
    pub probability: f64,
    pub confidence: u8,
    pub reasoning_trace: String,
    pub strategy: Strategy,
    pub input_tokens: u32,
    pub output_tokens: u32,
    pub latency_ms: u64,
    pub sampled_at: DateTime<Utc>,
    pub contract_hash: String,
    /// Edge on the side the agent favours, after calibration adjustment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_return: Option<Cents>,
}

impl ForecastRecord {
    pub fn contract_hash_hex(hash: &ContractHash) -> String {
        hash.to_hex()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    BuyYes,
    BuyNo,
    Close,
    Hold,
}

impl Action {
    pub fn is_buy(self) -> bool {
        matches!(self, Action::BuyYes | Action::BuyNo)
    }

    pub fn buy_side(self) -> Option<Side> {
        match self {
            Action::BuyYes => Some(Side::Yes),
            Action::BuyNo => Some(Side::No),
            _ => None,
        }
    }
}

/// A single trading decision. The evidence fields (`edge`, `confidence`,
/// `expected_return`, `h_score`) are what threshold checks and ranking read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub market_id: String,
    pub action: Action,
    pub amount: Option<Cents>,
    /// Percent of the position to close, 1-100. `None` closes everything.
    pub close_fraction: Option<u8>,
    pub reasoning: String,
    pub edge: Option<f64>,
    pub confidence: Option<u8>,
    pub expected_return: Option<Cents>,
    pub h_score: Option<f64>,
}

impl Decision {
    pub fn hold(market_id: impl Into<String>) -> Self {
        Self {
            market_id: market_id.into(),
            action: Action::Hold,
            amount: None,
            close_fraction: None,
            reasoning: String::new(),
            edge: None,
            confidence: None,
            expected_return: None,
            h_score: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionBatch {
    pub decisions: Vec<Decision>,
    pub overall_reasoning: String,
    pub agent_id: String,
    pub produced_at: DateTime<Utc>,
}

impl DecisionBatch {
    /// Engine fallback for failed cycles: HOLD on up to `size` markets.
    pub fn all_hold<'a>(
        agent_id: &str,
        markets: impl IntoIterator<Item = &'a str>,
        size: usize,
        produced_at: DateTime<Utc>,
    ) -> Self {
        Self {
            decisions: markets.into_iter().take(size).map(Decision::hold).collect(),
            overall_reasoning: "fallback: all HOLD".into(),
            agent_id: agent_id.to_string(),
            produced_at,
        }
    }
}

/// One closed position in the rolling calibration window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedPosition {
    pub condition_id: String,
    pub side: Side,
    pub pnl: Cents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WindowMode {
    FirstCall,
    Bootstrap,
    Calibration,
}

/// Most recent closed positions, capped at [`CalibrationWindow::CAPACITY`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationWindow {
    entries: Vec<ClosedPosition>,
}

impl CalibrationWindow {
    pub const CAPACITY: usize = 30;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ClosedPosition>) -> Self {
        let mut w = Self::new();
        for e in entries {
            w.push(e);
        }
        w
    }

    /// Appends a closed position, evicting the oldest beyond capacity.
    pub fn push(&mut self, entry: ClosedPosition) {
        self.entries.push(entry);
        if self.entries.len() > Self::CAPACITY {
            let excess = self.entries.len() - Self::CAPACITY;
            self.entries.drain(..excess);
        }
    }

    pub fn entries(&self) -> &[ClosedPosition] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn wins(&self) -> usize {
        self.entries.iter().filter(|e| e.pnl > Cents::ZERO).count()
    }

    pub fn mode(&self) -> WindowMode {
        match self.entries.len() {
            0 => WindowMode::FirstCall,
            n if n >= Self::CAPACITY => WindowMode::Calibration,
            _ => WindowMode::Bootstrap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed(i: usize, pnl: i64) -> ClosedPosition {
        ClosedPosition {
            condition_id: format!("0x{i}"),
            side: Side::Yes,
            pnl: Cents(pnl),
        }
    }

    #[test]
    fn window_modes_follow_entry_count() {
        let mut w = CalibrationWindow::new();
        assert_eq!(w.mode(), WindowMode::FirstCall);
        w.push(closed(0, 10));
        assert_eq!(w.mode(), WindowMode::Bootstrap);
        for i in 1..29 {
            w.push(closed(i, -10));
        }
        assert_eq!(w.len(), 29);
        assert_eq!(w.mode(), WindowMode::Bootstrap);
        w.push(closed(29, 10));
        assert_eq!(w.mode(), WindowMode::Calibration);
        w.push(closed(30, 10));
        assert_eq!(w.len(), 30);
        assert_eq!(w.entries()[0].condition_id, "0x1");
        assert_eq!(w.wins(), 2);
    }

    #[test]
    fn zero_pnl_is_a_loss() {
        let w = CalibrationWindow::from_entries([closed(0, 0), closed(1, 1)]);
        assert_eq!(w.wins(), 1);
    }
}
