use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{LedgerEntry, Portfolio, Realized, SimError, Trigger};
use crate::agents::{Action, DecisionBatch};
use crate::market_data::MarketSnapshot;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// Score forecasts only; nothing trades.
    #[default]
    Observation,
    Execution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepConfig {
    pub mode: ExecutionMode,
    /// A BUY executes only when its recorded edge exceeds this.
    pub delta: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            mode: ExecutionMode::Observation,
            delta: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    ThresholdNotMet,
    InsufficientCapital,
    PositionLimitReached,
    AlreadyOpen,
    NoSuchPosition,
    MissingSnapshot,
    InvalidPrice,
    InvalidDecision,
}

impl From<&SimError> for SkipReason {
    fn from(e: &SimError) -> Self {
        match e {
            SimError::InsufficientCapital { .. } => SkipReason::InsufficientCapital,
            SimError::PositionLimitReached(_) => SkipReason::PositionLimitReached,
            SimError::AlreadyOpen(_) => SkipReason::AlreadyOpen,
            SimError::NoSuchPosition(_) => SkipReason::NoSuchPosition,
            SimError::MissingSnapshot(_) => SkipReason::MissingSnapshot,
            SimError::InvalidPrice { .. } => SkipReason::InvalidPrice,
            SimError::NotABuy(_) | SimError::InvalidFraction(_) => SkipReason::InvalidDecision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub market_id: String,
    /// `None` for engine actions such as marks.
    pub action: Option<Action>,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub entries: Vec<LedgerEntry>,
    pub skipped: Vec<Skip>,
    /// Positions that left the book, in execution order.
    pub realized: Vec<Realized>,
    pub trigger_closes: usize,
}

/// Applies one validated batch.
///
/// Execution order: mark every open position, close anything outside the
/// trigger band, apply the agent's CLOSEs, then open BUYs in ranked order
/// while their edge exceeds `delta` and capital and slots remain. Failures
/// are recorded as skips and never abort the step.
pub fn step<'a>(
    portfolio: &mut Portfolio,
    batch: &DecisionBatch,
    lookup: impl Fn(&str) -> Option<&'a MarketSnapshot>,
    cfg: &StepConfig,
    at: DateTime<Utc>,
) -> StepOutcome {
    let mut out = StepOutcome::default();
    if cfg.mode == ExecutionMode::Observation {
        return out;
    }

    let ids: Vec<String> = portfolio.open_positions.keys().cloned().collect();
    for id in &ids {
        match lookup(id) {
            Some(s) => out.entries.push(portfolio.mark(s, at).expect("position is open")),
            None => out.skipped.push(Skip {
                market_id: id.clone(),
                action: None,
                reason: SkipReason::MissingSnapshot,
            }),
        }
    }

    close_triggered(portfolio, &lookup, at, &mut out);

    for d in batch.decisions.iter().filter(|d| d.action == Action::Close) {
        let res = match lookup(&d.market_id) {
            None => Err(SimError::MissingSnapshot(d.market_id.clone())),
            Some(s) => portfolio.close_position(&d.market_id, d.close_fraction.unwrap_or(100), s, at),
        };
        match res {
            Ok((e, r)) => {
                out.entries.push(e);
                out.realized.extend(r);
            }
            Err(err) => out.skipped.push(Skip {
                market_id: d.market_id.clone(),
                action: Some(d.action),
                reason: SkipReason::from(&err),
            }),
        }
    }

    let mut buys: Vec<_> = batch.decisions.iter().filter(|d| d.action.is_buy()).collect();
    buys.sort_by(|a, b| crate::agents::compare_decisions(a, b));
    for d in buys {
        let skip = |reason| Skip {
            market_id: d.market_id.clone(),
            action: Some(d.action),
            reason,
        };
        if !d.edge.is_some_and(|e| e > cfg.delta) {
            out.skipped.push(skip(SkipReason::ThresholdNotMet));
            continue;
        }
        let res = match lookup(&d.market_id) {
            None => Err(SimError::MissingSnapshot(d.market_id.clone())),
            Some(s) => portfolio.open_position(d, s, at),
        };
        match res {
            Ok(e) => out.entries.push(e),
            Err(err) => out.skipped.push(skip(SkipReason::from(&err))),
        }
    }
    // Partial closes and top-ups round basis and mark separately, which can
    // nudge a residual onto the band edge.
    close_triggered(portfolio, &lookup, at, &mut out);
    out
}

fn close_triggered<'a>(
    portfolio: &mut Portfolio,
    lookup: &impl Fn(&str) -> Option<&'a MarketSnapshot>,
    at: DateTime<Utc>,
    out: &mut StepOutcome,
) {
    let fired: Vec<String> = portfolio
        .open_positions
        .iter()
        .filter(|(_, p)| p.trigger() != Trigger::None)
        .map(|(id, _)| id.clone())
        .collect();
    for id in fired {
        let Some(s) = lookup(&id) else { continue };
        let (e, r) = portfolio.close_position(&id, 100, s, at).expect("open position closes");
        out.entries.push(e);
        out.realized.extend(r);
        out.trigger_closes += 1;
    }
}
