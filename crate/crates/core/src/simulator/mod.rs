//! Simulated execution: positions, the portfolio state machine, risk
//! triggers, and the append-only ledger.
//!
//! All money is integer cents. Share quantities are integer micro-shares, so
//! a YES share bought at 0.50 for $150 is 300,000,000 micro-shares.

mod ledger;
mod step;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::{Decision, OpenPositionView, PortfolioView};
use crate::market_data::{MarketSnapshot, ResolvedOutcome, Side};
use crate::money::Cents;

pub use ledger::{read_ledger, EntryKind, LedgerEntry, LedgerError, LedgerWriter};
pub use step::{step, ExecutionMode, Skip, SkipReason, StepConfig, StepOutcome};

pub const MICRO: i64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
pub enum SimError {
    #[error("insufficient capital: need {need}, have {have}")]
    InsufficientCapital { need: Cents, have: Cents },
    #[error("position limit of {0} reached")]
    PositionLimitReached(usize),
    #[error("position already open in {0}")]
    AlreadyOpen(String),
    #[error("no open position in {0}")]
    NoSuchPosition(String),
    #[error("no snapshot for {0}")]
    MissingSnapshot(String),
    #[error("decision for {0} is not a BUY with an amount")]
    NotABuy(String),
    #[error("fill price {price} for {id} is outside (0, 1)")]
    InvalidPrice { id: String, price: f64 },
    #[error("close fraction {0} outside 1-100")]
    InvalidFraction(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Trigger {
    StopLoss,
    TargetWin,
    None,
}

/// Cents value of `micro` micro-shares at `price` dollars per share, rounded
/// half-even.
pub fn value_of(micro: i64, price: f64) -> Cents {
    Cents::round_from(micro as f64 * price / 1e4)
}

/// Micro-shares bought with `amount` at `price`.
pub fn shares_for(amount: Cents, price: f64) -> i64 {
    (amount.as_f64() * 1e4 / price).round_ties_even() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub condition_id: String,
    pub side: Side,
    pub entry_price: f64,
    pub quantity: i64,
    pub cost_basis: Cents,
    pub opened_at: DateTime<Utc>,
    pub unrealized_pnl: Cents,
    /// P&L already realized by partial closes.
    pub realized_pnl: Cents,
}

impl Position {
    /// Stop-loss at a P&L ratio of -5% or worse, target-win at +50% or better.
    /// Compared in integer cents so the band edges are exact.
    pub fn trigger(&self) -> Trigger {
        let basis = self.cost_basis.0;
        if basis <= 0 {
            return Trigger::None;
        }
        let u = self.unrealized_pnl.0 as i128;
        if u * 100 <= -5 * basis as i128 {
            Trigger::StopLoss
        } else if u * 2 >= basis as i128 {
            Trigger::TargetWin
        } else {
            Trigger::None
        }
    }

    pub fn pnl_ratio(&self) -> f64 {
        self.unrealized_pnl.as_f64() / self.cost_basis.as_f64()
    }
}

pub fn evaluate_triggers(position: &Position) -> Trigger {
    position.trigger()
}

/// One agent's capital and open positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub initial_capital: Cents,
    pub total_capital: Cents,
    pub available: Cents,
    pub deployed: Cents,
    pub open_positions: BTreeMap<String, Position>,
    pub max_open: usize,
    next_seq: u64,
}

/// A position's final P&L when it leaves the book.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Realized {
    pub condition_id: String,
    pub side: Side,
    pub pnl: Cents,
}

impl Portfolio {
    pub fn new(capital: Cents, max_open: usize) -> Self {
        let p = Self {
            initial_capital: capital,
            total_capital: capital,
            available: capital,
            deployed: Cents::ZERO,
            open_positions: BTreeMap::new(),
            max_open,
            next_seq: 0,
        };
        p.check();
        p
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn realized_pnl(&self) -> Cents {
        self.total_capital - self.initial_capital
    }

    pub fn unrealized_pnl(&self) -> Cents {
        self.open_positions.values().map(|p| p.unrealized_pnl).sum()
    }

    /// Panics if the capital identity or the position limit is broken.
    pub fn check(&self) {
        assert_eq!(
            self.available + self.deployed,
            self.total_capital,
            "capital identity broken"
        );
        assert!(self.available >= Cents::ZERO, "available capital negative");
        assert!(self.open_positions.len() <= self.max_open, "position limit exceeded");
        let basis: Cents = self.open_positions.values().map(|p| p.cost_basis).sum();
        assert_eq!(basis, self.deployed, "deployed capital differs from open cost basis");
    }

    fn entry(&mut self, kind: EntryKind, id: &str, side: Side, price: f64, at: DateTime<Utc>) -> LedgerEntry {
        let seq = self.next_seq;
        self.next_seq += 1;
        LedgerEntry {
            seq,
            kind,
            condition_id: id.to_string(),
            timestamp: at,
            side,
            price,
            cash_delta: Cents::ZERO,
            basis_delta: Cents::ZERO,
            available_delta: Cents::ZERO,
            quantity_delta: 0,
            unrealized_pnl: Cents::ZERO,
        }
    }

    /// Opens a BUY at the quoted price of its side.
    pub fn open_position(
        &mut self,
        decision: &Decision,
        snapshot: &MarketSnapshot,
        at: DateTime<Utc>,
    ) -> Result<LedgerEntry, SimError> {
        let side = decision
            .action
            .buy_side()
            .ok_or_else(|| SimError::NotABuy(decision.market_id.clone()))?;
        let amount = decision
            .amount
            .filter(|a| *a > Cents::ZERO)
            .ok_or_else(|| SimError::NotABuy(decision.market_id.clone()))?;
        let id = &snapshot.condition_id;
        if self.open_positions.contains_key(id) {
            return Err(SimError::AlreadyOpen(id.clone()));
        }
        if self.open_positions.len() >= self.max_open {
            return Err(SimError::PositionLimitReached(self.max_open));
        }
        if amount > self.available {
            return Err(SimError::InsufficientCapital {
                need: amount,
                have: self.available,
            });
        }
        let price = snapshot.side_price(side);
        if !(price > 0.0 && price < 1.0) {
            return Err(SimError::InvalidPrice { id: id.clone(), price });
        }
        let quantity = shares_for(amount, price);
        self.available -= amount;
        self.deployed += amount;
        self.open_positions.insert(
            id.clone(),
            Position {
                condition_id: id.clone(),
                side,
                entry_price: price,
                quantity,
                cost_basis: amount,
                opened_at: at,
                unrealized_pnl: Cents::ZERO,
                realized_pnl: Cents::ZERO,
            },
        );
        self.check();
        let mut e = self.entry(EntryKind::Open, id, side, price, at);
        e.basis_delta = amount;
        e.available_delta = -amount;
        e.quantity_delta = quantity;
        Ok(e)
    }

    /// Re-marks one position at `snapshot`.
    pub fn mark(&mut self, snapshot: &MarketSnapshot, at: DateTime<Utc>) -> Result<LedgerEntry, SimError> {
        let id = snapshot.condition_id.clone();
        let pos = self
            .open_positions
            .get_mut(&id)
            .ok_or_else(|| SimError::NoSuchPosition(id.clone()))?;
        let price = snapshot.side_price(pos.side);
        pos.unrealized_pnl = value_of(pos.quantity, price) - pos.cost_basis;
        let (side, u) = (pos.side, pos.unrealized_pnl);
        self.check();
        let mut e = self.entry(EntryKind::Mark, &id, side, price, at);
        e.unrealized_pnl = u;
        Ok(e)
    }

    /// Marks every open position; fails on the first one without a snapshot
    /// and leaves earlier marks applied.
    pub fn mark_to_market<'a>(
        &mut self,
        lookup: impl Fn(&str) -> Option<&'a MarketSnapshot>,
        at: DateTime<Utc>,
    ) -> Result<Vec<LedgerEntry>, SimError> {
        let ids: Vec<String> = self.open_positions.keys().cloned().collect();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let snap = lookup(&id).ok_or(SimError::MissingSnapshot(id))?;
            out.push(self.mark(snap, at)?);
        }
        Ok(out)
    }

    /// Closes `fraction` percent of a position at the current quote. Returns
    /// the ledger entry and, when the position is gone, its total P&L.
    pub fn close_position(
        &mut self,
        condition_id: &str,
        fraction: u8,
        snapshot: &MarketSnapshot,
        at: DateTime<Utc>,
    ) -> Result<(LedgerEntry, Option<Realized>), SimError> {
        if !(1..=100).contains(&fraction) {
            return Err(SimError::InvalidFraction(fraction));
        }
        let pos = self
            .open_positions
            .get_mut(condition_id)
            .ok_or_else(|| SimError::NoSuchPosition(condition_id.to_string()))?;
        let price = snapshot.side_price(pos.side);
        let (qty, basis) = if fraction == 100 {
            (pos.quantity, pos.cost_basis)
        } else {
            let f = i128::from(fraction);
            (
                (i128::from(pos.quantity) * f / 100) as i64,
                Cents((i128::from(pos.cost_basis.0) * f / 100) as i64),
            )
        };
        let proceeds = value_of(qty, price);
        let pnl = proceeds - basis;
        pos.quantity -= qty;
        pos.cost_basis -= basis;
        pos.realized_pnl += pnl;
        pos.unrealized_pnl = value_of(pos.quantity, price) - pos.cost_basis;
        let side = pos.side;
        let remaining_u = pos.unrealized_pnl;
        let done = pos.quantity == 0;
        let realized = if done {
            let p = self.open_positions.remove(condition_id).expect("present");
            Some(Realized {
                condition_id: p.condition_id,
                side: p.side,
                pnl: p.realized_pnl,
            })
        } else {
            None
        };
        self.available += proceeds;
        self.deployed -= basis;
        self.total_capital += pnl;
        self.check();
        let mut e = self.entry(EntryKind::Close, condition_id, side, price, at);
        e.cash_delta = pnl;
        e.basis_delta = -basis;
        e.available_delta = proceeds;
        e.quantity_delta = -qty;
        e.unrealized_pnl = if done { Cents::ZERO } else { remaining_u };
        Ok((e, realized))
    }

    /// Settles a position at $1 per winning share. No position: no entry.
    pub fn resolve_market(&mut self, outcome: &ResolvedOutcome) -> Option<(LedgerEntry, Realized)> {
        let pos = self.open_positions.remove(&outcome.condition_id)?;
        let win = pos.side == outcome.outcome.winning_side();
        let price = if win { 1.0 } else { 0.0 };
        let proceeds = value_of(pos.quantity, price);
        let pnl = proceeds - pos.cost_basis;
        self.available += proceeds;
        self.deployed -= pos.cost_basis;
        self.total_capital += pnl;
        self.check();
        let mut e = self.entry(
            EntryKind::Resolve,
            &pos.condition_id,
            pos.side,
            price,
            outcome.resolved_at,
        );
        e.cash_delta = pnl;
        e.basis_delta = -pos.cost_basis;
        e.available_delta = proceeds;
        e.quantity_delta = -pos.quantity;
        let realized = Realized {
            condition_id: pos.condition_id,
            side: pos.side,
            pnl: pos.realized_pnl + pnl,
        };
        Some((e, realized))
    }

    /// Applies one ledger entry. This is the fold step for replay.
    pub fn apply(&mut self, e: &LedgerEntry) -> Result<(), LedgerError> {
        if e.seq != self.next_seq {
            return Err(LedgerError::OutOfSequence {
                expected: self.next_seq,
                found: e.seq,
            });
        }
        let missing = || LedgerError::UnknownPosition(e.condition_id.clone());
        match e.kind {
            EntryKind::Open => {
                self.open_positions.insert(
                    e.condition_id.clone(),
                    Position {
                        condition_id: e.condition_id.clone(),
                        side: e.side,
                        entry_price: e.price,
                        quantity: e.quantity_delta,
                        cost_basis: e.basis_delta,
                        opened_at: e.timestamp,
                        unrealized_pnl: Cents::ZERO,
                        realized_pnl: Cents::ZERO,
                    },
                );
            }
            EntryKind::Mark => {
                let pos = self.open_positions.get_mut(&e.condition_id).ok_or_else(missing)?;
                pos.unrealized_pnl = e.unrealized_pnl;
            }
            EntryKind::Close | EntryKind::Resolve => {
                let pos = self.open_positions.get_mut(&e.condition_id).ok_or_else(missing)?;
                pos.quantity += e.quantity_delta;
                pos.cost_basis += e.basis_delta;
                pos.realized_pnl += e.cash_delta;
                pos.unrealized_pnl = e.unrealized_pnl;
                if pos.quantity == 0 || e.kind == EntryKind::Resolve {
                    self.open_positions.remove(&e.condition_id);
                }
            }
        }
        self.total_capital += e.cash_delta;
        self.available += e.available_delta;
        self.deployed += e.basis_delta;
        self.next_seq += 1;
        self.check();
        Ok(())
    }

    /// Rebuilds a portfolio from its initial state and ledger.
    pub fn replay(capital: Cents, max_open: usize, entries: &[LedgerEntry]) -> Result<Portfolio, LedgerError> {
        let mut p = Portfolio::new(capital, max_open);
        for e in entries {
            p.apply(e)?;
        }
        Ok(p)
    }

    /// The agent-facing view, with trigger flags from the last mark.
    pub fn view(&self) -> PortfolioView {
        PortfolioView {
            total_capital: self.total_capital,
            available: self.available,
            deployed: self.deployed,
            open_positions: self
                .open_positions
                .values()
                .map(|p| OpenPositionView {
                    condition_id: p.condition_id.clone(),
                    side: p.side,
                    entry_price: p.entry_price,
                    cost_basis: p.cost_basis,
                    unrealized_pnl: p.unrealized_pnl,
                    must_close: p.trigger() != Trigger::None,
                })
                .collect(),
            max_open: self.max_open,
        }
    }
}
