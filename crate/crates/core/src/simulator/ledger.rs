use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::jsonl::{self, Appender, JsonlError};
use crate::market_data::Side;
use crate::money::Cents;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntryKind {
    Open,
    Close,
    Resolve,
    Mark,
}

/// One ledger line. `cash_delta` is the change in total capital, which is
/// the realized P&L of a CLOSE or RESOLVE and zero otherwise. The other
/// deltas carry enough to rebuild the portfolio by folding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub kind: EntryKind,
    pub condition_id: String,
    pub timestamp: DateTime<Utc>,
    pub side: Side,
    /// Fill, mark or settlement price of the position's side.
    pub price: f64,
    pub cash_delta: Cents,
    pub basis_delta: Cents,
    pub available_delta: Cents,
    pub quantity_delta: i64,
    /// The position's unrealized P&L after this entry.
    pub unrealized_pnl: Cents,
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("ledger sequence broken: expected {expected}, found {found}")]
    OutOfSequence { expected: u64, found: u64 },
    #[error("entry refers to a position that is not open: {0}")]
    UnknownPosition(String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Append-only JSON-lines ledger. Call [`LedgerWriter::sync`] at cycle
/// boundaries.
pub struct LedgerWriter {
    out: Appender,
    last_seq: Option<u64>,
}

impl LedgerWriter {
    pub fn open(path: &Path) -> Result<Self, LedgerError> {
        let last_seq = if path.exists() {
            read_ledger(path)?.last().map(|e| e.seq)
        } else {
            None
        };
        Ok(Self {
            out: Appender::open(path)?,
            last_seq,
        })
    }

    pub fn append(&mut self, entries: &[LedgerEntry]) -> Result<(), LedgerError> {
        for e in entries {
            let expected = self.last_seq.map_or(0, |s| s + 1);
            if e.seq != expected {
                return Err(LedgerError::OutOfSequence { expected, found: e.seq });
            }
            self.out.append(e)?;
            self.last_seq = Some(e.seq);
        }
        Ok(())
    }

    pub fn sync(&mut self) -> Result<(), LedgerError> {
        Ok(self.out.sync()?)
    }
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerEntry>, LedgerError> {
    Ok(jsonl::read_all(path)?)
}
