//! The evaluation loop: manifest, event log, per-cycle orchestration,
//! checkpoints, token-budget sweeps and significance testing.
//!
//! A run directory holds everything needed to audit or resume a run:
//!
//! ```text
//! <run>/manifest.json        written before the first cycle
//! <run>/contracts/           content-addressed locked contracts
//! <run>/events.jsonl         append-only event log
//! <run>/ledgers/<agent>.jsonl
//! <run>/checkpoint.json      last completed cycle boundary
//! <run>/digests.json         sha256 of the log, ledgers and manifest
//! ```

mod engine;
mod source;
mod stats;
mod sweep;
mod verify;

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, DecisionBatch, ForecastRecord};
use crate::baselines::BaselineForecast;
use crate::config::{ConfigError, EngineConfig, FeedKind};
use crate::contract::{ContractError, RenderError, StoreError};
use crate::jsonl::JsonlError;
use crate::market_data::{EventCategory, FeedError, LiveError, MarketSnapshot, ResolvedOutcome, SyntheticError};
use crate::metrics::{DriftReport, MetricsError};
use crate::money::Cents;
use crate::simulator::{LedgerEntry, LedgerError, Portfolio, Realized, StepOutcome};

pub use engine::{resume_run, resume_with_agents, run_evaluation, run_with_agents, RunOptions, RunSummary};
pub use source::{build_agents, build_source, FeedSource};
pub use stats::{significance_test, significance_test_with, Significance};
pub use sweep::{token_budget_sweep, BudgetRow, SweepReport};
pub use verify::{verify_run, VerifyReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const DIGESTS_FILE: &str = "digests.json";
pub const CONTRACTS_DIR: &str = "contracts";
pub const LEDGERS_DIR: &str = "ledgers";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Feed(#[from] FeedError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Live(#[from] LiveError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no checkpoint in {0}")]
    NoCheckpoint(PathBuf),
    #[error("run in {0} already completed")]
    AlreadyCompleted(PathBuf),
    #[error("run directory {0} already holds a run; resume it or pick another id")]
    RunExists(PathBuf),
    #[error("agents do not match the manifest: {0}")]
    AgentMismatch(String),
    #[error("feed has no markets to evaluate")]
    NoMarkets,
    /// Every market failed to fetch. The run stops with its last checkpoint
    /// intact.
    #[error("cycle {cycle}: no market could be fetched ({last_error})")]
    FatalFeed { cycle: usize, last_error: String },
}

/// Where the market data came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedSourceInfo {
    pub kind: FeedKind,
    /// File path, endpoint, or synthetic generator description.
    pub locator: String,
    /// Digest of the snapshot stream for file and synthetic sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_digest: Option<String>,
}

/// Immutable description of a run, written before the first cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    /// Hex digests of every contract the run uses.
    pub contract_hashes: Vec<String>,
    pub agent_ids: Vec<String>,
    pub feed_source: FeedSourceInfo,
    pub cycle_interval_secs: i64,
    pub cycles: usize,
    pub metric_config: EngineConfig,
    pub started_at: DateTime<Utc>,
}

/// Compact capital summary stored alongside events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortfolioSummary {
    pub initial_capital: Cents,
    pub total_capital: Cents,
    pub available: Cents,
    pub deployed: Cents,
    pub open_positions: usize,
    pub realized_pnl: Cents,
    pub unrealized_pnl: Cents,
}

impl PortfolioSummary {
    pub fn of(p: &Portfolio) -> Self {
        Self {
            initial_capital: p.initial_capital,
            total_capital: p.total_capital,
            available: p.available,
            deployed: p.deployed,
            open_positions: p.open_positions.len(),
            realized_pnl: p.realized_pnl(),
            unrealized_pnl: p.unrealized_pnl(),
        }
    }

    pub fn pnl(&self) -> Cents {
        self.total_capital - self.initial_capital
    }
}

/// One agent's complete output for one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle_index: usize,
    pub agent_id: String,
    pub at: DateTime<Utc>,
    pub records: Vec<ForecastRecord>,
    pub batch: DecisionBatch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<AgentError>,
    #[serde(default)]
    pub fence_stripped: bool,
    pub latency_ms: u64,
    /// Mean drift over markets with a previous forecast. Absent on an agent's
    /// first cycle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftReport>,
    pub step: StepOutcome,
    pub portfolio: PortfolioSummary,
}

/// P&L settled for one agent when markets resolve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub agent_id: String,
    pub entries: Vec<LedgerEntry>,
    pub realized: Vec<Realized>,
    pub portfolio: PortfolioSummary,
}

/// Every line in `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    RunStarted {
        run_id: String,
        manifest_sha256: String,
        at: DateTime<Utc>,
    },
    /// Descriptive attributes passed through to the leaderboard.
    AgentMeta {
        agent_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agent_count: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unique_users: Option<u64>,
    },
    Markets {
        cycle_index: usize,
        at: DateTime<Utc>,
        snapshots: Vec<MarketSnapshot>,
        categories: Vec<EventCategory>,
    },
    Baselines {
        cycle_index: usize,
        at: DateTime<Utc>,
        forecasts: Vec<BaselineForecast>,
    },
    AgentCycle(Box<CycleRecord>),
    Resolution {
        at: DateTime<Utc>,
        outcomes: Vec<ResolvedOutcome>,
        settlements: Vec<Settlement>,
    },
    RunCompleted {
        at: DateTime<Utc>,
        cycles: usize,
    },
}

/// Reads a run's event log.
pub fn read_events(path: &Path) -> Result<Vec<Event>, JsonlError> {
    crate::jsonl::read_all(path)
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest, EvalError> {
    let text = std::fs::read_to_string(run_dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(tmp, path)
}
