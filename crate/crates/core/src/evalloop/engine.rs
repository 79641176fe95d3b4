use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::source::{build_agents, build_source, FeedSource};
use super::{
    read_manifest, sha256_hex, write_atomic, CycleRecord, EvalError, Event, PortfolioSummary, RunManifest, Settlement,
    CHECKPOINT_FILE, CONTRACTS_DIR, DIGESTS_FILE, EVENTS_FILE, LEDGERS_DIR, MANIFEST_FILE,
};
use crate::agents::{
    sample_cycle, AgentHistory, CalibrationWindow, ClosedPosition, ForecastRecord, ForecastRequest, Forecaster,
    ThresholdConfig, WindowMode,
};
use crate::baselines::{all_baselines, HistoricalCounts};
use crate::config::EngineConfig;
use crate::contract::{render_template, ContractHash, ContractStore, PromptContract, RenderContext};
use crate::jsonl::Appender;
use crate::market_data::{categorize_event, EventCategory, MarketSnapshot, Outcome, ResolvedOutcome};
use crate::metrics::{drift_report, DriftInputs, DriftReport, TemporalForm};
use crate::par::{self, Execution};
use crate::simulator::{step, LedgerWriter, Portfolio, Realized, StepConfig};

/// Knobs that are not part of the experiment itself.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Parent directory. The run lives in `<out_dir>/<run_id>`.
    pub out_dir: PathBuf,
    /// Defaults to an id derived from the seed and configuration.
    pub run_id: Option<String>,
    pub exec: Execution,
    /// Stop once this many cycles have completed, leaving a checkpoint.
    pub stop_after: Option<usize>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            run_id: None,
            exec: Execution::default(),
            stop_after: None,
        }
    }

    pub fn with_run_id(mut self, id: impl Into<String>) -> Self {
        self.run_id = Some(id.into());
        self
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn stop_after(mut self, cycles: usize) -> Self {
        self.stop_after = Some(cycles);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub run_id: String,
    pub dir: PathBuf,
    pub cycles_completed: usize,
    pub completed: bool,
    pub events_sha256: String,
}

/// Mutable state for one agent, carried across cycles and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AgentState {
    id: String,
    portfolio: Portfolio,
    history: AgentHistory,
    window: CalibrationWindow,
    /// `(last forecast, outcome)` for every resolved market the agent
    /// forecast.
    resolved: Vec<(f64, Outcome)>,
    latest: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    next_cycle: usize,
    events_len: u64,
    ledger_lens: BTreeMap<String, u64>,
    agents: Vec<AgentState>,
    counts: HistoricalCounts,
    resolved_ids: BTreeSet<String>,
    categories: BTreeMap<String, EventCategory>,
    last_at: Option<DateTime<Utc>>,
    completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Digests {
    pub manifest: String,
    pub events: String,
    pub ledgers: BTreeMap<String, String>,
}

/// Runs the configured agents on the configured feed.
pub fn run_evaluation(cfg: &EngineConfig, opts: &RunOptions) -> Result<RunSummary, EvalError> {
    cfg.validate()?;
    let agents = build_agents(cfg)?;
    let source = build_source(cfg, cfg.run.seed, opts.exec)?;
    run_with_agents(cfg, agents, source, opts)
}

/// Runs caller-supplied agents. Agent ids must be unique.
pub fn run_with_agents(
    cfg: &EngineConfig,
    agents: Vec<Box<dyn Forecaster>>,
    source: FeedSource,
    opts: &RunOptions,
) -> Result<RunSummary, EvalError> {
    let run_id = opts.run_id.clone().unwrap_or_else(|| default_run_id(cfg));
    let dir = opts.out_dir.join(&run_id);
    if dir.join(MANIFEST_FILE).exists() {
        return Err(EvalError::RunExists(dir));
    }
    let ids: Vec<String> = agents.iter().map(|a| a.id().to_string()).collect();
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() || ids.is_empty() {
        return Err(EvalError::AgentMismatch(
            "agent ids must be unique and non-empty".into(),
        ));
    }

    let cycles = match source.available() {
        Some(n) => cfg.run.cycles.min(n),
        None => cfg.run.cycles,
    };
    if cycles == 0 {
        return Err(EvalError::NoMarkets);
    }
    let started_at = match &source {
        FeedSource::Static { ticks, .. } => ticks[0][0].observed_at,
        FeedSource::Live { .. } => Utc::now(),
    };

    std::fs::create_dir_all(dir.join(LEDGERS_DIR))?;
    let store = ContractStore::open_with(dir.join(CONTRACTS_DIR), cfg.contract.hash_algorithm)?;
    let (contract, hash) = lock_configured(cfg, started_at)?;
    store.put(&contract)?;
    preflight_render(&contract, cfg)?;

    let manifest = RunManifest {
        run_id: run_id.clone(),
        seed: cfg.run.seed,
        contract_hashes: vec![hash.to_hex()],
        agent_ids: ids.clone(),
        feed_source: source.info().clone(),
        cycle_interval_secs: source.interval_secs(),
        cycles,
        metric_config: cfg.clone(),
        started_at,
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
    write_atomic(&dir.join(MANIFEST_FILE), &manifest_bytes)?;

    let agents_state = ids
        .iter()
        .map(|id| AgentState {
            id: id.clone(),
            portfolio: Portfolio::new(cfg.simulator.initial_capital, cfg.simulator.max_open),
            history: AgentHistory::new(),
            window: CalibrationWindow::new(),
            resolved: Vec::new(),
            latest: BTreeMap::new(),
        })
        .collect();
    let ckpt = Checkpoint {
        next_cycle: 0,
        events_len: 0,
        ledger_lens: ids.iter().map(|id| (id.clone(), 0)).collect(),
        agents: agents_state,
        counts: HistoricalCounts::new(),
        resolved_ids: BTreeSet::new(),
        categories: BTreeMap::new(),
        last_at: None,
        completed: false,
    };

    let mut run = Run::open(cfg, dir, manifest, contract, hash, agents, source, opts.exec, ckpt)?;
    run.emit(&Event::RunStarted {
        run_id,
        manifest_sha256: sha256_hex(&manifest_bytes),
        at: started_at,
    })?;
    for id in &ids {
        run.emit(&Event::AgentMeta {
            agent_id: id.clone(),
            model: None,
            agent_count: None,
            unique_users: None,
        })?;
    }
    run.drive(opts.stop_after)
}

/// Resumes a checkpointed run, rebuilding agents from its manifest.
pub fn resume_run(dir: &Path, opts: &RunOptions) -> Result<RunSummary, EvalError> {
    let manifest = read_manifest(dir)?;
    let agents = build_agents(&manifest.metric_config)?;
    resume_with_agents(dir, agents, opts)
}

/// Resumes a checkpointed run with caller-supplied agents, which must match
/// the manifest's agent ids in order.
pub fn resume_with_agents(
    dir: &Path,
    agents: Vec<Box<dyn Forecaster>>,
    opts: &RunOptions,
) -> Result<RunSummary, EvalError> {
    let manifest = read_manifest(dir)?;
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    if !ckpt_path.exists() {
        return Err(EvalError::NoCheckpoint(dir.to_path_buf()));
    }
    let ckpt: Checkpoint = serde_json::from_slice(&std::fs::read(&ckpt_path)?)?;
    if ckpt.completed {
        return Err(EvalError::AlreadyCompleted(dir.to_path_buf()));
    }
    let ids: Vec<String> = agents.iter().map(|a| a.id().to_string()).collect();
    if ids != manifest.agent_ids {
        return Err(EvalError::AgentMismatch(format!(
            "expected {:?}, got {:?}",
            manifest.agent_ids, ids
        )));
    }
    let cfg = manifest.metric_config.clone();
    let source = build_source(&cfg, manifest.seed, opts.exec)?;
    if source.info() != &manifest.feed_source {
        return Err(EvalError::AgentMismatch("feed no longer matches the manifest".into()));
    }

    truncate(&dir.join(EVENTS_FILE), ckpt.events_len)?;
    for (id, len) in &ckpt.ledger_lens {
        truncate(&ledger_path(dir, id), *len)?;
    }

    let store = ContractStore::open_with(dir.join(CONTRACTS_DIR), cfg.contract.hash_algorithm)?;
    let hash = ContractHash::from_hex(&manifest.contract_hashes[0], cfg.contract.hash_algorithm)
        .ok_or_else(|| EvalError::AgentMismatch("manifest contract hash is malformed".into()))?;
    let contract = store.get(&hash)?;

    let run = Run::open(
        &cfg,
        dir.to_path_buf(),
        manifest,
        contract,
        hash,
        agents,
        source,
        opts.exec,
        ckpt,
    )?;
    run.drive(opts.stop_after)
}

fn truncate(path: &Path, len: u64) -> Result<(), EvalError> {
    let f = OpenOptions::new().write(true).create(true).truncate(false).open(path)?;
    f.set_len(len)?;
    f.sync_all()?;
    Ok(())
}

fn ledger_path(dir: &Path, agent_id: &str) -> PathBuf {
    let safe: String = agent_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    dir.join(LEDGERS_DIR).join(format!("{safe}.jsonl"))
}

pub(crate) fn ledger_path_for(dir: &Path, agent_id: &str) -> PathBuf {
    ledger_path(dir, agent_id)
}

fn default_run_id(cfg: &EngineConfig) -> String {
    let digest = sha256_hex(cfg.to_toml_string().as_bytes());
    format!("run-{}-{}", cfg.run.seed, &digest[..12])
}

pub(crate) fn lock_configured(
    cfg: &EngineConfig,
    created_at: DateTime<Utc>,
) -> Result<(PromptContract, ContractHash), EvalError> {
    let c = &cfg.contract;
    let draft = PromptContract::draft(c.template.clone(), c.version.clone(), c.token_budget, created_at);
    Ok(draft.lock_with(c.hash_algorithm, c.allow_custom_budget)?)
}

fn cycle_context(
    contract: &PromptContract,
    markets: &[MarketSnapshot],
    portfolio: &str,
    now: DateTime<Utc>,
    max_open: usize,
    mode: WindowMode,
) -> RenderContext {
    let mode = match mode {
        WindowMode::FirstCall => "FIRST_CALL",
        WindowMode::Bootstrap => "BOOTSTRAP",
        WindowMode::Calibration => "CALIBRATION",
    };
    RenderContext::for_cycle(contract, markets, portfolio, now)
        .with("trading.max_open_positions", max_open.to_string())
        .with("calibration.mode", mode)
}

fn preflight_render(contract: &PromptContract, cfg: &EngineConfig) -> Result<(), EvalError> {
    let view = Portfolio::new(cfg.simulator.initial_capital, cfg.simulator.max_open).view();
    let ctx = cycle_context(
        contract,
        &[],
        &view.summary(),
        contract.created_at(),
        cfg.simulator.max_open,
        WindowMode::FirstCall,
    );
    render_template(contract.template_text(), &ctx)?;
    Ok(())
}

/// Averages per-market drift into one report.
fn mean_drift(reports: &[DriftReport], form: TemporalForm) -> Option<DriftReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let avg = |f: fn(&DriftReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(DriftReport {
        d_narrative: avg(|r| r.d_narrative),
        d_temporal: avg(|r| r.d_temporal),
        d_temporal_difference: avg(|r| r.d_temporal_difference),
        d_temporal_product: avg(|r| r.d_temporal_product),
        d_confidence: avg(|r| r.d_confidence),
        d_total: avg(|r| r.d_total),
        market_divergence: avg(|r| r.market_divergence),
        low_evidence: reports.iter().any(|r| r.low_evidence),
        form,
    })
}

fn cycle_drift(
    records: &[ForecastRecord],
    markets: &HashMap<&str, &MarketSnapshot>,
    state: &AgentState,
    form: TemporalForm,
) -> Option<DriftReport> {
    let reports: Vec<DriftReport> = records
        .iter()
        .filter_map(|r| {
            let prev = state.history.prev.get(&r.condition_id)?;
            let m_prev = *state.history.prev_prices.get(&r.condition_id)?;
            let m_curr = markets.get(r.condition_id.as_str())?.yes_price;
            Some(drift_report(
                &DriftInputs {
                    p_prev: prev.probability,
                    p_curr: r.probability,
                    m_prev,
                    m_curr,
                    trace_prev: &prev.reasoning_trace,
                    trace_curr: &r.reasoning_trace,
                    history: &state.resolved,
                },
                form,
            ))
        })
        .collect();
    mean_drift(&reports, form)
}

/// Read-only inputs shared by every agent within one cycle.
struct CycleInputs<'a> {
    cycle: usize,
    now: DateTime<Utc>,
    markets: &'a [MarketSnapshot],
    categories: &'a [EventCategory],
    lookup: &'a HashMap<&'a str, &'a MarketSnapshot>,
    contract: &'a PromptContract,
    hash: &'a ContractHash,
    thresholds: &'a ThresholdConfig,
    step_cfg: &'a StepConfig,
    cfg: &'a EngineConfig,
    seed: u64,
}

fn run_agent(agent: &dyn Forecaster, state: &mut AgentState, x: &CycleInputs<'_>) -> Result<CycleRecord, EvalError> {
    let view = state.portfolio.view();
    let ctx = cycle_context(
        x.contract,
        x.markets,
        &view.summary(),
        x.now,
        state.portfolio.max_open,
        state.window.mode(),
    );
    let instruction = render_template(x.contract.template_text(), &ctx)?;
    let req = ForecastRequest::new(&instruction, x.markets, x.categories, x.contract.token_budget(), x.now)
        .with_history(&state.history)
        .with_portfolio(&view)
        .with_window(&state.window)
        .with_cycle(x.cycle as u64)
        .with_seed(x.seed);
    let sample = sample_cycle(agent, &req, x.hash, x.thresholds, x.cfg.run.lenient_parsing);
    let drift = cycle_drift(&sample.records, x.lookup, state, x.cfg.metrics.temporal_form);

    let lookup = |id: &str| x.lookup.get(id).copied();
    let outcome = step(&mut state.portfolio, sample.batch.batch(), lookup, x.step_cfg, x.now);
    for r in &outcome.realized {
        state.window.push(closed(r));
    }
    state.history.update(&sample.records, x.markets);
    for r in &sample.records {
        state.latest.insert(r.condition_id.clone(), r.probability);
    }
    Ok(CycleRecord {
        cycle_index: x.cycle,
        agent_id: state.id.clone(),
        at: x.now,
        records: sample.records,
        batch: sample.batch.into_inner(),
        failure: sample.failure,
        fence_stripped: sample.fence_stripped,
        latency_ms: sample.latency_ms,
        drift,
        step: outcome,
        portfolio: PortfolioSummary::of(&state.portfolio),
    })
}

fn closed(r: &Realized) -> ClosedPosition {
    ClosedPosition {
        condition_id: r.condition_id.clone(),
        side: r.side,
        pnl: r.pnl,
    }
}

struct Run<'a> {
    cfg: &'a EngineConfig,
    dir: PathBuf,
    manifest: RunManifest,
    contract: PromptContract,
    hash: ContractHash,
    agents: Vec<Box<dyn Forecaster>>,
    source: FeedSource,
    exec: Execution,
    events: Appender,
    ledgers: Vec<LedgerWriter>,
    ckpt: Checkpoint,
}

impl<'a> Run<'a> {
    #[allow(clippy::too_many_arguments)]
    fn open(
        cfg: &'a EngineConfig,
        dir: PathBuf,
        manifest: RunManifest,
        contract: PromptContract,
        hash: ContractHash,
        agents: Vec<Box<dyn Forecaster>>,
        source: FeedSource,
        exec: Execution,
        ckpt: Checkpoint,
    ) -> Result<Self, EvalError> {
        let events = Appender::open(&dir.join(EVENTS_FILE))?;
        let ledgers = agents
            .iter()
            .map(|a| LedgerWriter::open(&ledger_path(&dir, a.id())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            cfg,
            dir,
            manifest,
            contract,
            hash,
            agents,
            source,
            exec,
            events,
            ledgers,
            ckpt,
        })
    }

    fn emit(&mut self, e: &Event) -> Result<(), EvalError> {
        self.events.append(e)?;
        Ok(())
    }

    fn drive(mut self, stop_after: Option<usize>) -> Result<RunSummary, EvalError> {
        let total = self.manifest.cycles;
        while self.ckpt.next_cycle < total {
            if stop_after.is_some_and(|s| self.ckpt.next_cycle >= s) {
                self.checkpoint()?;
                return self.summary();
            }
            let t = self.ckpt.next_cycle;
            if t > 0 {
                if let FeedSource::Live { interval, .. } = &self.source {
                    std::thread::sleep(*interval);
                }
            }
            self.cycle(t)?;
            self.ckpt.next_cycle = t + 1;
            self.checkpoint()?;
        }
        self.finish()?;
        self.summary()
    }

    fn summary(&self) -> Result<RunSummary, EvalError> {
        let bytes = std::fs::read(self.dir.join(EVENTS_FILE))?;
        Ok(RunSummary {
            run_id: self.manifest.run_id.clone(),
            dir: self.dir.clone(),
            cycles_completed: self.ckpt.next_cycle,
            completed: self.ckpt.completed,
            events_sha256: sha256_hex(&bytes),
        })
    }

    fn cycle(&mut self, t: usize) -> Result<(), EvalError> {
        let tick = self.source.tick(t)?;
        let now = match &self.source {
            FeedSource::Static { .. } => tick.first().map_or(self.manifest.started_at, |s| s.observed_at),
            FeedSource::Live { .. } => Utc::now(),
        };

        let due: Vec<ResolvedOutcome> = self
            .source
            .outcomes()
            .iter()
            .filter(|o| o.resolved_at <= now && !self.ckpt.resolved_ids.contains(&o.condition_id))
            .cloned()
            .collect();
        if !due.is_empty() {
            self.resolve(due, now)?;
        }

        let markets: Vec<MarketSnapshot> = tick
            .into_iter()
            .filter(|s| !self.ckpt.resolved_ids.contains(&s.condition_id))
            .collect();
        let rules = &self.cfg.categorization;
        let categories: Vec<EventCategory> = markets
            .iter()
            .map(|m| categorize_event(&m.question, m.end_time, now, m.yes_price, rules))
            .collect();
        for (m, c) in markets.iter().zip(&categories) {
            self.ckpt.categories.insert(m.condition_id.clone(), *c);
        }
        self.emit(&Event::Markets {
            cycle_index: t,
            at: now,
            snapshots: markets.clone(),
            categories: categories.clone(),
        })?;
        let forecasts = markets
            .iter()
            .zip(&categories)
            .flat_map(|(m, c)| all_baselines(m, c, &self.ckpt.counts, &self.cfg.baselines))
            .collect();
        self.emit(&Event::Baselines {
            cycle_index: t,
            at: now,
            forecasts,
        })?;

        let lookup: HashMap<&str, &MarketSnapshot> = markets.iter().map(|m| (m.condition_id.as_str(), m)).collect();
        let thresholds = ThresholdConfig {
            batch_size: self.cfg.thresholds.batch_size.min(markets.len()),
            ..self.cfg.thresholds.clone()
        };
        let step_cfg = StepConfig {
            mode: self.cfg.simulator.mode,
            delta: self.cfg.simulator.delta,
        };
        let inputs = CycleInputs {
            cycle: t,
            now,
            markets: &markets,
            categories: &categories,
            lookup: &lookup,
            contract: &self.contract,
            hash: &self.hash,
            thresholds: &thresholds,
            step_cfg: &step_cfg,
            cfg: self.cfg,
            seed: self.manifest.seed,
        };
        let mut slots: Vec<(&dyn Forecaster, &mut AgentState)> = self
            .agents
            .iter()
            .map(|a| a.as_ref())
            .zip(self.ckpt.agents.iter_mut())
            .collect();
        let results = par::map_mut(self.exec, &mut slots, |(agent, state)| {
            run_agent(*agent, state, &inputs)
        });

        for (i, r) in results.into_iter().enumerate() {
            let rec = r?;
            self.ledgers[i].append(&rec.step.entries)?;
            self.emit(&Event::AgentCycle(Box::new(rec)))?;
        }
        self.ckpt.last_at = Some(now);
        Ok(())
    }

    fn resolve(&mut self, due: Vec<ResolvedOutcome>, at: DateTime<Utc>) -> Result<(), EvalError> {
        for o in &due {
            self.ckpt.resolved_ids.insert(o.condition_id.clone());
            if let Some(cat) = self.ckpt.categories.get(&o.condition_id) {
                self.ckpt.counts.add(cat, o.outcome);
            }
        }
        let mut settlements = Vec::with_capacity(self.ckpt.agents.len());
        for (i, state) in self.ckpt.agents.iter_mut().enumerate() {
            let mut entries = Vec::new();
            let mut realized = Vec::new();
            for o in &due {
                if let Some((e, r)) = state.portfolio.resolve_market(o) {
                    entries.push(e);
                    state.window.push(closed(&r));
                    realized.push(r);
                }
                if let Some(&p) = state.latest.get(&o.condition_id) {
                    state.resolved.push((p, o.outcome));
                }
            }
            self.ledgers[i].append(&entries)?;
            settlements.push(Settlement {
                agent_id: state.id.clone(),
                entries,
                realized,
                portfolio: PortfolioSummary::of(&state.portfolio),
            });
        }
        self.emit(&Event::Resolution {
            at,
            outcomes: due,
            settlements,
        })
    }

    fn finish(&mut self) -> Result<(), EvalError> {
        let at = self.ckpt.last_at.unwrap_or(self.manifest.started_at);
        let remaining: Vec<ResolvedOutcome> = self
            .source
            .outcomes()
            .iter()
            .filter(|o| !self.ckpt.resolved_ids.contains(&o.condition_id))
            .cloned()
            .collect();
        if !remaining.is_empty() {
            self.resolve(remaining, at)?;
        }
        self.emit(&Event::RunCompleted {
            at,
            cycles: self.ckpt.next_cycle,
        })?;
        self.ckpt.completed = true;
        self.checkpoint()
    }

    /// Flushes every file, then records their lengths and the run state.
    fn checkpoint(&mut self) -> Result<(), EvalError> {
        self.events.sync()?;
        for l in &mut self.ledgers {
            l.sync()?;
        }
        self.ckpt.events_len = std::fs::metadata(self.dir.join(EVENTS_FILE))?.len();
        let mut ledger_digests = BTreeMap::new();
        for a in &self.agents {
            let p = ledger_path(&self.dir, a.id());
            let bytes = std::fs::read(&p)?;
            self.ckpt.ledger_lens.insert(a.id().to_string(), bytes.len() as u64);
            ledger_digests.insert(a.id().to_string(), sha256_hex(&bytes));
        }
        for s in &self.ckpt.agents {
            s.portfolio.check();
        }
        let digests = Digests {
            manifest: sha256_hex(&std::fs::read(self.dir.join(MANIFEST_FILE))?),
            events: sha256_hex(&std::fs::read(self.dir.join(EVENTS_FILE))?),
            ledgers: ledger_digests,
        };
        write_atomic(&self.dir.join(DIGESTS_FILE), &serde_json::to_vec_pretty(&digests)?)?;
        write_atomic(&self.dir.join(CHECKPOINT_FILE), &serde_json::to_vec(&self.ckpt)?)?;
        Ok(())
    }
}
