//! Leaderboards and diagnostics computed from an event log.
//!
//! Aggregation is a single fold over events, so a partial log from an
//! interrupted run yields the scores of the cycles it contains.

mod emit;

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{ForecastRecord, Strategy};
use crate::baselines::BaselineKind;
use crate::config::{EngineConfig, MetricsConfig};
use crate::evalloop::{read_manifest, CycleRecord, Event, PortfolioSummary, EVENTS_FILE};
use crate::market_data::{EventCategory, LiquidityTier, Outcome, Side};
use crate::metrics::{
    confidence_drift, confidence_reasoning_alignment, confidence_stability, ece_mce, hhis, mean_brier,
    reasoning_quality, risk_adjusted_return, risk_report, score_report, volatility, CompositeScores, MetricsError,
    ReliabilityBin, RiskCategory, RiskReport, ScoreReport,
};
use crate::money::Cents;
use crate::simulator::{EntryKind, ExecutionMode, LedgerEntry};

pub use emit::{emit, emit_reliability_csv, ReportFormat};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("event log line {line} is corrupt: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("i/o error: {0}")]
    IoError(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    #[default]
    Hhis,
    Pnl,
    Brier,
}

impl std::str::FromStr for SortKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "hhis" => Ok(SortKey::Hhis),
            "pnl" => Ok(SortKey::Pnl),
            "brier" => Ok(SortKey::Brier),
            other => Err(format!("unknown sort key {other:?}; expected hhis, pnl or brier")),
        }
    }
}

/// One leaderboard line. CSV output uses this field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub agent_id: String,
    pub model: Option<String>,
    pub hhis: f64,
    pub pnl: Cents,
    pub brier: Option<f64>,
    pub ece: Option<f64>,
    pub d_total: Option<f64>,
    /// Agent Brier minus market-baseline Brier on the same forecasts.
    pub delta_vs_market: Option<f64>,
    pub forecasts: usize,
    pub unique_users: Option<u64>,
    pub agent_count: Option<u64>,
    pub avg_input_tokens: f64,
    pub avg_output_tokens: f64,
    pub failures: usize,
}

/// Mean absolute change between consecutive forecasts on the same market.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentDepth {
    pub transitions: usize,
    pub mean_abs_delta_probability: Option<f64>,
    pub mean_abs_delta_edge: Option<f64>,
    /// In cents.
    pub mean_abs_delta_expected_return: Option<f64>,
}

/// Tail report for one opened position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRisk {
    pub cycle_index: usize,
    pub condition_id: String,
    pub side: Side,
    pub size: Cents,
    pub report: RiskReport,
}

/// The five composite inputs, each in `[0, 1]` except raw drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HhisComponents {
    pub correctness: f64,
    pub calibration: f64,
    pub drift: f64,
    pub risk: f64,
    pub reasoning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub agent_id: String,
    pub score: Option<ScoreReport>,
    pub confidence_stability: Option<f64>,
    pub d_narrative: Option<f64>,
    pub d_temporal: Option<f64>,
    pub d_confidence: Option<f64>,
    /// Confidence drift recomputed at the end against every resolution.
    pub d_confidence_final: Option<f64>,
    pub d_total: Option<f64>,
    pub market_divergence: Option<f64>,
    pub reasoning_quality: f64,
    pub confidence_reasoning_alignment: Option<f64>,
    pub max_drawdown: Cents,
    pub risk_adjusted_return: Option<f64>,
    pub trades: usize,
    pub trigger_closes: usize,
    pub fence_stripped: usize,
    pub cycles: usize,
    pub successes: usize,
    pub failures: usize,
    /// Share of forecasts carrying each strategy label. Sums to one when
    /// the agent made any forecast.
    pub strategy_frequency: BTreeMap<String, f64>,
    pub adjustment: AdjustmentDepth,
    pub components: HhisComponents,
    pub composite: CompositeScores,
    /// The worst position's tail figures, or a low-risk report when the
    /// agent never opened one.
    pub risk: RiskReport,
    pub positions: Vec<PositionRisk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub kind: BaselineKind,
    pub n: usize,
    pub brier: Option<f64>,
    pub ece: Option<f64>,
    pub score: Option<ScoreReport>,
}

/// One subject's results on one category slice.
///
/// `brier` averages the forecasts made while the market sat in the slice.
/// `pnl` books each market's ledger cash in the slice it occupied at its
/// last observation, so an agent's slice P&L within a dimension adds up to
/// its total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub subject: String,
    pub dimension: String,
    pub value: String,
    pub n: usize,
    pub brier: Option<f64>,
    pub pnl: Cents,
}

/// Reliability bins of one subject, for plotting elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub subject: String,
    pub bin: usize,
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub empirical_accuracy: Option<f64>,
}

fn reliability_rows(subject: &str, bins: &[ReliabilityBin]) -> Vec<ReliabilityRow> {
    bins.iter()
        .enumerate()
        .map(|(i, b)| ReliabilityRow {
            subject: subject.to_string(),
            bin: i,
            bin_low: b.bin_low,
            bin_high: b.bin_high,
            count: b.count,
            mean_confidence: b.mean_confidence,
            empirical_accuracy: b.empirical_accuracy,
        })
        .collect()
}

/// Slice dimensions in report order. Markets never seen in a tick fall
/// under `unknown`.
pub const DIMENSIONS: [&str; 4] = ["risk", "domain", "horizon", "liquidity"];
const UNKNOWN: &str = "unknown";

fn slice_values(cat: Option<&EventCategory>, tier: Option<LiquidityTier>) -> [&'static str; 4] {
    [
        cat.map_or(UNKNOWN, |c| c.risk.as_str()),
        cat.map_or(UNKNOWN, |c| c.domain.as_str()),
        cat.map_or(UNKNOWN, |c| c.horizon.as_str()),
        tier.map_or(UNKNOWN, |t| t.as_str()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleScore {
    pub cycle_index: usize,
    pub agent_id: String,
    pub n: usize,
    pub brier: f64,
    pub market_brier: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sort: SortKey,
    pub leaderboard: Vec<LeaderboardRow>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub baselines: Vec<BaselineRow>,
    pub categories: Vec<CategoryRow>,
    pub per_cycle: Vec<CycleScore>,
    pub reliability: Vec<ReliabilityRow>,
}

impl Aggregate {
    pub fn row(&self, agent_id: &str) -> Option<&LeaderboardRow> {
        self.leaderboard.iter().find(|r| r.agent_id == agent_id)
    }

    pub fn diagnostics_for(&self, agent_id: &str) -> Option<&DiagnosticsRow> {
        self.diagnostics.iter().find(|r| r.agent_id == agent_id)
    }
}

/// Parses an event log, naming the first bad line.
pub fn read_event_log(path: &Path) -> Result<Vec<Event>, ReportError> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line).map_err(|e| ReportError::CorruptLog {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(e);
    }
    Ok(out)
}

/// Aggregates a run directory with the configuration in its manifest.
pub fn aggregate_run(dir: &Path, sort: SortKey) -> Result<Aggregate, ReportError> {
    let cfg = read_manifest(dir).map(|m| m.metric_config).unwrap_or_default();
    let events = read_event_log(&dir.join(EVENTS_FILE))?;
    aggregate(&events, &cfg, sort)
}

#[derive(Default)]
struct AgentAcc<'a> {
    meta_model: Option<String>,
    unique_users: Option<u64>,
    agent_count: Option<u64>,
    cycles: Vec<&'a CycleRecord>,
    capital: Vec<Cents>,
    entries: Vec<&'a LedgerEntry>,
    last: Option<&'a PortfolioSummary>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn max_drawdown(series: &[Cents]) -> Cents {
    let mut peak = match series.first() {
        Some(&c) => c,
        None => return Cents::ZERO,
    };
    let mut worst = Cents::ZERO;
    for &c in series {
        peak = peak.max(c);
        worst = worst.max(peak - c);
    }
    worst
}

fn severity(c: RiskCategory) -> u8 {
    match c {
        RiskCategory::Low => 0,
        RiskCategory::Medium => 1,
        RiskCategory::High => 2,
    }
}

fn adjustment_depth<'a>(records: impl IntoIterator<Item = &'a ForecastRecord>) -> AdjustmentDepth {
    let mut prev: HashMap<&str, &ForecastRecord> = HashMap::new();
    let (mut dp, mut de, mut der) = (Vec::new(), Vec::new(), Vec::new());
    for r in records {
        if let Some(q) = prev.insert(&r.condition_id, r) {
            dp.push((r.probability - q.probability).abs());
            if let (Some(a), Some(b)) = (r.edge, q.edge) {
                de.push((a - b).abs());
            }
            if let (Some(a), Some(b)) = (r.expected_return, q.expected_return) {
                der.push((a - b).as_f64().abs());
            }
        }
    }
    AdjustmentDepth {
        transitions: dp.len(),
        mean_abs_delta_probability: mean(dp),
        mean_abs_delta_edge: mean(de),
        mean_abs_delta_expected_return: mean(der),
    }
}

type Slices<'k> = BTreeMap<(usize, &'k str), (f64, usize, Cents)>;

fn slice_rows(subject: &str, slices: Slices<'_>) -> Vec<CategoryRow> {
    slices
        .into_iter()
        .map(|((dim, val), (sum, n, pnl))| CategoryRow {
            subject: subject.to_string(),
            dimension: DIMENSIONS[dim].to_string(),
            value: val.to_string(),
            n,
            brier: (n > 0).then(|| sum / n as f64),
            pnl,
        })
        .collect()
}

/// Folds events into leaderboard, diagnostics and breakdown tables.
pub fn aggregate(events: &[Event], cfg: &EngineConfig, sort: SortKey) -> Result<Aggregate, ReportError> {
    let m: &MetricsConfig = &cfg.metrics;
    let mut order: Vec<String> = Vec::new();
    let mut agents: HashMap<String, AgentAcc<'_>> = HashMap::new();
    let mut outcomes: HashMap<&str, Outcome> = HashMap::new();
    let mut categories: HashMap<(usize, &str), (EventCategory, LiquidityTier)> = HashMap::new();
    let mut last_category: HashMap<&str, (EventCategory, LiquidityTier)> = HashMap::new();
    let mut market_price: HashMap<(usize, &str), f64> = HashMap::new();
    let mut price_history: HashMap<&str, Vec<(usize, f64)>> = HashMap::new();
    let mut baseline_fc: Vec<(usize, BaselineKind, &str, f64)> = Vec::new();

    let touch = |order: &mut Vec<String>, agents: &mut HashMap<String, AgentAcc<'_>>, id: &str| {
        if !agents.contains_key(id) {
            order.push(id.to_string());
            agents.insert(id.to_string(), AgentAcc::default());
        }
    };

    for e in events {
        match e {
            Event::RunStarted { .. } | Event::RunCompleted { .. } => {}
            Event::AgentMeta {
                agent_id,
                model,
                agent_count,
                unique_users,
            } => {
                touch(&mut order, &mut agents, agent_id);
                let a = agents.get_mut(agent_id).expect("inserted");
                a.meta_model = model.clone().or(a.meta_model.take());
                a.agent_count = agent_count.or(a.agent_count);
                a.unique_users = unique_users.or(a.unique_users);
            }
            Event::Markets {
                cycle_index,
                snapshots,
                categories: cats,
                ..
            } => {
                for (s, c) in snapshots.iter().zip(cats) {
                    let id = s.condition_id.as_str();
                    categories.insert((*cycle_index, id), (*c, s.liquidity_tier));
                    last_category.insert(id, (*c, s.liquidity_tier));
                    market_price.insert((*cycle_index, id), s.yes_price);
                    price_history.entry(id).or_default().push((*cycle_index, s.yes_price));
                }
            }
            Event::Baselines {
                cycle_index, forecasts, ..
            } => {
                for f in forecasts {
                    baseline_fc.push((*cycle_index, f.kind, f.condition_id.as_str(), f.probability));
                }
            }
            Event::AgentCycle(rec) => {
                touch(&mut order, &mut agents, &rec.agent_id);
                let a = agents.get_mut(&rec.agent_id).expect("inserted");
                a.cycles.push(rec);
                a.capital.push(rec.portfolio.total_capital);
                a.entries.extend(&rec.step.entries);
                a.last = Some(&rec.portfolio);
            }
            Event::Resolution {
                outcomes: outs,
                settlements,
                ..
            } => {
                for o in outs {
                    outcomes.insert(o.condition_id.as_str(), o.outcome);
                }
                for s in settlements {
                    touch(&mut order, &mut agents, &s.agent_id);
                    let a = agents.get_mut(&s.agent_id).expect("inserted");
                    a.capital.push(s.portfolio.total_capital);
                    a.entries.extend(&s.entries);
                    a.last = Some(&s.portfolio);
                }
            }
        }
    }

    let mut leaderboard = Vec::new();
    let mut diagnostics = Vec::new();
    let mut cat_rows = Vec::new();
    let mut per_cycle = Vec::new();
    let mut reliability = Vec::new();

    for id in &order {
        let a = &agents[id];
        let mut scored: Vec<(f64, Outcome)> = Vec::new();
        let mut scored_market: Vec<(f64, Outcome)> = Vec::new();
        let mut confidences = Vec::new();
        let mut slices: Slices<'_> = BTreeMap::new();
        let mut cycle_acc: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
        let mut final_p: BTreeMap<&str, f64> = BTreeMap::new();
        let mut strategy_counts: BTreeMap<Strategy, usize> = Strategy::ALL.iter().map(|&s| (s, 0)).collect();
        let (mut tok_in, mut tok_out, mut n_rec) = (0u64, 0u64, 0u64);

        for rec in &a.cycles {
            for r in &rec.records {
                tok_in += u64::from(r.input_tokens);
                tok_out += u64::from(r.output_tokens);
                n_rec += 1;
                *strategy_counts.entry(r.strategy).or_default() += 1;
                confidences.push(f64::from(r.confidence) / 10.0);
                final_p.insert(&r.condition_id, r.probability);
                let Some(&o) = outcomes.get(r.condition_id.as_str()) else {
                    continue;
                };
                let b = crate::metrics::brier(r.probability, o);
                scored.push((r.probability, o));
                let key = (rec.cycle_index, r.condition_id.as_str());
                if let Some(&mp) = market_price.get(&key) {
                    scored_market.push((mp, o));
                    let c = cycle_acc.entry(rec.cycle_index).or_default();
                    c.0 += b;
                    c.1 += crate::metrics::brier(mp, o);
                    c.2 += 1;
                }
                let seen = categories.get(&key);
                for (dim, val) in slice_values(seen.map(|s| &s.0), seen.map(|s| s.1))
                    .into_iter()
                    .enumerate()
                {
                    let e = slices.entry((dim, val)).or_insert((0.0, 0, Cents::ZERO));
                    e.0 += b;
                    e.1 += 1;
                }
            }
        }
        for entry in &a.entries {
            let seen = last_category.get(entry.condition_id.as_str());
            for (dim, val) in slice_values(seen.map(|s| &s.0), seen.map(|s| s.1))
                .into_iter()
                .enumerate()
            {
                slices.entry((dim, val)).or_insert((0.0, 0, Cents::ZERO)).2 += entry.cash_delta;
            }
        }

        let score = if scored.is_empty() {
            None
        } else {
            Some(score_report(&scored, m.bins, m.log_eps)?)
        };
        let market_brier = mean_brier(&scored_market);
        let delta = match (&score, market_brier) {
            (Some(s), Some(mb)) if scored_market.len() == scored.len() => Some(s.brier - mb),
            _ => None,
        };

        let drifts: Vec<_> = a.cycles.iter().filter_map(|c| c.drift.as_ref()).collect();
        let d_n = mean(drifts.iter().map(|d| d.d_narrative));
        let d_t = mean(drifts.iter().map(|d| d.d_temporal));
        let d_c = mean(drifts.iter().map(|d| d.d_confidence));
        let d_total = mean(drifts.iter().map(|d| d.d_total));
        let div = mean(drifts.iter().map(|d| d.market_divergence));
        let quality: Vec<f64> = drifts
            .iter()
            .map(|d| reasoning_quality(d.d_narrative, d.d_confidence))
            .collect();
        let q = mean(quality.iter().copied()).unwrap_or(1.0);
        let cycle_conf: Vec<f64> = a
            .cycles
            .iter()
            .filter(|c| c.drift.is_some())
            .map(|c| mean(c.records.iter().map(|r| f64::from(r.confidence) / 10.0)).unwrap_or(0.0))
            .collect();
        let alignment = confidence_reasoning_alignment(&cycle_conf, &quality).ok();

        let history: Vec<(f64, Outcome)> = final_p
            .iter()
            .filter_map(|(id, &p)| outcomes.get(id).map(|&o| (p, o)))
            .collect();
        let d_c_final = mean(final_p.values().map(|&p| confidence_drift(p, &history).value));

        let initial = a.last.map_or(cfg.simulator.initial_capital, |s| s.initial_capital);
        let mut series = vec![initial];
        series.extend(&a.capital);
        let dd = max_drawdown(&series);
        let r = match cfg.simulator.mode {
            ExecutionMode::Observation => 1.0,
            ExecutionMode::Execution if initial > Cents::ZERO => (1.0 - dd.as_f64() / initial.as_f64()).clamp(0.0, 1.0),
            ExecutionMode::Execution => 0.0,
        };
        let pnl_steps: Vec<Cents> = series.windows(2).map(|w| w[1] - w[0]).collect();
        let rar = risk_adjusted_return(&pnl_steps);

        let components = HhisComponents {
            correctness: score.as_ref().map_or(0.0, |s| 1.0 - s.brier),
            calibration: score.as_ref().map_or(0.0, |s| 1.0 - s.ece),
            drift: d_total.unwrap_or(0.0),
            risk: r,
            reasoning: q,
        };
        let h = hhis(
            components.correctness,
            components.calibration,
            components.drift,
            components.risk,
            components.reasoning,
            &m.weights,
        )?;

        let mut positions = Vec::new();
        for rec in &a.cycles {
            for e in rec.step.entries.iter().filter(|e| e.kind == EntryKind::Open) {
                let cid = e.condition_id.as_str();
                let Some((cat, _)) = categories.get(&(rec.cycle_index, cid)) else {
                    continue;
                };
                let prices: Vec<f64> = price_history
                    .get(cid)
                    .map(|h| {
                        h.iter()
                            .take_while(|(c, _)| *c <= rec.cycle_index)
                            .map(|(_, p)| *p)
                            .collect()
                    })
                    .unwrap_or_default();
                let vol = volatility(&prices, m.volatility_window);
                let p_yes = rec
                    .records
                    .iter()
                    .find(|r| r.condition_id == cid)
                    .map_or(market_price.get(&(rec.cycle_index, cid)).copied().unwrap_or(0.5), |r| {
                        r.probability
                    });
                let p_win = if e.side == Side::Yes { p_yes } else { 1.0 - p_yes };
                let report = risk_report(
                    cat,
                    vol,
                    m.volatility_threshold,
                    e.basis_delta,
                    e.price,
                    p_win,
                    m.var_alpha,
                    rar,
                )?;
                positions.push(PositionRisk {
                    cycle_index: rec.cycle_index,
                    condition_id: cid.to_string(),
                    side: e.side,
                    size: e.basis_delta,
                    report,
                });
            }
        }
        let risk = positions
            .iter()
            .max_by_key(|p| (severity(p.report.risk_category), p.report.var.unwrap_or(Cents::ZERO)))
            .map_or(
                RiskReport {
                    risk_category: RiskCategory::Low,
                    var: None,
                    cvar: None,
                    risk_adjusted_return: rar,
                },
                |p| p.report.clone(),
            );

        let failures = a.cycles.iter().filter(|c| c.failure.is_some()).count();
        let avg = |t: u64| if n_rec == 0 { 0.0 } else { t as f64 / n_rec as f64 };
        let strategy_frequency = if n_rec == 0 {
            BTreeMap::new()
        } else {
            strategy_counts
                .iter()
                .map(|(s, &c)| (s.as_str().to_string(), c as f64 / n_rec as f64))
                .collect()
        };

        leaderboard.push(LeaderboardRow {
            rank: 0,
            agent_id: id.clone(),
            model: a.meta_model.clone(),
            hhis: h,
            pnl: a.last.map_or(Cents::ZERO, |s| s.pnl()),
            brier: score.as_ref().map(|s| s.brier),
            ece: score.as_ref().map(|s| s.ece),
            d_total,
            delta_vs_market: delta,
            forecasts: n_rec as usize,
            unique_users: a.unique_users,
            agent_count: a.agent_count,
            avg_input_tokens: avg(tok_in),
            avg_output_tokens: avg(tok_out),
            failures,
        });
        if let Some(s) = &score {
            reliability.extend(reliability_rows(id, &s.reliability_bins));
        }
        cat_rows.extend(slice_rows(id, slices));
        diagnostics.push(DiagnosticsRow {
            agent_id: id.clone(),
            score,
            confidence_stability: confidence_stability(&confidences),
            d_narrative: d_n,
            d_temporal: d_t,
            d_confidence: d_c,
            d_confidence_final: d_c_final,
            d_total,
            market_divergence: div,
            reasoning_quality: q,
            confidence_reasoning_alignment: alignment,
            max_drawdown: dd,
            risk_adjusted_return: rar,
            trades: positions.len(),
            trigger_closes: a.cycles.iter().map(|c| c.step.trigger_closes).sum(),
            fence_stripped: a.cycles.iter().filter(|c| c.fence_stripped).count(),
            cycles: a.cycles.len(),
            successes: a.cycles.len() - failures,
            failures,
            strategy_frequency,
            adjustment: adjustment_depth(a.cycles.iter().flat_map(|c| &c.records)),
            components,
            composite: CompositeScores {
                hhis: h,
                reasoning_quality: q,
                confidence_reasoning_alignment: alignment,
            },
            risk,
            positions,
        });
        for (cycle_index, (b, mb, n)) in cycle_acc {
            let (b, mb) = (b / n as f64, mb / n as f64);
            per_cycle.push(CycleScore {
                cycle_index,
                agent_id: id.clone(),
                n,
                brier: b,
                market_brier: mb,
                delta: b - mb,
            });
        }
    }

    let mut baselines = Vec::new();
    for kind in BaselineKind::ALL {
        let mut pairs: Vec<(f64, Outcome)> = Vec::new();
        let mut slices: Slices<'_> = BTreeMap::new();
        for &(cycle, k, cid, p) in &baseline_fc {
            if k != kind {
                continue;
            }
            let Some(&o) = outcomes.get(cid) else { continue };
            pairs.push((p, o));
            let seen = categories.get(&(cycle, cid));
            for (dim, val) in slice_values(seen.map(|s| &s.0), seen.map(|s| s.1))
                .into_iter()
                .enumerate()
            {
                let e = slices.entry((dim, val)).or_insert((0.0, 0, Cents::ZERO));
                e.0 += crate::metrics::brier(p, o);
                e.1 += 1;
            }
        }
        let subject = format!("baseline:{}", kind.as_str());
        cat_rows.extend(slice_rows(&subject, slices));
        let score = if pairs.is_empty() {
            None
        } else {
            Some(score_report(&pairs, m.bins, m.log_eps)?)
        };
        if let Some(s) = &score {
            reliability.extend(reliability_rows(&subject, &s.reliability_bins));
        }
        baselines.push(BaselineRow {
            kind,
            n: pairs.len(),
            brier: mean_brier(&pairs),
            ece: if pairs.is_empty() {
                None
            } else {
                Some(ece_mce(&pairs, m.bins)?.ece)
            },
            score,
        });
    }

    sort_leaderboard(&mut leaderboard, sort);
    Ok(Aggregate {
        sort,
        leaderboard,
        diagnostics,
        baselines,
        categories: cat_rows,
        per_cycle,
        reliability,
    })
}

/// Per-forecast Brier scores of two agents on the forecasts both made,
/// matched on `(cycle, market)`. Feeds the paired significance test.
pub fn paired_brier(events: &[Event], a: &str, b: &str) -> (Vec<f64>, Vec<f64>) {
    let mut outcomes: HashMap<&str, Outcome> = HashMap::new();
    let mut probs: BTreeMap<(&str, usize, &str), f64> = BTreeMap::new();
    for e in events {
        match e {
            Event::Resolution { outcomes: outs, .. } => {
                for o in outs {
                    outcomes.insert(o.condition_id.as_str(), o.outcome);
                }
            }
            Event::AgentCycle(rec) if rec.agent_id == a || rec.agent_id == b => {
                for r in &rec.records {
                    probs.insert(
                        (rec.agent_id.as_str(), rec.cycle_index, r.condition_id.as_str()),
                        r.probability,
                    );
                }
            }
            _ => {}
        }
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&(agent, cycle, market), &p) in &probs {
        if agent != a {
            continue;
        }
        let (Some(&q), Some(&o)) = (probs.get(&(b, cycle, market)), outcomes.get(market)) else {
            continue;
        };
        xs.push(crate::metrics::brier(p, o));
        ys.push(crate::metrics::brier(q, o));
    }
    (xs, ys)
}

/// Orders rows best first and assigns 1-based ranks. Ties break on agent id.
pub fn sort_leaderboard(rows: &mut [LeaderboardRow], key: SortKey) {
    rows.sort_by(|a, b| {
        let primary = match key {
            SortKey::Hhis => b.hhis.total_cmp(&a.hhis),
            SortKey::Pnl => b.pnl.cmp(&a.pnl),
            SortKey::Brier => a
                .brier
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.brier.unwrap_or(f64::INFINITY)),
        };
        primary.then_with(|| a.agent_id.cmp(&b.agent_id))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
}
