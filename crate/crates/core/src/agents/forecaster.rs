//! The forecaster interface, scripted strategy agents, recorded and HTTP
//! adapters, and per-cycle sampling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::calibration::{calibration_adjustment, compute_edge, expected_return};
use super::decision::{compare_decisions, parse_decision_batch, validate_decision_batch};
use super::{
    CalibrationWindow, Decision, DecisionBatch, ForecastRecord, RejectionReport, Strategy, ThresholdConfig,
    ValidatedBatch, WindowMode,
};
use crate::contract::ContractHash;
use crate::jsonl::{self, JsonlError};
use crate::market_data::{EventCategory, MarketSnapshot, RiskLevel, Side};
use crate::metrics::{hhis, HhisWeights};
use crate::money::Cents;
use crate::rng;

/// Failure of one agent call. Every variant degrades the cycle to all-HOLD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", content = "detail")]
pub enum AgentError {
    #[error("agent timed out after {0} ms")]
    AgentTimeout(u64),
    #[error("malformed agent output: {0}")]
    MalformedAgentOutput(String),
    #[error("decision batch rejected: {0}")]
    Rejected(RejectionReport),
    #[error("agent transport error: {0}")]
    Transport(String),
}

/// Whitespace-delimited token count.
pub fn count_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

/// Keeps the first `budget` tokens of `text`. Text already within budget is
/// returned unchanged; truncated text is rejoined with single spaces.
pub fn truncate_to_budget(text: &str, budget: u32) -> String {
    if count_tokens(text) <= budget {
        return text.to_string();
    }
    text.split_whitespace()
        .take(budget as usize)
        .collect::<Vec<_>>()
        .join(" ")
}

/// An agent's own output for one market in a previous cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevForecast {
    pub probability: f64,
    pub confidence: u8,
    pub reasoning_trace: String,
}

/// What an agent remembers between cycles: its last forecast per market and
/// the last YES price it saw per market.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentHistory {
    pub prev: BTreeMap<String, PrevForecast>,
    pub prev_prices: BTreeMap<String, f64>,
}

static EMPTY_HISTORY: AgentHistory = AgentHistory {
    prev: BTreeMap::new(),
    prev_prices: BTreeMap::new(),
};
static EMPTY_WINDOW: CalibrationWindow = CalibrationWindow { entries: Vec::new() };
static INITIAL_PORTFOLIO: PortfolioView = PortfolioView {
    total_capital: Cents(600_000),
    available: Cents(600_000),
    deployed: Cents(0),
    open_positions: Vec::new(),
    max_open: 30,
};

impl AgentHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds one cycle's records and the prices they were made against.
    pub fn update(&mut self, records: &[ForecastRecord], markets: &[MarketSnapshot]) {
        for r in records {
            self.prev.insert(
                r.condition_id.clone(),
                PrevForecast {
                    probability: r.probability,
                    confidence: r.confidence,
                    reasoning_trace: r.reasoning_trace.clone(),
                },
            );
        }
        for m in markets {
            self.prev_prices.insert(m.condition_id.clone(), m.yes_price);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenPositionView {
    pub condition_id: String,
    pub side: Side,
    pub entry_price: f64,
    pub cost_basis: Cents,
    pub unrealized_pnl: Cents,
    /// A stop-loss or target-win trigger fired at the latest mark.
    pub must_close: bool,
}

/// The portfolio state shown to an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioView {
    pub total_capital: Cents,
    pub available: Cents,
    pub deployed: Cents,
    pub open_positions: Vec<OpenPositionView>,
    pub max_open: usize,
}

impl PortfolioView {
    pub fn initial(capital: Cents, max_open: usize) -> Self {
        Self {
            total_capital: capital,
            available: capital,
            deployed: Cents::ZERO,
            open_positions: Vec::new(),
            max_open,
        }
    }

    /// Text block substituted for `{{portfolio}}`.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "Total: {}\nAvailable: {}\nDeployed: {}\nOpen: {} / {}\n",
            self.total_capital,
            self.available,
            self.deployed,
            self.open_positions.len(),
            self.max_open
        );
        for p in &self.open_positions {
            s.push_str(&format!(
                "[{}] {} @ {:.2}% PnL: {}{}\n",
                p.condition_id,
                p.side.as_str(),
                p.entry_price * 100.0,
                p.unrealized_pnl,
                if p.must_close { " >>> Must CLOSE <<<" } else { "" }
            ));
        }
        s
    }
}

/// Everything an agent sees for one cycle. `categories` is parallel to
/// `markets`.
#[derive(Debug, Clone, Copy)]
pub struct ForecastRequest<'a> {
    pub instruction: &'a str,
    pub markets: &'a [MarketSnapshot],
    pub categories: &'a [EventCategory],
    pub history: &'a AgentHistory,
    pub portfolio: &'a PortfolioView,
    pub window: &'a CalibrationWindow,
    pub budget: u32,
    pub cycle: u64,
    pub seed: u64,
    pub now: DateTime<Utc>,
}

impl<'a> ForecastRequest<'a> {
    /// A first-cycle request with empty history and the default portfolio.
    pub fn new(
        instruction: &'a str,
        markets: &'a [MarketSnapshot],
        categories: &'a [EventCategory],
        budget: u32,
        now: DateTime<Utc>,
    ) -> Self {
        assert_eq!(markets.len(), categories.len(), "one category per market");
        Self {
            instruction,
            markets,
            categories,
            history: &EMPTY_HISTORY,
            portfolio: &INITIAL_PORTFOLIO,
            window: &EMPTY_WINDOW,
            budget,
            cycle: 0,
            seed: 0,
            now,
        }
    }

    pub fn with_history(mut self, history: &'a AgentHistory) -> Self {
        self.history = history;
        self
    }

    pub fn with_portfolio(mut self, portfolio: &'a PortfolioView) -> Self {
        self.portfolio = portfolio;
        self
    }

    pub fn with_window(mut self, window: &'a CalibrationWindow) -> Self {
        self.window = window;
        self
    }

    pub fn with_cycle(mut self, cycle: u64) -> Self {
        self.cycle = cycle;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// An agent's stated view on one market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketForecast {
    pub condition_id: String,
    pub probability: f64,
    pub confidence: u8,
    pub reasoning: String,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_return: Option<Cents>,
}

fn default_strategy() -> Strategy {
    Strategy::None
}

/// Raw reply from an agent: per-market forecasts plus the decision text in
/// the wire format, still unparsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub forecasts: Vec<MarketForecast>,
    pub decision_text: String,
    /// Latency the agent reports about itself. When absent it is measured.
    #[serde(default)]
    pub latency_ms: Option<u64>,
    #[serde(default)]
    pub input_tokens: Option<u32>,
}

/// Anything that can forecast a cycle. Implementations must not keep hidden
/// state between calls: all memory arrives through the request.
pub trait Forecaster: Send + Sync {
    fn id(&self) -> &str;
    fn respond(&self, req: &ForecastRequest<'_>) -> Result<AgentResponse, AgentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScriptedKind {
    /// Repeats the quoted YES price.
    MarketCopier,
    Constant {
        value: f64,
    },
    /// Adds `bias` in the direction of the last YES price change.
    Momentum {
        bias: f64,
    },
    /// Moves the price a fraction `pull` of the way to 0.5.
    MeanReversion {
        pull: f64,
    },
    /// Exponential smoothing of its own probabilities with weight `alpha` on
    /// the new target.
    DriftAdjusted {
        alpha: f64,
    },
    /// Follows the price but halves its bet on high-risk markets.
    RiskConfirmation,
    /// 0.5 plus noise with standard deviation `scale / budget`.
    BudgetNoise {
        scale: f64,
    },
}

impl ScriptedKind {
    pub fn strategy(self) -> Strategy {
        match self {
            ScriptedKind::Momentum { .. } => Strategy::Momentum,
            ScriptedKind::MeanReversion { .. } => Strategy::MeanReversion,
            ScriptedKind::DriftAdjusted { .. } => Strategy::DriftAdjusted,
            ScriptedKind::RiskConfirmation => Strategy::RiskConfirmation,
            _ => Strategy::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedSpec {
    pub id: String,
    pub kind: ScriptedKind,
    /// Standard deviation of Gaussian noise added to the raw probability.
    #[serde(default)]
    pub noise: f64,
    /// Reasoning-trace length in tokens before budget truncation.
    #[serde(default = "default_verbosity")]
    pub verbosity: u32,
    /// Emit unparseable output on every k-th cycle.
    #[serde(default)]
    pub malformed_every: Option<u64>,
    #[serde(default)]
    pub policy: DecisionPolicy,
}

fn default_verbosity() -> u32 {
    60
}

impl ScriptedSpec {
    pub fn new(id: impl Into<String>, kind: ScriptedKind) -> Self {
        Self {
            id: id.into(),
            kind,
            noise: 0.0,
            verbosity: default_verbosity(),
            malformed_every: None,
            policy: DecisionPolicy::default(),
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_verbosity(mut self, verbosity: u32) -> Self {
        self.verbosity = verbosity;
        self
    }
}

/// How a scripted agent turns forecasts into a decision batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecisionPolicy {
    pub thresholds: ThresholdConfig,
    pub bet: Cents,
    /// Halve the bet (floored at the minimum amount) on high-risk markets.
    pub halve_high_risk: bool,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        Self {
            thresholds: ThresholdConfig::default(),
            bet: Cents(15_000),
            halve_high_risk: false,
        }
    }
}

/// One market as scored by [`DecisionPolicy::evaluate`].
#[derive(Debug, Clone, PartialEq)]
struct Evaluated {
    side: Side,
    edge: f64,
    expected_return: Cents,
    bet: Cents,
    h_score: f64,
}

impl DecisionPolicy {
    fn evaluate(
        &self,
        forecast: &MarketForecast,
        market: &MarketSnapshot,
        category: &EventCategory,
        window: &CalibrationWindow,
        prev: Option<&PrevForecast>,
    ) -> Option<Evaluated> {
        let p = forecast.probability;
        let (side, prob, price) = if p >= market.yes_price {
            (Side::Yes, p, market.yes_price)
        } else {
            (Side::No, 1.0 - p, market.no_price)
        };
        let adj = calibration_adjustment(window, prob);
        let calibrated = (prob + adj.prob_adjustment).clamp(0.0, 1.0);
        let edge = compute_edge(calibrated, price);
        let mut bet = self.bet;
        if self.halve_high_risk && category.risk == RiskLevel::High {
            bet = Cents(bet.0 / 2).max(self.thresholds.min_amount);
        }
        let er = expected_return(calibrated, bet, price).ok()?;
        let risk = match category.risk {
            RiskLevel::Low => 1.0,
            RiskLevel::Medium => 0.5,
            RiskLevel::High => 0.0,
        };
        let drift = prev.map_or(0.0, |q| (p - q.probability).abs());
        let h = hhis(
            calibrated,
            adj.win_rate_adj,
            drift,
            risk,
            f64::from(forecast.confidence) / 10.0,
            &HhisWeights::default(),
        )
        .unwrap_or(0.0);
        Some(Evaluated {
            side,
            edge,
            expected_return: er,
            bet,
            h_score: h,
        })
    }

    /// Builds a full batch: mandatory CLOSEs for triggered positions, ranked
    /// BUYs that clear the thresholds and fit capital and position limits,
    /// then HOLDs. On the first call the bootstrap thresholds apply.
    fn decide(&self, agent_id: &str, forecasts: &mut [MarketForecast], req: &ForecastRequest<'_>) -> DecisionBatch {
        let size = self.thresholds.batch_size;
        let mut decisions = Vec::with_capacity(size);
        let mut used: HashSet<String> = HashSet::new();
        let known: HashSet<&str> = req.markets.iter().map(|m| m.condition_id.as_str()).collect();
        let open: HashSet<&str> = req
            .portfolio
            .open_positions
            .iter()
            .map(|p| p.condition_id.as_str())
            .collect();

        for pos in &req.portfolio.open_positions {
            if pos.must_close && known.contains(pos.condition_id.as_str()) && decisions.len() < size {
                let mut d = Decision::hold(pos.condition_id.clone());
                d.action = super::Action::Close;
                d.reasoning = "risk trigger: must close".into();
                decisions.push(d);
                used.insert(pos.condition_id.clone());
            }
        }

        let gate = match req.window.mode() {
            WindowMode::FirstCall => WindowMode::Bootstrap,
            m => m,
        };
        let mut buys = Vec::new();
        for (i, m) in req.markets.iter().enumerate() {
            let f = &mut forecasts[i];
            let Some(ev) = self.evaluate(
                f,
                m,
                &req.categories[i],
                req.window,
                req.history.prev.get(&m.condition_id),
            ) else {
                continue;
            };
            f.edge = Some(ev.edge);
            f.expected_return = Some(ev.expected_return);
            if used.contains(&m.condition_id) || open.contains(m.condition_id.as_str()) {
                continue;
            }
            let conf = Some(f.confidence);
            if self
                .thresholds
                .passes(gate, conf, Some(ev.edge), Some(ev.expected_return))
            {
                buys.push(Decision {
                    market_id: m.condition_id.clone(),
                    action: match ev.side {
                        Side::Yes => super::Action::BuyYes,
                        Side::No => super::Action::BuyNo,
                    },
                    amount: Some(ev.bet),
                    close_fraction: None,
                    reasoning: f.reasoning.split_whitespace().take(12).collect::<Vec<_>>().join(" "),
                    edge: Some(ev.edge),
                    confidence: conf,
                    expected_return: Some(ev.expected_return),
                    h_score: Some(ev.h_score),
                });
            }
        }
        buys.sort_by(compare_decisions);

        let mut slots = req
            .portfolio
            .max_open
            .saturating_sub(req.portfolio.open_positions.len());
        let mut cash = req.portfolio.available;
        for b in buys {
            if decisions.len() >= size || slots == 0 {
                break;
            }
            let amount = b.amount.unwrap_or(Cents::ZERO);
            if amount > cash {
                continue;
            }
            cash -= amount;
            slots -= 1;
            used.insert(b.market_id.clone());
            decisions.push(b);
        }
        for m in req.markets {
            if decisions.len() >= size {
                break;
            }
            if used.insert(m.condition_id.clone()) {
                decisions.push(Decision::hold(m.condition_id.clone()));
            }
        }
        DecisionBatch {
            decisions,
            overall_reasoning: format!("{} scripted cycle {}", agent_id, req.cycle),
            agent_id: agent_id.to_string(),
            produced_at: req.now,
        }
    }
}

const VOCABULARY: [&str; 48] = [
    "price",
    "trend",
    "volume",
    "signal",
    "base",
    "rate",
    "risk",
    "liquidity",
    "momentum",
    "reversion",
    "evidence",
    "prior",
    "update",
    "market",
    "crowd",
    "consensus",
    "drift",
    "spread",
    "calibration",
    "window",
    "confidence",
    "outcome",
    "resolution",
    "horizon",
    "question",
    "news",
    "poll",
    "forecast",
    "estimate",
    "uncertainty",
    "variance",
    "edge",
    "expected",
    "return",
    "position",
    "hedge",
    "exposure",
    "stable",
    "shift",
    "recent",
    "history",
    "category",
    "domain",
    "political",
    "economic",
    "cultural",
    "technological",
    "favorite",
];

/// Deterministic strategy agent. Outputs are a pure function of the request
/// and its [`ScriptedSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedAgent {
    spec: ScriptedSpec,
}

impl ScriptedAgent {
    pub fn new(spec: ScriptedSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &ScriptedSpec {
        &self.spec
    }

    fn forecast_one(&self, req: &ForecastRequest<'_>, i: usize) -> MarketForecast {
        let m = &req.markets[i];
        let cycle = req.cycle.to_string();
        let mut rng = rng::stream(req.seed, &["agent", &self.spec.id, &cycle, &m.condition_id]);
        let z: f64 = rng.sample(StandardNormal);
        let yes = m.yes_price;
        let jitter = self.spec.noise * z;
        let raw = match self.spec.kind {
            ScriptedKind::MarketCopier => yes + jitter,
            ScriptedKind::Constant { value } => value + jitter,
            ScriptedKind::Momentum { bias } => {
                let dir = match req.history.prev_prices.get(&m.condition_id) {
                    Some(&prev) if yes > prev => 1.0,
                    Some(&prev) if yes < prev => -1.0,
                    _ => 0.0,
                };
                yes + bias * dir + jitter
            }
            ScriptedKind::MeanReversion { pull } => yes + pull * (0.5 - yes) + jitter,
            ScriptedKind::DriftAdjusted { alpha } => {
                let target = yes + jitter;
                match req.history.prev.get(&m.condition_id) {
                    Some(prev) => alpha * target + (1.0 - alpha) * prev.probability,
                    None => target,
                }
            }
            ScriptedKind::RiskConfirmation => yes + jitter,
            ScriptedKind::BudgetNoise { scale } => 0.5 + scale / f64::from(req.budget.max(1)) * z,
        };
        let p = raw.clamp(0.0, 1.0);
        let confidence = (10.0 * p.max(1.0 - p)).round() as u8;
        let strategy = self.spec.kind.strategy();

        let mut trace = format!(
            "Strategy: {} | market {} yes {:.4} prob {:.4} | Alg4(Risk:{})",
            strategy.as_str(),
            m.condition_id,
            yes,
            p,
            req.categories[i].risk.as_str().to_uppercase()
        );
        let have = count_tokens(&trace);
        for _ in have..self.spec.verbosity {
            trace.push(' ');
            trace.push_str(VOCABULARY[rng.random_range(0..VOCABULARY.len())]);
        }
        MarketForecast {
            condition_id: m.condition_id.clone(),
            probability: p,
            confidence,
            reasoning: trace,
            strategy,
            edge: None,
            expected_return: None,
        }
    }
}

impl Forecaster for ScriptedAgent {
    fn id(&self) -> &str {
        &self.spec.id
    }

    fn respond(&self, req: &ForecastRequest<'_>) -> Result<AgentResponse, AgentError> {
        if let Some(k) = self.spec.malformed_every {
            if k > 0 && (req.cycle + 1).is_multiple_of(k) {
                return Ok(AgentResponse {
                    forecasts: Vec::new(),
                    decision_text: "I am unable to produce the decisions array this time.".into(),
                    latency_ms: Some(5),
                    input_tokens: None,
                });
            }
        }
        let mut forecasts: Vec<MarketForecast> = (0..req.markets.len()).map(|i| self.forecast_one(req, i)).collect();
        let batch = self.spec.policy.decide(&self.spec.id, &mut forecasts, req);
        let out_tokens: u32 = forecasts
            .iter()
            .map(|f| count_tokens(&f.reasoning).min(req.budget))
            .sum();
        Ok(AgentResponse {
            forecasts,
            decision_text: batch.to_wire_json(),
            latency_ms: Some(5 + u64::from(out_tokens) / 10),
            input_tokens: None,
        })
    }
}

/// A stored response for one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedCycle {
    pub cycle: u64,
    #[serde(flatten)]
    pub response: AgentResponse,
}

/// Replays previously captured responses keyed by cycle index.
#[derive(Debug, Clone)]
pub struct RecordedAgent {
    id: String,
    cycles: HashMap<u64, AgentResponse>,
}

impl RecordedAgent {
    pub fn new(id: impl Into<String>, cycles: impl IntoIterator<Item = RecordedCycle>) -> Self {
        Self {
            id: id.into(),
            cycles: cycles.into_iter().map(|c| (c.cycle, c.response)).collect(),
        }
    }

    /// Loads one [`RecordedCycle`] per JSON line.
    pub fn load(id: impl Into<String>, path: &Path) -> Result<Self, JsonlError> {
        let cycles: Vec<RecordedCycle> = jsonl::read_all(path)?;
        Ok(Self::new(id, cycles))
    }
}

impl Forecaster for RecordedAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(&self, req: &ForecastRequest<'_>) -> Result<AgentResponse, AgentError> {
        self.cycles
            .get(&req.cycle)
            .cloned()
            .ok_or_else(|| AgentError::MalformedAgentOutput(format!("no recorded response for cycle {}", req.cycle)))
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct HttpMarket<'a> {
    condition_id: &'a str,
    question: &'a str,
    yes_price: f64,
    no_price: f64,
    end_date: DateTime<Utc>,
}

#[derive(Serialize)]
struct HttpRequestBody<'a> {
    agent_id: &'a str,
    instruction: &'a str,
    budget: u32,
    cycle: u64,
    markets: Vec<HttpMarket<'a>>,
}

/// Adapter for an external model service. The service receives the rendered
/// instruction and market list as JSON and must answer with an
/// [`AgentResponse`] body.
pub struct HttpForecaster {
    id: String,
    endpoint: String,
    auth: Option<String>,
    timeout: Duration,
    agent: ureq::Agent,
}

impl HttpForecaster {
    pub fn new(id: impl Into<String>, endpoint: impl Into<String>, auth: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            id: id.into(),
            endpoint: endpoint.into(),
            auth,
            timeout,
            agent,
        }
    }
}

impl Forecaster for HttpForecaster {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(&self, req: &ForecastRequest<'_>) -> Result<AgentResponse, AgentError> {
        let body = HttpRequestBody {
            agent_id: &self.id,
            instruction: req.instruction,
            budget: req.budget,
            cycle: req.cycle,
            markets: req
                .markets
                .iter()
                .map(|m| HttpMarket {
                    condition_id: &m.condition_id,
                    question: &m.question,
                    yes_price: m.yes_price,
                    no_price: m.no_price,
                    end_date: m.end_time,
                })
                .collect(),
        };
        let payload = serde_json::to_string(&body).map_err(|e| AgentError::Transport(e.to_string()))?;
        let mut call = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(a) = &self.auth {
            call = call.header("Authorization", a);
        }
        let started = Instant::now();
        let mut resp = call.send(payload).map_err(|e| match e {
            ureq::Error::Timeout(_) => AgentError::AgentTimeout(self.timeout.as_millis() as u64),
            other => AgentError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(AgentError::Transport(format!("HTTP status {status}")));
        }
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => AgentError::AgentTimeout(self.timeout.as_millis() as u64),
            other => AgentError::Transport(other.to_string()),
        })?;
        let mut parsed: AgentResponse =
            serde_json::from_str(&text).map_err(|e| AgentError::MalformedAgentOutput(e.to_string()))?;
        if parsed.latency_ms.is_none() {
            parsed.latency_ms = Some(started.elapsed().as_millis() as u64);
        }
        Ok(parsed)
    }
}

/// Outcome of sampling one agent for one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSample {
    pub records: Vec<ForecastRecord>,
    pub batch: ValidatedBatch,
    pub failure: Option<AgentError>,
    /// Lenient parsing stripped a markdown fence.
    pub fence_stripped: bool,
    pub latency_ms: u64,
}

impl CycleSample {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

fn check_forecasts(resp: &AgentResponse, known: &HashSet<&str>) -> Result<(), AgentError> {
    let mut seen = HashSet::new();
    for f in &resp.forecasts {
        if !(f.probability.is_finite() && (0.0..=1.0).contains(&f.probability)) {
            return Err(AgentError::MalformedAgentOutput(format!(
                "probability {} for {} outside [0,1]",
                f.probability, f.condition_id
            )));
        }
        if f.confidence > 10 {
            return Err(AgentError::MalformedAgentOutput(format!(
                "confidence {} above 10",
                f.confidence
            )));
        }
        if !known.contains(f.condition_id.as_str()) || !seen.insert(f.condition_id.as_str()) {
            return Err(AgentError::MalformedAgentOutput(format!(
                "forecast for unknown or repeated market {}",
                f.condition_id
            )));
        }
    }
    Ok(())
}

fn to_records(
    agent_id: &str,
    resp: &AgentResponse,
    req: &ForecastRequest<'_>,
    contract_hash: &ContractHash,
    latency_ms: u64,
) -> Vec<ForecastRecord> {
    let input_tokens = resp.input_tokens.unwrap_or_else(|| count_tokens(req.instruction));
    let hash = contract_hash.to_hex();
    resp.forecasts
        .iter()
        .map(|f| {
            let trace = truncate_to_budget(&f.reasoning, req.budget);
            ForecastRecord {
                condition_id: f.condition_id.clone(),
                agent_id: agent_id.to_string(),
                probability: f.probability,
                confidence: f.confidence,
                output_tokens: count_tokens(&trace),
                reasoning_trace: trace,
                strategy: f.strategy,
                input_tokens,
                latency_ms,
                sampled_at: req.now,
                contract_hash: hash.clone(),
                edge: f.edge,
                expected_return: f.expected_return,
            }
        })
        .collect()
}

/// Samples one agent for one cycle. Never fails: agent errors, malformed or
/// invalid batches all become an all-HOLD batch with the failure recorded.
pub fn sample_cycle(
    agent: &dyn Forecaster,
    req: &ForecastRequest<'_>,
    contract_hash: &ContractHash,
    thresholds: &ThresholdConfig,
    lenient: bool,
) -> CycleSample {
    let fallback = || {
        ValidatedBatch::trusted(DecisionBatch::all_hold(
            agent.id(),
            req.markets.iter().map(|m| m.condition_id.as_str()),
            thresholds.batch_size,
            req.now,
        ))
    };
    let started = Instant::now();
    let resp = match agent.respond(req) {
        Ok(r) => r,
        Err(e) => {
            return CycleSample {
                records: Vec::new(),
                batch: fallback(),
                failure: Some(e),
                fence_stripped: false,
                latency_ms: started.elapsed().as_millis() as u64,
            }
        }
    };
    let latency_ms = resp.latency_ms.unwrap_or_else(|| started.elapsed().as_millis() as u64);
    let known: HashSet<&str> = req.markets.iter().map(|m| m.condition_id.as_str()).collect();
    let failed = |e: AgentError| CycleSample {
        records: Vec::new(),
        batch: fallback(),
        failure: Some(e),
        fence_stripped: false,
        latency_ms,
    };
    if let Err(e) = check_forecasts(&resp, &known) {
        return failed(e);
    }
    let records = to_records(agent.id(), &resp, req, contract_hash, latency_ms);
    let parsed = match parse_decision_batch(&resp.decision_text, agent.id(), req.now, lenient) {
        Ok(p) => p,
        Err(msg) => {
            return CycleSample {
                records,
                ..failed(AgentError::MalformedAgentOutput(msg))
            }
        }
    };
    let known_owned: HashSet<String> = known.iter().map(|s| s.to_string()).collect();
    match validate_decision_batch(parsed.batch, &known_owned, req.window, thresholds) {
        Ok(batch) => CycleSample {
            records,
            batch,
            failure: None,
            fence_stripped: parsed.fence_stripped,
            latency_ms,
        },
        Err(report) => CycleSample {
            records,
            fence_stripped: parsed.fence_stripped,
            ..failed(AgentError::Rejected(report))
        },
    }
}

/// Samples a single-market forecast: the record for `req.markets[0]`.
pub fn sample_forecast(
    agent: &dyn Forecaster,
    req: &ForecastRequest<'_>,
    contract_hash: &ContractHash,
) -> Result<ForecastRecord, AgentError> {
    let first = req
        .markets
        .first()
        .ok_or_else(|| AgentError::MalformedAgentOutput("request has no market".into()))?;
    let started = Instant::now();
    let resp = agent.respond(req)?;
    let known: HashSet<&str> = req.markets.iter().map(|m| m.condition_id.as_str()).collect();
    check_forecasts(&resp, &known)?;
    let latency_ms = resp.latency_ms.unwrap_or_else(|| started.elapsed().as_millis() as u64);
    to_records(agent.id(), &resp, req, contract_hash, latency_ms)
        .into_iter()
        .find(|r| r.condition_id == first.condition_id)
        .ok_or_else(|| AgentError::MalformedAgentOutput(format!("no forecast for {}", first.condition_id)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::lock_contract;
    use crate::market_data::{Domain, Horizon, LiquidityTier};
    use chrono::TimeZone;

    fn at(day: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 11, day, 0, 0, 0).unwrap()
    }

    fn market(id: &str, yes: f64) -> MarketSnapshot {
        MarketSnapshot {
            condition_id: id.into(),
            question: format!("Will {id} happen?"),
            yes_price: yes,
            no_price: 1.0 - yes,
            liquidity_tier: LiquidityTier::High,
            end_time: at(28),
            observed_at: at(1),
        }
    }

    fn cat(risk: RiskLevel) -> EventCategory {
        EventCategory {
            risk,
            domain: Domain::Economic,
            horizon: Horizon::Medium,
        }
    }

    fn hash() -> ContractHash {
        lock_contract("Forecast {{contract.version}}", "v1", 1000, at(1))
            .unwrap()
            .1
    }

    fn book(n: usize) -> (Vec<MarketSnapshot>, Vec<EventCategory>) {
        let ms: Vec<_> = (0..n)
            .map(|i| market(&format!("0x{i:04}"), 0.3 + 0.01 * i as f64))
            .collect();
        let cs = vec![cat(RiskLevel::Medium); n];
        (ms, cs)
    }

    fn prob_for(agent: &ScriptedAgent, m: MarketSnapshot, history: &AgentHistory) -> f64 {
        let ms = [m];
        let cs = [cat(RiskLevel::Low)];
        let req = ForecastRequest::new("go", &ms, &cs, 1000, at(2)).with_history(history);
        sample_forecast(agent, &req, &hash()).unwrap().probability
    }

    #[test]
    fn copier_and_constant() {
        let h = AgentHistory::new();
        let copier = ScriptedAgent::new(ScriptedSpec::new("c", ScriptedKind::MarketCopier));
        assert_eq!(prob_for(&copier, market("0xa", 0.62), &h), 0.62);
        let half = ScriptedAgent::new(ScriptedSpec::new("u", ScriptedKind::Constant { value: 0.5 }));
        assert_eq!(prob_for(&half, market("0xa", 0.91), &h), 0.5);
    }

    #[test]
    fn momentum_follows_last_change() {
        let agent = ScriptedAgent::new(ScriptedSpec::new("m", ScriptedKind::Momentum { bias: 0.05 }));
        let mut h = AgentHistory::new();
        h.prev_prices.insert("0xa".into(), 0.55);
        assert!((prob_for(&agent, market("0xa", 0.60), &h) - 0.65).abs() < 1e-12);
        h.prev_prices.insert("0xa".into(), 0.70);
        assert!((prob_for(&agent, market("0xa", 0.60), &h) - 0.55).abs() < 1e-12);
        assert_eq!(prob_for(&agent, market("0xa", 0.60), &AgentHistory::new()), 0.60);
    }

    #[test]
    fn mean_reversion_and_smoothing() {
        let mr = ScriptedAgent::new(ScriptedSpec::new("r", ScriptedKind::MeanReversion { pull: 0.25 }));
        assert!((prob_for(&mr, market("0xa", 0.9), &AgentHistory::new()) - 0.8).abs() < 1e-12);
        let da = ScriptedAgent::new(ScriptedSpec::new("d", ScriptedKind::DriftAdjusted { alpha: 0.3 }));
        let mut h = AgentHistory::new();
        h.prev.insert(
            "0xa".into(),
            PrevForecast {
                probability: 0.4,
                confidence: 6,
                reasoning_trace: String::new(),
            },
        );
        assert!((prob_for(&da, market("0xa", 0.6), &h) - 0.46).abs() < 1e-12);
    }

    #[test]
    fn traces_truncate_to_budget() {
        let agent = ScriptedAgent::new(ScriptedSpec::new("v", ScriptedKind::MarketCopier).with_verbosity(3000));
        let ms = [market("0xa", 0.5)];
        let cs = [cat(RiskLevel::Low)];
        let req = ForecastRequest::new("go", &ms, &cs, 1000, at(2));
        let rec = sample_forecast(&agent, &req, &hash()).unwrap();
        assert_eq!(count_tokens(&rec.reasoning_trace), 1000);
        assert_eq!(rec.output_tokens, 1000);
        assert_eq!(truncate_to_budget("a  b\tc", 5), "a  b\tc");
        assert_eq!(truncate_to_budget("a  b\tc", 2), "a b");
    }

    #[test]
    fn scripted_cycle_is_valid_and_reproducible() {
        let (ms, cs) = book(40);
        let spec = ScriptedSpec::new("n", ScriptedKind::RiskConfirmation).with_noise(0.2);
        let agent = ScriptedAgent::new(spec);
        let req = ForecastRequest::new("go", &ms, &cs, 500, at(2))
            .with_seed(11)
            .with_cycle(3);
        let th = ThresholdConfig::default();
        let a = sample_cycle(&agent, &req, &hash(), &th, false);
        let b = sample_cycle(&agent, &req, &hash(), &th, false);
        assert!(a.succeeded(), "{:?}", a.failure);
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 40);
        assert_eq!(a.batch.batch().decisions.len(), 30);
        assert!(a.batch.batch().decisions.iter().any(|d| d.action.is_buy()));
        let req2 = req.with_seed(12);
        assert_ne!(sample_cycle(&agent, &req2, &hash(), &th, false).records, a.records);
    }

    #[test]
    fn high_risk_bets_are_halved() {
        let mut spec = ScriptedSpec::new("rc", ScriptedKind::RiskConfirmation).with_noise(0.3);
        spec.policy.bet = Cents(20_000);
        spec.policy.halve_high_risk = true;
        let agent = ScriptedAgent::new(spec);
        let (ms, _) = book(40);
        let cs = vec![cat(RiskLevel::High); 40];
        let req = ForecastRequest::new("go", &ms, &cs, 500, at(2)).with_seed(5);
        let s = sample_cycle(&agent, &req, &hash(), &ThresholdConfig::default(), false);
        let buys: Vec<_> = s.batch.batch().decisions.iter().filter(|d| d.action.is_buy()).collect();
        assert!(!buys.is_empty());
        assert!(buys.iter().all(|d| d.amount == Some(Cents(10_000))));
    }

    #[test]
    fn malformed_output_degrades_to_holds() {
        let mut spec = ScriptedSpec::new("bad", ScriptedKind::MarketCopier);
        spec.malformed_every = Some(2);
        let agent = ScriptedAgent::new(spec);
        let (ms, cs) = book(30);
        let th = ThresholdConfig::default();
        let ok = sample_cycle(
            &agent,
            &ForecastRequest::new("go", &ms, &cs, 500, at(2)),
            &hash(),
            &th,
            false,
        );
        assert!(ok.succeeded());
        let req = ForecastRequest::new("go", &ms, &cs, 500, at(2)).with_cycle(1);
        let bad = sample_cycle(&agent, &req, &hash(), &th, false);
        assert!(matches!(bad.failure, Some(AgentError::MalformedAgentOutput(_))));
        assert_eq!(bad.batch.batch().decisions.len(), 30);
        assert!(bad
            .batch
            .batch()
            .decisions
            .iter()
            .all(|d| d.action == super::super::Action::Hold));
    }

    #[test]
    fn too_few_markets_is_a_rejection() {
        let agent = ScriptedAgent::new(ScriptedSpec::new("c", ScriptedKind::MarketCopier));
        let (ms, cs) = book(10);
        let s = sample_cycle(
            &agent,
            &ForecastRequest::new("go", &ms, &cs, 500, at(2)),
            &hash(),
            &ThresholdConfig::default(),
            false,
        );
        assert!(matches!(s.failure, Some(AgentError::Rejected(_))));
        assert_eq!(s.records.len(), 10);
    }

    #[test]
    fn recorded_agent_replays_by_cycle() {
        let resp = AgentResponse {
            forecasts: vec![MarketForecast {
                condition_id: "0x0000".into(),
                probability: 0.7,
                confidence: 7,
                reasoning: "because".into(),
                strategy: Strategy::None,
                edge: None,
                expected_return: None,
            }],
            decision_text: "{\"decisions\":[]}".into(),
            latency_ms: Some(40),
            input_tokens: Some(3794),
        };
        let agent = RecordedAgent::new(
            "rec",
            [RecordedCycle {
                cycle: 0,
                response: resp,
            }],
        );
        let (ms, cs) = book(1);
        let req = ForecastRequest::new("go", &ms, &cs, 500, at(2));
        let rec = sample_forecast(&agent, &req, &hash()).unwrap();
        assert_eq!((rec.probability, rec.input_tokens, rec.latency_ms), (0.7, 3794, 40));
        assert!(sample_forecast(&agent, &req.with_cycle(1), &hash()).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        let stored = RecordedCycle {
            cycle: 0,
            response: agent.respond(&req).unwrap(),
        };
        jsonl::write_all(&path, std::slice::from_ref(&stored)).unwrap();
        let back = RecordedAgent::load("rec", &path).unwrap();
        assert_eq!(back.respond(&req).unwrap(), stored.response);
    }
}
