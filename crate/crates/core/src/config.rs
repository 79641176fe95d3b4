//! Engine configuration. One TOML file holds every tunable default; any
//! omitted key takes the value shown by [`EngineConfig::default`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{ScriptedKind, ScriptedSpec, ThresholdConfig};
use crate::baselines::BaselineConfig;
use crate::contract::HashAlgorithm;
use crate::market_data::{CategorizationRules, CategoryMix, SyntheticConfig};
use crate::metrics::{HhisWeights, TemporalForm};
use crate::money::Cents;
use crate::simulator::ExecutionMode;

pub const DEFAULT_TEMPLATE: &str = include_str!("default_template.txt");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub run: RunConfig,
    pub contract: ContractConfig,
    pub feed: FeedConfig,
    pub synthetic: SyntheticConfig,
    pub category_mix: CategoryMix,
    pub categorization: CategorizationRules,
    pub thresholds: ThresholdConfig,
    pub simulator: SimulatorConfig,
    pub metrics: MetricsConfig,
    pub baselines: BaselineConfig,
    pub sweep: SweepConfig,
    pub significance: SignificanceConfig,
    pub agents: Vec<AgentConfig>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            contract: ContractConfig::default(),
            feed: FeedConfig::default(),
            synthetic: SyntheticConfig::default(),
            category_mix: CategoryMix::default(),
            categorization: CategorizationRules::default(),
            thresholds: ThresholdConfig::default(),
            simulator: SimulatorConfig::default(),
            metrics: MetricsConfig::default(),
            baselines: BaselineConfig::default(),
            sweep: SweepConfig::default(),
            significance: SignificanceConfig::default(),
            agents: vec![
                AgentConfig::Scripted(ScriptedSpec::new("market-copier", ScriptedKind::MarketCopier)),
                AgentConfig::Scripted(
                    ScriptedSpec::new("momentum", ScriptedKind::Momentum { bias: 0.05 }).with_noise(0.05),
                ),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub cycles: usize,
    /// Accept fenced agent output, logging the violation.
    pub lenient_parsing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            cycles: 20,
            lenient_parsing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractConfig {
    pub template: String,
    /// Read the template from this file instead of `template`.
    pub template_path: Option<PathBuf>,
    pub version: String,
    pub token_budget: u32,
    pub allow_custom_budget: bool,
    pub hash_algorithm: HashAlgorithm,
}

impl Default for ContractConfig {
    fn default() -> Self {
        Self {
            template: DEFAULT_TEMPLATE.to_string(),
            template_path: None,
            version: "v1".into(),
            token_budget: 1000,
            allow_custom_budget: false,
            hash_algorithm: HashAlgorithm::Sha256,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedKind {
    #[default]
    Synthetic,
    Replay,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedConfig {
    pub source: FeedKind,
    /// Synthetic market count.
    pub markets: usize,
    pub feed_path: Option<PathBuf>,
    pub outcomes_path: Option<PathBuf>,
    /// Markets polled by the live source.
    pub market_ids: Vec<String>,
    /// Live API base URL. Falls back to the `PMEVAL_API_ENDPOINT` variable.
    pub endpoint: Option<String>,
    pub spread_tolerance: f64,
    pub requests_per_sec: f64,
    /// Wall-clock spacing of live cycles, seconds.
    pub live_interval_secs: u64,
}

impl Default for FeedConfig {
    fn default() -> Self {
        Self {
            source: FeedKind::Synthetic,
            markets: 40,
            feed_path: None,
            outcomes_path: None,
            market_ids: Vec::new(),
            endpoint: None,
            spread_tolerance: 0.02,
            requests_per_sec: 2.0,
            live_interval_secs: 86_400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub initial_capital: Cents,
    pub max_open: usize,
    pub mode: ExecutionMode,
    pub delta: f64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            initial_capital: Cents::from_dollars(6000),
            max_open: 30,
            mode: ExecutionMode::Execution,
            delta: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub bins: usize,
    pub log_eps: f64,
    pub temporal_form: TemporalForm,
    pub volatility_threshold: f64,
    pub volatility_window: usize,
    pub var_alpha: f64,
    pub weights: HhisWeights,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bins: 10,
            log_eps: 1e-9,
            temporal_form: TemporalForm::Difference,
            volatility_threshold: 0.08,
            volatility_window: 10,
            var_alpha: 0.05,
            weights: HhisWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub budgets: Vec<u32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            budgets: vec![500, 1000, 2000, 4000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignificanceConfig {
    pub resamples: usize,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self { resamples: 10_000 }
    }
}

/// How to build one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "adapter", rename_all = "snake_case")]
pub enum AgentConfig {
    Scripted(ScriptedSpec),
    Recorded {
        id: String,
        path: PathBuf,
    },
    Http {
        id: String,
        endpoint: String,
        /// Environment variable holding the Authorization header value.
        auth_env: Option<String>,
        timeout_ms: u64,
    },
}

impl AgentConfig {
    pub fn id(&self) -> &str {
        match self {
            AgentConfig::Scripted(s) => &s.id,
            AgentConfig::Recorded { id, .. } | AgentConfig::Http { id, .. } => id,
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Loads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        if let Some(tp) = &cfg.contract.template_path {
            cfg.contract.template = std::fs::read_to_string(tp).map_err(|source| ConfigError::Io {
                path: tp.clone(),
                source,
            })?;
            cfg.contract.template_path = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut self.feed.feed_path);
        fix(&mut self.feed.outcomes_path);
        fix(&mut self.contract.template_path);
        for a in &mut self.agents {
            if let AgentConfig::Recorded { path, .. } = a {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.agents.is_empty() {
            return bad("at least one agent is required");
        }
        let mut ids: Vec<&str> = self.agents.iter().map(AgentConfig::id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("agent ids must be unique");
        }
        if self.run.cycles == 0 {
            return bad("run.cycles must be positive");
        }
        if self.metrics.bins < 2 {
            return bad("metrics.bins must be at least 2");
        }
        if self.thresholds.min_amount > self.thresholds.max_amount {
            return bad("thresholds.min_amount exceeds max_amount");
        }
        if self.metrics.weights.validate().is_err() {
            return bad("metrics.weights must be non-negative and sum to 1");
        }
        if self.feed.source == FeedKind::Replay && self.feed.feed_path.is_none() {
            return bad("replay source needs feed.feed_path");
        }
        if self.feed.source == FeedKind::Live && self.feed.market_ids.is_empty() {
            return bad("live source needs feed.market_ids");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = EngineConfig::default();
        let text = cfg.to_toml_string();
        let back = EngineConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = EngineConfig::from_toml_str(
            r#"
            [run]
            cycles = 5

            [[agents]]
            adapter = "scripted"
            id = "c"
            kind = { type = "constant", value = 0.5 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.run.cycles, 5);
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.agents.len(), 1);
        assert_eq!(cfg.thresholds, ThresholdConfig::default());
        assert!(EngineConfig::from_toml_str("[run]\nbogus = 1\n").is_err());
    }

    #[test]
    fn validation_catches_duplicates() {
        let mut cfg = EngineConfig::default();
        cfg.agents.push(cfg.agents[0].clone());
        assert!(cfg.validate().is_err());
    }
}
