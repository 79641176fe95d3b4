use std::time::Duration;

use super::{EvalError, FeedSourceInfo};
use crate::agents::{Forecaster, HttpForecaster, RecordedAgent, ScriptedAgent};
use crate::config::{AgentConfig, EngineConfig, FeedKind};
use crate::market_data::{
    generate_synthetic_with, group_ticks, load_feed, load_outcomes, stream_digest, LiveClient, MarketSnapshot,
    ResolvedOutcome,
};
use crate::par::Execution;

const LIVE_ATTEMPTS: usize = 3;

/// Market data for a run.
pub enum FeedSource {
    /// Fully known in advance: synthetic or replayed from disk.
    Static {
        info: FeedSourceInfo,
        ticks: Vec<Vec<MarketSnapshot>>,
        outcomes: Vec<ResolvedOutcome>,
        interval_secs: i64,
    },
    /// Polled once per cycle. Outcomes are not known.
    Live {
        info: FeedSourceInfo,
        client: LiveClient,
        market_ids: Vec<String>,
        interval: Duration,
    },
}

impl FeedSource {
    pub fn from_snapshots(
        kind: FeedKind,
        locator: impl Into<String>,
        snapshots: &[MarketSnapshot],
        outcomes: Vec<ResolvedOutcome>,
    ) -> Self {
        let ticks = group_ticks(snapshots);
        let interval_secs = match (ticks.first(), ticks.get(1)) {
            (Some(a), Some(b)) => (b[0].observed_at - a[0].observed_at).num_seconds(),
            _ => 0,
        };
        FeedSource::Static {
            info: FeedSourceInfo {
                kind,
                locator: locator.into(),
                stream_digest: Some(stream_digest(snapshots)),
            },
            ticks,
            outcomes,
            interval_secs,
        }
    }

    pub fn info(&self) -> &FeedSourceInfo {
        match self {
            FeedSource::Static { info, .. } | FeedSource::Live { info, .. } => info,
        }
    }

    pub fn is_live(&self) -> bool {
        matches!(self, FeedSource::Live { .. })
    }

    pub fn interval_secs(&self) -> i64 {
        match self {
            FeedSource::Static { interval_secs, .. } => *interval_secs,
            FeedSource::Live { interval, .. } => interval.as_secs() as i64,
        }
    }

    /// Number of ticks available, `None` for an unbounded live feed.
    pub fn available(&self) -> Option<usize> {
        match self {
            FeedSource::Static { ticks, .. } => Some(ticks.len()),
            FeedSource::Live { .. } => None,
        }
    }

    pub fn outcomes(&self) -> &[ResolvedOutcome] {
        match self {
            FeedSource::Static { outcomes, .. } => outcomes,
            FeedSource::Live { .. } => &[],
        }
    }

    /// Snapshots for cycle `i`. Live markets that fail to fetch after
    /// retries are left out of the tick; if all of them fail the cycle is
    /// fatal.
    pub fn tick(&self, i: usize) -> Result<Vec<MarketSnapshot>, EvalError> {
        match self {
            FeedSource::Static { ticks, .. } => Ok(ticks.get(i).cloned().unwrap_or_default()),
            FeedSource::Live { client, market_ids, .. } => {
                let mut out = Vec::new();
                let mut last_error = None;
                for id in market_ids {
                    match client.fetch_with_retry(id, LIVE_ATTEMPTS) {
                        Ok(s) => out.push(s),
                        Err(e) => last_error = Some(e.to_string()),
                    }
                }
                match last_error {
                    Some(last_error) if out.is_empty() => Err(EvalError::FatalFeed { cycle: i, last_error }),
                    _ => Ok(out),
                }
            }
        }
    }
}

/// Builds the configured market source. Synthetic feeds have one tick per
/// configured cycle.
pub fn build_source(cfg: &EngineConfig, seed: u64, exec: Execution) -> Result<FeedSource, EvalError> {
    match cfg.feed.source {
        FeedKind::Synthetic => {
            let steps = cfg.run.cycles.max(2);
            let set = generate_synthetic_with(
                seed,
                cfg.feed.markets,
                steps,
                &cfg.category_mix,
                &cfg.synthetic,
                &cfg.categorization,
                exec,
            )?;
            let locator = format!("synthetic:seed={seed},markets={},steps={steps}", cfg.feed.markets);
            Ok(FeedSource::from_snapshots(
                FeedKind::Synthetic,
                locator,
                &set.feed,
                set.outcomes,
            ))
        }
        FeedKind::Replay => {
            let path = cfg
                .feed
                .feed_path
                .as_ref()
                .ok_or_else(|| crate::config::ConfigError::Invalid("replay source needs feed.feed_path".into()))?;
            let feed = load_feed(path, cfg.feed.spread_tolerance)?;
            let outcomes = match &cfg.feed.outcomes_path {
                Some(p) => load_outcomes(p)?,
                None => Vec::new(),
            };
            Ok(FeedSource::from_snapshots(
                FeedKind::Replay,
                path.display().to_string(),
                &feed.snapshots,
                outcomes,
            ))
        }
        FeedKind::Live => {
            let client = match &cfg.feed.endpoint {
                Some(e) => LiveClient::new(
                    e.clone(),
                    std::env::var(crate::market_data::AUTH_ENV).ok(),
                    cfg.feed.requests_per_sec,
                    cfg.feed.spread_tolerance,
                ),
                None => LiveClient::from_env(cfg.feed.requests_per_sec, cfg.feed.spread_tolerance)?,
            };
            Ok(FeedSource::Live {
                info: FeedSourceInfo {
                    kind: FeedKind::Live,
                    locator: client.endpoint().to_string(),
                    stream_digest: None,
                },
                client,
                market_ids: cfg.feed.market_ids.clone(),
                interval: Duration::from_secs(cfg.feed.live_interval_secs),
            })
        }
    }
}

/// Instantiates every configured agent, in configuration order.
pub fn build_agents(cfg: &EngineConfig) -> Result<Vec<Box<dyn Forecaster>>, EvalError> {
    cfg.agents
        .iter()
        .map(|a| -> Result<Box<dyn Forecaster>, EvalError> {
            Ok(match a {
                AgentConfig::Scripted(spec) => Box::new(ScriptedAgent::new(spec.clone())),
                AgentConfig::Recorded { id, path } => Box::new(RecordedAgent::load(id.clone(), path)?),
                AgentConfig::Http {
                    id,
                    endpoint,
                    auth_env,
                    timeout_ms,
                } => {
                    let auth = auth_env.as_ref().and_then(|v| std::env::var(v).ok());
                    Box::new(HttpForecaster::new(
                        id.clone(),
                        endpoint.clone(),
                        auth,
                        Duration::from_millis(*timeout_ms),
                    ))
                }
            })
        })
        .collect()
}
