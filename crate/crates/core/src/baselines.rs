//! Reference forecasters evaluated on the same schedule as agents.
//!
//! None of these read agent state. Each is a pure function of a snapshot,
//! its category, and (for the historical baseline) outcomes already resolved.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::market_data::{Domain, EventCategory, MarketSnapshot, Outcome, RiskLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Market,
    Uniform,
    Historical,
    Heuristic,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::Market,
        BaselineKind::Uniform,
        BaselineKind::Historical,
        BaselineKind::Heuristic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Market => "market",
            BaselineKind::Uniform => "uniform",
            BaselineKind::Historical => "historical",
            BaselineKind::Heuristic => "heuristic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineForecast {
    pub kind: BaselineKind,
    pub condition_id: String,
    pub probability: f64,
    pub as_of: DateTime<Utc>,
}

/// Which quote the market baseline reads.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketPriceSource {
    #[default]
    Yes,
    /// Midpoint of the YES price and the complement of the NO price.
    Mid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub market_source: MarketPriceSource,
    pub heuristic_favorite: f64,
    pub heuristic_underdog: f64,
    pub heuristic_tie: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            market_source: MarketPriceSource::Yes,
            heuristic_favorite: 0.9,
            heuristic_underdog: 0.1,
            heuristic_tie: 0.5,
        }
    }
}

fn forecast(kind: BaselineKind, snap: &MarketSnapshot, probability: f64) -> BaselineForecast {
    BaselineForecast {
        kind,
        condition_id: snap.condition_id.clone(),
        probability,
        as_of: snap.observed_at,
    }
}

pub fn market_baseline(snapshot: &MarketSnapshot) -> BaselineForecast {
    market_baseline_with(snapshot, MarketPriceSource::Yes)
}

pub fn market_baseline_with(snapshot: &MarketSnapshot, source: MarketPriceSource) -> BaselineForecast {
    let p = match source {
        MarketPriceSource::Yes => snapshot.yes_price,
        MarketPriceSource::Mid => snapshot.mid(),
    };
    forecast(BaselineKind::Market, snapshot, p)
}

pub fn uniform_baseline(snapshot: &MarketSnapshot) -> BaselineForecast {
    forecast(BaselineKind::Uniform, snapshot, 0.5)
}

pub fn heuristic_baseline(snapshot: &MarketSnapshot, cfg: &BaselineConfig) -> BaselineForecast {
    let y = snapshot.yes_price;
    let p = if y > 0.5 {
        cfg.heuristic_favorite
    } else if y < 0.5 {
        cfg.heuristic_underdog
    } else {
        cfg.heuristic_tie
    };
    forecast(BaselineKind::Heuristic, snapshot, p)
}

/// Resolved-outcome counts keyed on `(risk, domain)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoricalCounts {
    #[serde(with = "cells_as_list")]
    cells: BTreeMap<(RiskLevel, Domain), (u64, u64)>,
}

/// JSON maps need string keys, so the cells travel as a list of rows.
mod cells_as_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    type Cells = BTreeMap<(RiskLevel, Domain), (u64, u64)>;

    pub fn serialize<S: Serializer>(cells: &Cells, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(cells.iter().map(|(&(r, d), &(y, n))| (r, d, y, n)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Cells, D::Error> {
        let rows: Vec<(RiskLevel, Domain, u64, u64)> = Vec::deserialize(d)?;
        Ok(rows.into_iter().map(|(r, dm, y, n)| ((r, dm), (y, n))).collect())
    }
}

impl HistoricalCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_resolved<'a>(resolved: impl IntoIterator<Item = &'a (EventCategory, Outcome)>) -> Self {
        let mut c = Self::new();
        for (cat, o) in resolved {
            c.add(cat, *o);
        }
        c
    }

    pub fn add(&mut self, category: &EventCategory, outcome: Outcome) {
        let cell = self.cells.entry((category.risk, category.domain)).or_default();
        cell.0 += u64::from(outcome == Outcome::Yes);
        cell.1 += 1;
    }

    /// `(yes + 1) / (n + 2)` for the category's cell.
    pub fn probability(&self, category: &EventCategory) -> f64 {
        let (yes, n) = self
            .cells
            .get(&(category.risk, category.domain))
            .copied()
            .unwrap_or((0, 0));
        (yes as f64 + 1.0) / (n as f64 + 2.0)
    }
}

pub fn historical_frequency_baseline(
    snapshot: &MarketSnapshot,
    category: &EventCategory,
    resolved: &HistoricalCounts,
) -> BaselineForecast {
    forecast(BaselineKind::Historical, snapshot, resolved.probability(category))
}

/// All four baselines for one snapshot, in [`BaselineKind::ALL`] order.
pub fn all_baselines(
    snapshot: &MarketSnapshot,
    category: &EventCategory,
    resolved: &HistoricalCounts,
    cfg: &BaselineConfig,
) -> [BaselineForecast; 4] {
    [
        market_baseline_with(snapshot, cfg.market_source),
        uniform_baseline(snapshot),
        historical_frequency_baseline(snapshot, category, resolved),
        heuristic_baseline(snapshot, cfg),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{Horizon, LiquidityTier};
    use chrono::TimeZone;

    fn snap(yes: f64) -> MarketSnapshot {
        MarketSnapshot {
            condition_id: "0x1".into(),
            question: "q".into(),
            yes_price: yes,
            no_price: 1.0 - yes,
            liquidity_tier: LiquidityTier::Low,
            end_time: Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap(),
            observed_at: Utc.with_ymd_and_hms(2025, 12, 1, 0, 0, 0).unwrap(),
        }
    }

    fn cat(risk: RiskLevel, domain: Domain) -> EventCategory {
        EventCategory {
            risk,
            domain,
            horizon: Horizon::Long,
        }
    }

    #[test]
    fn passthrough_and_constant() {
        for y in [0.62, 0.0, 0.5] {
            assert_eq!(market_baseline(&snap(y)).probability, y);
            assert_eq!(uniform_baseline(&snap(y)).probability, 0.5);
        }
        let mut s = snap(0.60);
        s.no_price = 0.38;
        assert!((market_baseline_with(&s, MarketPriceSource::Mid).probability - 0.61).abs() < 1e-12);
        assert_eq!(market_baseline(&s).as_of, s.observed_at);
    }

    #[test]
    fn heuristic_rounds_toward_favorite() {
        let cfg = BaselineConfig::default();
        assert_eq!(heuristic_baseline(&snap(0.62), &cfg).probability, 0.9);
        assert_eq!(heuristic_baseline(&snap(0.50), &cfg).probability, 0.5);
        assert_eq!(heuristic_baseline(&snap(0.31), &cfg).probability, 0.1);
    }

    #[test]
    fn laplace_smoothing_per_cell() {
        let c = cat(RiskLevel::Low, Domain::Political);
        assert_eq!(HistoricalCounts::new().probability(&c), 0.5);
        let mut resolved: Vec<_> = (0..10).map(|i| (c, Outcome::from_bool(i < 7))).collect();
        let other = cat(RiskLevel::High, Domain::Political);
        resolved.extend((0..4).map(|_| (other, Outcome::No)));
        let counts = HistoricalCounts::from_resolved(&resolved);
        assert!((counts.probability(&c) - 8.0 / 12.0).abs() < 1e-15);
        assert!((counts.probability(&other) - 1.0 / 6.0).abs() < 1e-15);
        // horizon does not split cells
        let c_short = EventCategory {
            horizon: Horizon::Short,
            ..c
        };
        assert_eq!(counts.probability(&c_short), counts.probability(&c));
        let all = all_baselines(&snap(0.7), &c, &counts, &BaselineConfig::default());
        let kinds: Vec<_> = all.iter().map(|b| b.kind).collect();
        assert_eq!(kinds, BaselineKind::ALL);
        let json = serde_json::to_string(&counts).unwrap();
        assert_eq!(serde_json::from_str::<HistoricalCounts>(&json).unwrap(), counts);
    }
}
