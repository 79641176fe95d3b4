//! Market snapshots from live, replayed, or synthetic sources, plus event
//! categorization.

mod categorize;
mod live;
mod replay;
mod synthetic;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use categorize::{categorize_event, tokenize, CategorizationRules, KeywordRule};
pub use live::{fetch_snapshot, LiveClient, LiveError, TokenBucket, AUTH_ENV, ENDPOINT_ENV};
pub use replay::{
    group_ticks, load_feed, load_outcomes, replay_feed, stream_digest, write_feed, write_outcomes, Feed, FeedError,
    Replay, VirtualClock,
};
pub use synthetic::{
    generate_synthetic, generate_synthetic_with, CategoryMix, LatentMarket, SyntheticConfig, SyntheticError,
    SyntheticSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiquidityTier {
    High,
    Medium,
    Low,
}

impl LiquidityTier {
    pub const ALL: [LiquidityTier; 3] = [LiquidityTier::High, LiquidityTier::Medium, LiquidityTier::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            LiquidityTier::High => "high",
            LiquidityTier::Medium => "medium",
            LiquidityTier::Low => "low",
        }
    }
}

/// One market's quotes at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSnapshot {
    pub condition_id: String,
    pub question: String,
    pub yes_price: f64,
    pub no_price: f64,
    pub liquidity_tier: LiquidityTier,
    pub end_time: DateTime<Utc>,
    pub observed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SnapshotError {
    #[error("{side} price {value} is outside [0, 1]")]
    PriceOutOfRange { side: &'static str, value: f64 },
    #[error("yes + no = {sum} deviates from 1 by more than {tolerance}")]
    SpreadTooWide { sum: f64, tolerance: f64 },
    #[error("observed at {observed_at} after market end {end_time}")]
    ObservedAfterEnd {
        observed_at: DateTime<Utc>,
        end_time: DateTime<Utc>,
    },
}

impl MarketSnapshot {
    /// Checks price bounds, the yes/no spread, and that the market had not
    /// ended when observed. Out-of-range prices are rejected, never clamped.
    pub fn validate(&self, spread_tolerance: f64) -> Result<(), SnapshotError> {
        for (side, value) in [("yes", self.yes_price), ("no", self.no_price)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SnapshotError::PriceOutOfRange { side, value });
            }
        }
        let sum = self.yes_price + self.no_price;
        if (sum - 1.0).abs() > spread_tolerance + 1e-12 {
            return Err(SnapshotError::SpreadTooWide {
                sum,
                tolerance: spread_tolerance,
            });
        }
        if self.observed_at > self.end_time {
            return Err(SnapshotError::ObservedAfterEnd {
                observed_at: self.observed_at,
                end_time: self.end_time,
            });
        }
        Ok(())
    }

    /// Quoted price of the given side.
    pub fn side_price(&self, side: Side) -> f64 {
        match side {
            Side::Yes => self.yes_price,
            Side::No => self.no_price,
        }
    }

    /// Midpoint estimate of the YES probability from both quotes.
    pub fn mid(&self) -> f64 {
        (self.yes_price + (1.0 - self.no_price)) / 2.0
    }
}

/// Contract side of a binary market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Side {
    Yes,
    No,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Yes => "YES",
            Side::No => "NO",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Yes => Side::No,
            Side::No => Side::Yes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLevel {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Political,
    Economic,
    Cultural,
    Technological,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Short,
    Medium,
    Long,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 3] = [RiskLevel::Low, RiskLevel::Medium, RiskLevel::High];
    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Low => "low",
            RiskLevel::Medium => "medium",
            RiskLevel::High => "high",
        }
    }
}

impl Domain {
    pub const ALL: [Domain; 4] = [
        Domain::Political,
        Domain::Economic,
        Domain::Cultural,
        Domain::Technological,
    ];
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Political => "political",
            Domain::Economic => "economic",
            Domain::Cultural => "cultural",
            Domain::Technological => "technological",
        }
    }
}

impl Horizon {
    pub const ALL: [Horizon; 3] = [Horizon::Short, Horizon::Medium, Horizon::Long];
    pub fn as_str(self) -> &'static str {
        match self {
            Horizon::Short => "short",
            Horizon::Medium => "medium",
            Horizon::Long => "long",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventCategory {
    pub risk: RiskLevel,
    pub domain: Domain,
    pub horizon: Horizon,
}

/// Binary resolution, serialized as `0` or `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    No,
    Yes,
}

impl Outcome {
    pub fn as_f64(self) -> f64 {
        match self {
            Outcome::Yes => 1.0,
            Outcome::No => 0.0,
        }
    }

    pub fn from_bool(yes: bool) -> Self {
        if yes {
            Outcome::Yes
        } else {
            Outcome::No
        }
    }

    /// The side that pays out.
    pub fn winning_side(self) -> Side {
        match self {
            Outcome::Yes => Side::Yes,
            Outcome::No => Side::No,
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(match self {
            Outcome::Yes => 1,
            Outcome::No => 0,
        })
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(Outcome::No),
            1 => Ok(Outcome::Yes),
            other => Err(serde::de::Error::custom(format!("outcome must be 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedOutcome {
    pub condition_id: String,
    pub outcome: Outcome,
    pub resolved_at: DateTime<Utc>,
}
