//! Seeded synthetic market generator.
//!
//! Each market draws a latent probability `p*` from the region of its risk
//! class, then its YES quote wanders inside a bounded band around `p*` and
//! converges onto it at the final step. Outcomes are Bernoulli(`p*`). Every
//! market has its own ChaCha stream, so generation order (and thread count)
//! does not affect the result.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    CategorizationRules, Domain, EventCategory, Horizon, LiquidityTier, MarketSnapshot, Outcome, ResolvedOutcome,
    RiskLevel,
};
use crate::par::{self, Execution};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SyntheticError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
}

/// Independent marginal weights over the three category axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMix {
    /// Weights for low, medium, high.
    pub risk: [f64; 3],
    /// Weights for political, economic, cultural, technological.
    pub domain: [f64; 4],
    /// Weights for short, medium, long.
    pub horizon: [f64; 3],
}

impl CategoryMix {
    /// Risk weights proportional to the width of each risk region, which
    /// makes `p*` uniform on `[min_p, 1 - min_p]` overall.
    pub fn uniform_probability(rules: &CategorizationRules, min_p: f64) -> Self {
        let low = 2.0 * (0.5 - rules.low_risk_min);
        let medium = 2.0 * (rules.low_risk_min - rules.high_risk_max);
        let high = 2.0 * (rules.high_risk_max - min_p);
        Self {
            risk: [low, medium, high],
            domain: [1.0; 4],
            horizon: [1.0; 3],
        }
    }

    fn validate(&self) -> Result<(), SyntheticError> {
        let ok = |w: &[f64]| w.iter().all(|x| x.is_finite() && *x >= 0.0) && w.iter().sum::<f64>() > 0.0;
        if ok(&self.risk) && ok(&self.domain) && ok(&self.horizon) {
            Ok(())
        } else {
            Err(SyntheticError::InvalidParameters(
                "category weights must be non-negative with a positive sum".into(),
            ))
        }
    }
}

impl Default for CategoryMix {
    fn default() -> Self {
        Self::uniform_probability(
            &CategorizationRules::default(),
            SyntheticConfig::default().min_probability,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub start: DateTime<Utc>,
    /// Spacing between snapshots, seconds.
    pub interval_secs: i64,
    /// Largest single-step move of the price offset.
    pub walk_step: f64,
    /// Bound on |price - p*|.
    pub walk_bound: f64,
    /// `p*` is drawn from `[min_probability, 1 - min_probability]`.
    pub min_probability: f64,
    /// Quotes are rounded to this many decimals.
    pub price_decimals: i32,
    /// Weights for high, medium, low liquidity.
    pub liquidity: [f64; 3],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            start: Utc.with_ymd_and_hms(2025, 11, 1, 0, 0, 0).unwrap(),
            interval_secs: 86_400,
            walk_step: 0.01,
            walk_bound: 0.05,
            min_probability: 0.01,
            price_decimals: 4,
            liquidity: [0.3, 0.4, 0.3],
        }
    }
}

/// Ground truth for one generated market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMarket {
    pub condition_id: String,
    pub p_star: f64,
    pub category: EventCategory,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    /// Sorted by `observed_at`, then market index.
    pub feed: Vec<MarketSnapshot>,
    pub outcomes: Vec<ResolvedOutcome>,
    pub truth: Vec<LatentMarket>,
}

pub fn generate_synthetic(
    seed: u64,
    n_markets: usize,
    steps: usize,
    category_mix: &CategoryMix,
) -> Result<SyntheticSet, SyntheticError> {
    generate_synthetic_with(
        seed,
        n_markets,
        steps,
        category_mix,
        &SyntheticConfig::default(),
        &CategorizationRules::default(),
        Execution::default(),
    )
}

pub fn generate_synthetic_with(
    seed: u64,
    n_markets: usize,
    steps: usize,
    category_mix: &CategoryMix,
    config: &SyntheticConfig,
    rules: &CategorizationRules,
    exec: Execution,
) -> Result<SyntheticSet, SyntheticError> {
    if n_markets < 1 {
        return Err(SyntheticError::InvalidParameters("n_markets must be at least 1".into()));
    }
    if steps < 2 {
        return Err(SyntheticError::InvalidParameters("steps must be at least 2".into()));
    }
    if config.interval_secs <= 0 || config.walk_bound < 0.0 || config.walk_step < 0.0 {
        return Err(SyntheticError::InvalidParameters(
            "interval must be positive and walk parameters non-negative".into(),
        ));
    }
    if !(0.0..rules.high_risk_max).contains(&config.min_probability) {
        return Err(SyntheticError::InvalidParameters(
            "min_probability must lie below the high-risk boundary".into(),
        ));
    }
    category_mix.validate()?;

    let per_market = par::map_range(exec, n_markets, |i| {
        generate_market(seed, i, steps, category_mix, config, rules)
    });

    let mut feed = Vec::with_capacity(n_markets * steps);
    for step in 0..steps {
        for (_, snaps, _) in &per_market {
            feed.push(snaps[step].clone());
        }
    }
    let mut outcomes = Vec::with_capacity(n_markets);
    let mut truth = Vec::with_capacity(n_markets);
    for (latent, _, resolved) in per_market {
        outcomes.push(resolved);
        truth.push(latent);
    }
    Ok(SyntheticSet { feed, outcomes, truth })
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

fn question_for(domain: Domain, i: usize) -> String {
    match domain {
        Domain::Political => format!("Will the incumbent carry the election in district {i}?"),
        Domain::Economic => format!("Will the inflation print for index {i} beat consensus?"),
        Domain::Cultural => format!("Will title {i} take the top award this season?"),
        Domain::Technological => format!("Will product {i} launch before its announced date?"),
    }
}

fn generate_market(
    seed: u64,
    index: usize,
    steps: usize,
    mix: &CategoryMix,
    config: &SyntheticConfig,
    rules: &CategorizationRules,
) -> (LatentMarket, Vec<MarketSnapshot>, ResolvedOutcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);

    let pick = |rng: &mut ChaCha8Rng, w: &[f64]| WeightedIndex::new(w).expect("validated weights").sample(rng);
    let risk = RiskLevel::ALL[pick(&mut rng, &mix.risk)];
    let domain = Domain::ALL[pick(&mut rng, &mix.domain)];
    let horizon = Horizon::ALL[pick(&mut rng, &mix.horizon)];
    let liquidity = LiquidityTier::ALL[pick(&mut rng, &config.liquidity)];

    // p* in the half-region below 0.5, mirrored with probability 1/2.
    let (lo, hi) = match risk {
        RiskLevel::Low => (rules.low_risk_min, 0.5),
        RiskLevel::Medium => (rules.high_risk_max, rules.low_risk_min),
        RiskLevel::High => (config.min_probability, rules.high_risk_max),
    };
    let below: f64 = rng.random_range(lo..hi);
    let p_raw = if rng.random_bool(0.5) { 1.0 - below } else { below };
    let p_star = round_to(p_raw, config.price_decimals);

    let horizon_secs: i64 = match horizon {
        Horizon::Short => rng.random_range(86_400..6 * 86_400),
        Horizon::Medium => rng.random_range(8 * 86_400..80 * 86_400),
        Horizon::Long => rng.random_range(100 * 86_400..365 * 86_400),
    };
    let last_obs = config.start + Duration::seconds(config.interval_secs * (steps as i64 - 1));
    let end_time = last_obs + Duration::seconds(horizon_secs);

    let tick = 10f64.powi(-config.price_decimals);
    let mut offset: f64 = if config.walk_bound > 0.0 {
        rng.random_range(-config.walk_bound..=config.walk_bound)
    } else {
        0.0
    };
    let condition_id = format!("0x{:08x}{:024x}", index, rng.random::<u128>() >> 32);
    let question = question_for(domain, index);
    let mut snaps = Vec::with_capacity(steps);
    for t in 0..steps {
        if t > 0 && config.walk_step > 0.0 {
            offset += rng.random_range(-config.walk_step..=config.walk_step);
            offset = offset.clamp(-config.walk_bound, config.walk_bound);
        }
        let remaining = (steps - 1 - t) as f64 / (steps - 1) as f64;
        let yes = round_to(
            (p_star + offset * remaining).clamp(tick, 1.0 - tick),
            config.price_decimals,
        );
        let no = round_to(1.0 - yes, config.price_decimals);
        snaps.push(MarketSnapshot {
            condition_id: condition_id.clone(),
            question: question.clone(),
            yes_price: yes,
            no_price: no,
            liquidity_tier: liquidity,
            end_time,
            observed_at: config.start + Duration::seconds(config.interval_secs * t as i64),
        });
    }
    let outcome = Outcome::from_bool(rng.random_bool(p_star));
    let latent = LatentMarket {
        condition_id: condition_id.clone(),
        p_star,
        category: EventCategory { risk, domain, horizon },
        outcome,
    };
    let resolved = ResolvedOutcome {
        condition_id,
        outcome,
        resolved_at: end_time,
    };
    (latent, snaps, resolved)
}
