use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::{Domain, EventCategory, Horizon, RiskLevel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRule {
    /// One or more words; matched as a contiguous token phrase.
    pub keyword: String,
    pub domain: Domain,
}

/// Keyword table and the horizon/risk boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategorizationRules {
    pub keywords: Vec<KeywordRule>,
    pub default_domain: Domain,
    /// Horizons shorter than this are short.
    pub short_days: i64,
    /// Horizons shorter than this (and not short) are medium.
    pub medium_days: i64,
    /// min(yes, no) at or above this is low risk.
    pub low_risk_min: f64,
    /// min(yes, no) below this is high risk.
    pub high_risk_max: f64,
}

impl Default for CategorizationRules {
    fn default() -> Self {
        let table: [(&str, Domain); 32] = [
            ("election", Domain::Political),
            ("president", Domain::Political),
            ("presidential", Domain::Political),
            ("senate", Domain::Political),
            ("congress", Domain::Political),
            ("governor", Domain::Political),
            ("parliament", Domain::Political),
            ("prime minister", Domain::Political),
            ("vote", Domain::Political),
            ("referendum", Domain::Political),
            ("fed", Domain::Economic),
            ("interest rate", Domain::Economic),
            ("inflation", Domain::Economic),
            ("gdp", Domain::Economic),
            ("recession", Domain::Economic),
            ("unemployment", Domain::Economic),
            ("stock", Domain::Economic),
            ("oscar", Domain::Cultural),
            ("award", Domain::Cultural),
            ("film", Domain::Cultural),
            ("album", Domain::Cultural),
            ("world cup", Domain::Cultural),
            ("super bowl", Domain::Cultural),
            ("championship", Domain::Cultural),
            ("ai", Domain::Technological),
            ("launch", Domain::Technological),
            ("software", Domain::Technological),
            ("iphone", Domain::Technological),
            ("gpt", Domain::Technological),
            ("spacex", Domain::Technological),
            ("chip", Domain::Technological),
            ("release", Domain::Technological),
        ];
        Self {
            keywords: table
                .iter()
                .map(|(k, d)| KeywordRule {
                    keyword: (*k).to_string(),
                    domain: *d,
                })
                .collect(),
            default_domain: Domain::Economic,
            short_days: 7,
            medium_days: 90,
            low_risk_min: 0.45,
            high_risk_max: 0.15,
        }
    }
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}

impl CategorizationRules {
    pub fn domain_of(&self, question: &str) -> Domain {
        let tokens = tokenize(question);
        self.keywords
            .iter()
            .find(|rule| contains_phrase(&tokens, &tokenize(&rule.keyword)))
            .map(|rule| rule.domain)
            .unwrap_or(self.default_domain)
    }

    pub fn horizon_of(&self, end_time: DateTime<Utc>, now: DateTime<Utc>) -> Horizon {
        let remaining = end_time - now;
        if remaining < Duration::days(self.short_days) {
            Horizon::Short
        } else if remaining < Duration::days(self.medium_days) {
            Horizon::Medium
        } else {
            Horizon::Long
        }
    }

    pub fn risk_of(&self, yes_price: f64) -> RiskLevel {
        // snapped so that 1 - 0.55 compares equal to 0.45
        let m = (yes_price.min(1.0 - yes_price) * 1e12).round() / 1e12;
        if m >= self.low_risk_min {
            RiskLevel::Low
        } else if m < self.high_risk_max {
            RiskLevel::High
        } else {
            RiskLevel::Medium
        }
    }
}

/// Assigns risk, domain, and horizon. Domain comes from the first keyword
/// rule found in the question; risk from how lopsided the quote is.
pub fn categorize_event(
    question: &str,
    end_time: DateTime<Utc>,
    now: DateTime<Utc>,
    yes_price: f64,
    rules: &CategorizationRules,
) -> EventCategory {
    EventCategory {
        risk: rules.risk_of(yes_price),
        domain: rules.domain_of(question),
        horizon: rules.horizon_of(end_time, now),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 11, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn election_three_days_out_at_even_odds() {
        let r = CategorizationRules::default();
        let c = categorize_event(
            "Will the election be decided by December?",
            now() + Duration::days(3),
            now(),
            0.50,
            &r,
        );
        assert_eq!(
            c,
            EventCategory {
                risk: RiskLevel::Low,
                domain: Domain::Political,
                horizon: Horizon::Short
            }
        );
    }

    #[test]
    fn lopsided_price_is_high_risk() {
        let r = CategorizationRules::default();
        assert_eq!(r.risk_of(0.05), RiskLevel::High);
        assert_eq!(r.risk_of(0.95), RiskLevel::High);
        assert_eq!(r.risk_of(0.15), RiskLevel::Medium);
        assert_eq!(r.risk_of(0.30), RiskLevel::Medium);
        assert_eq!(r.risk_of(0.40), RiskLevel::Medium);
        assert_eq!(r.risk_of(0.45), RiskLevel::Low);
        assert_eq!(r.risk_of(0.55), RiskLevel::Low);
    }

    #[test]
    fn horizon_boundaries() {
        let r = CategorizationRules::default();
        assert_eq!(r.horizon_of(now() + Duration::days(365), now()), Horizon::Long);
        assert_eq!(r.horizon_of(now() + Duration::days(7), now()), Horizon::Medium);
        assert_eq!(r.horizon_of(now() + Duration::days(89), now()), Horizon::Medium);
        assert_eq!(r.horizon_of(now() + Duration::days(90), now()), Horizon::Long);
        assert_eq!(r.horizon_of(now() + Duration::hours(167), now()), Horizon::Short);
    }

    #[test]
    fn first_match_wins_and_default_is_economic() {
        let r = CategorizationRules::default();
        assert_eq!(r.domain_of("Will the Senate vote on the AI bill?"), Domain::Political);
        assert_eq!(r.domain_of("Will GPT-6 launch this year?"), Domain::Technological);
        assert_eq!(r.domain_of("Will it rain in Paris?"), Domain::Economic);
        // "ai" must not match inside another word
        assert_eq!(r.domain_of("Will the film be said to flop?"), Domain::Cultural);
        assert_eq!(r.domain_of("Who wins the World Cup?"), Domain::Cultural);
    }
}
