//! Decision wire format, Rule-of-30 validation, and opportunity ranking.
//!
//! Wire form: `{"decisions":[{"marketId":…,"action":…,"amount":…,"reasoning":…}],"reasoning":…}`
//! with `amount` in dollars. Optional per-decision evidence keys (`closeAmount`,
//! `edge`, `confidence`, `expectedReturn`, `hScore`) are accepted.

use std::cmp::Ordering;
use std::collections::HashSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Action, CalibrationWindow, Decision, DecisionBatch, WindowMode};
use crate::money::Cents;

/// Slack for floating-point threshold comparisons.
const THRESHOLD_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    pub batch_size: usize,
    pub min_amount: Cents,
    pub max_amount: Cents,
    pub bootstrap_confidence: u8,
    pub bootstrap_edge: f64,
    pub calibration_confidence: u8,
    pub calibration_edge: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            batch_size: 30,
            min_amount: Cents(10_000),
            max_amount: Cents(20_000),
            bootstrap_confidence: 7,
            bootstrap_edge: 0.05,
            calibration_confidence: 9,
            calibration_edge: 0.03,
        }
    }
}

impl ThresholdConfig {
    /// `(min confidence, min edge)` for BUYs in `mode`; `None` when the mode
    /// imposes no threshold.
    pub fn for_mode(&self, mode: WindowMode) -> Option<(u8, f64)> {
        match mode {
            WindowMode::FirstCall => None,
            WindowMode::Bootstrap => Some((self.bootstrap_confidence, self.bootstrap_edge)),
            WindowMode::Calibration => Some((self.calibration_confidence, self.calibration_edge)),
        }
    }

    /// Whether confidence and edge clear this mode's thresholds with a positive expected return.
    pub fn passes(&self, mode: WindowMode, confidence: Option<u8>, edge: Option<f64>, er: Option<Cents>) -> bool {
        match self.for_mode(mode) {
            None => true,
            Some((min_conf, min_edge)) => match (confidence, edge, er) {
                (Some(c), Some(e), Some(r)) => c >= min_conf && e + THRESHOLD_EPS >= min_edge && r > Cents::ZERO,
                _ => false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum Violation {
    WrongCardinality(usize),
    UnknownMarket(String),
    DuplicateMarket(String),
    AmountOutOfRange(String),
    ThresholdViolation(String),
    CloseFractionOutOfRange(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("decision batch rejected with {} violation(s)", violations.len())]
pub struct RejectionReport {
    pub violations: Vec<Violation>,
}

impl RejectionReport {
    pub fn first(&self) -> &Violation {
        &self.violations[0]
    }
}

/// A batch that passed [`validate_decision_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedBatch(DecisionBatch);

impl ValidatedBatch {
    pub fn batch(&self) -> &DecisionBatch {
        &self.0
    }

    pub fn into_inner(self) -> DecisionBatch {
        self.0
    }

    /// Wraps an engine-generated batch without checks. Used for the HOLD
    /// fallback and for tests.
    pub fn trusted(batch: DecisionBatch) -> Self {
        ValidatedBatch(batch)
    }
}

/// Checks the Rule of 30, market ids, BUY amounts, close fractions, and the
/// window mode's BUY thresholds. HOLD and CLOSE are exempt from thresholds.
pub fn validate_decision_batch(
    batch: DecisionBatch,
    known_markets: &HashSet<String>,
    window: &CalibrationWindow,
    thresholds: &ThresholdConfig,
) -> Result<ValidatedBatch, RejectionReport> {
    let mut violations = Vec::new();
    if batch.decisions.len() != thresholds.batch_size {
        violations.push(Violation::WrongCardinality(batch.decisions.len()));
    }
    let mode = window.mode();
    let mut seen = HashSet::new();
    for d in &batch.decisions {
        let id = &d.market_id;
        if !known_markets.contains(id) {
            violations.push(Violation::UnknownMarket(id.clone()));
        }
        if !seen.insert(id.as_str()) {
            violations.push(Violation::DuplicateMarket(id.clone()));
        }
        match d.action {
            Action::BuyYes | Action::BuyNo => {
                let in_range = d
                    .amount
                    .is_some_and(|a| a >= thresholds.min_amount && a <= thresholds.max_amount);
                if !in_range {
                    violations.push(Violation::AmountOutOfRange(id.clone()));
                }
                if !thresholds.passes(mode, d.confidence, d.edge, d.expected_return) {
                    violations.push(Violation::ThresholdViolation(id.clone()));
                }
            }
            Action::Close => {
                if d.close_fraction.is_some_and(|f| !(1..=100).contains(&f)) {
                    violations.push(Violation::CloseFractionOutOfRange(id.clone()));
                }
            }
            Action::Hold => {}
        }
    }
    if violations.is_empty() {
        Ok(ValidatedBatch(batch))
    } else {
        Err(RejectionReport { violations })
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct WireDecision {
    market_id: String,
    action: Action,
    #[serde(default)]
    amount: Option<f64>,
    #[serde(default)]
    close_amount: Option<f64>,
    #[serde(default)]
    reasoning: String,
    #[serde(default)]
    edge: Option<f64>,
    #[serde(default)]
    confidence: Option<f64>,
    #[serde(default)]
    expected_return: Option<f64>,
    #[serde(default)]
    h_score: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct WireBatch {
    decisions: Vec<WireDecision>,
    #[serde(default)]
    reasoning: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct WireDecisionOut<'a> {
    market_id: &'a str,
    action: Action,
    #[serde(skip_serializing_if = "Option::is_none")]
    amount: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    close_amount: Option<u8>,
    reasoning: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    edge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_return: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    h_score: Option<f64>,
}

#[derive(Debug, Serialize)]
struct WireBatchOut<'a> {
    decisions: Vec<WireDecisionOut<'a>>,
    reasoning: &'a str,
}

impl DecisionBatch {
    /// Renders the batch in the agent wire format.
    pub fn to_wire_json(&self) -> String {
        let out = WireBatchOut {
            decisions: self
                .decisions
                .iter()
                .map(|d| WireDecisionOut {
                    market_id: &d.market_id,
                    action: d.action,
                    amount: d.amount.map(Cents::dollars),
                    close_amount: d.close_fraction,
                    reasoning: &d.reasoning,
                    edge: d.edge,
                    confidence: d.confidence,
                    expected_return: d.expected_return.map(Cents::dollars),
                    h_score: d.h_score,
                })
                .collect(),
            reasoning: &self.overall_reasoning,
        };
        serde_json::to_string(&out).expect("wire batch serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedBatch {
    pub batch: DecisionBatch,
    /// Set when lenient parsing had to strip a markdown fence.
    pub fence_stripped: bool,
}

fn strip_fence(text: &str) -> Option<&str> {
    let t = text.trim();
    let body = t.strip_prefix("```")?;
    let body = body.strip_prefix("json").unwrap_or(body);
    let body = body.strip_suffix("```")?;
    Some(body.trim())
}

fn to_confidence(c: f64) -> Result<u8, String> {
    if c.fract() != 0.0 || !(0.0..=10.0).contains(&c) {
        return Err(format!("confidence {c} is not an integer in 0-10"));
    }
    Ok(c as u8)
}

/// Parses agent output. Strict mode requires raw JSON; lenient mode also
/// accepts a single markdown code fence and reports that it did so.
pub fn parse_decision_batch(
    text: &str,
    agent_id: &str,
    produced_at: DateTime<Utc>,
    lenient: bool,
) -> Result<ParsedBatch, String> {
    let trimmed = text.trim();
    let (body, fence_stripped) = if trimmed.starts_with("```") {
        if !lenient {
            return Err("output is wrapped in a markdown fence".into());
        }
        (strip_fence(trimmed).ok_or("unterminated markdown fence")?, true)
    } else {
        (trimmed, false)
    };
    let wire: WireBatch = serde_json::from_str(body).map_err(|e| format!("invalid decision JSON: {e}"))?;
    let mut decisions = Vec::with_capacity(wire.decisions.len());
    for w in wire.decisions {
        let close_fraction = match w.close_amount {
            None => None,
            Some(f) if f.fract() == 0.0 && (0.0..=255.0).contains(&f) => Some(f as u8),
            Some(f) => return Err(format!("closeAmount {f} is not a whole percent")),
        };
        decisions.push(Decision {
            market_id: w.market_id,
            action: w.action,
            amount: w.amount.map(Cents::from_dollars_f64),
            close_fraction,
            reasoning: w.reasoning,
            edge: w.edge,
            confidence: w.confidence.map(to_confidence).transpose()?,
            expected_return: w.expected_return.map(Cents::from_dollars_f64),
            h_score: w.h_score,
        });
    }
    Ok(ParsedBatch {
        batch: DecisionBatch {
            decisions,
            overall_reasoning: wire.reasoning,
            agent_id: agent_id.to_string(),
            produced_at,
        },
        fence_stripped,
    })
}

/// Ranking key for a candidate trade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opportunity {
    pub market_id: String,
    pub h_score: f64,
    pub expected_return: Cents,
    pub edge: f64,
    pub confidence: u8,
}

/// Sorts by H-score, then expected return, then edge, then confidence, all
/// descending. Full ties keep their input order.
pub fn rank_opportunities(mut candidates: Vec<Opportunity>) -> Vec<Opportunity> {
    candidates.sort_by(|a, b| {
        b.h_score
            .total_cmp(&a.h_score)
            .then_with(|| b.expected_return.cmp(&a.expected_return))
            .then_with(|| b.edge.total_cmp(&a.edge))
            .then_with(|| b.confidence.cmp(&a.confidence))
    });
    candidates
}

/// Ranking order of [`rank_opportunities`] applied to decisions; missing
/// evidence counts as zero.
pub fn compare_decisions(a: &Decision, b: &Decision) -> Ordering {
    let key = |d: &Decision| {
        (
            d.h_score.unwrap_or(0.0),
            d.expected_return.unwrap_or(Cents::ZERO),
            d.edge.unwrap_or(0.0),
            d.confidence.unwrap_or(0),
        )
    };
    let (ha, ra, ea, ca) = key(a);
    let (hb, rb, eb, cb) = key(b);
    hb.total_cmp(&ha)
        .then_with(|| rb.cmp(&ra))
        .then_with(|| eb.total_cmp(&ea))
        .then_with(|| cb.cmp(&ca))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ClosedPosition;
    use crate::market_data::Side;
    use chrono::TimeZone;

    fn at() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 11, 1, 0, 0, 0).unwrap()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("0x{i:02}")).collect()
    }

    fn known(n: usize) -> HashSet<String> {
        ids(n).into_iter().collect()
    }

    fn holds(n: usize) -> DecisionBatch {
        DecisionBatch {
            decisions: ids(n).into_iter().map(Decision::hold).collect(),
            overall_reasoning: String::new(),
            agent_id: "a".into(),
            produced_at: at(),
        }
    }

    fn bootstrap_window() -> CalibrationWindow {
        CalibrationWindow::from_entries([ClosedPosition {
            condition_id: "0xold".into(),
            side: Side::Yes,
            pnl: Cents(100),
        }])
    }

    fn buy(id: &str, amount: i64, edge: f64, conf: u8) -> Decision {
        Decision {
            market_id: id.into(),
            action: Action::BuyYes,
            amount: Some(Cents(amount)),
            close_fraction: None,
            reasoning: String::new(),
            edge: Some(edge),
            confidence: Some(conf),
            expected_return: Some(Cents(500)),
            h_score: None,
        }
    }

    #[test]
    fn thirty_holds_accepted() {
        let cfg = ThresholdConfig::default();
        assert!(validate_decision_batch(holds(30), &known(40), &CalibrationWindow::new(), &cfg).is_ok());
        assert!(validate_decision_batch(holds(30), &known(40), &bootstrap_window(), &cfg).is_ok());
    }

    #[test]
    fn twenty_nine_rejected() {
        let cfg = ThresholdConfig::default();
        let err = validate_decision_batch(holds(29), &known(40), &CalibrationWindow::new(), &cfg).unwrap_err();
        assert_eq!(err.violations, vec![Violation::WrongCardinality(29)]);
    }

    #[test]
    fn amount_out_of_range() {
        let cfg = ThresholdConfig::default();
        let mut b = holds(30);
        b.decisions[3] = buy("0x03", 25_000, 0.1, 10);
        let err = validate_decision_batch(b, &known(40), &CalibrationWindow::new(), &cfg).unwrap_err();
        assert_eq!(err.violations, vec![Violation::AmountOutOfRange("0x03".into())]);
    }

    #[test]
    fn unknown_and_duplicate_ids() {
        let cfg = ThresholdConfig::default();
        let mut b = holds(30);
        b.decisions[0].market_id = "0xzz".into();
        b.decisions[2].market_id = "0x01".into();
        let err = validate_decision_batch(b, &known(40), &CalibrationWindow::new(), &cfg).unwrap_err();
        assert_eq!(
            err.violations,
            vec![
                Violation::UnknownMarket("0xzz".into()),
                Violation::DuplicateMarket("0x01".into())
            ]
        );
    }

    #[test]
    fn thresholds_depend_on_mode() {
        let cfg = ThresholdConfig::default();
        let mut b = holds(30);
        b.decisions[0] = buy("0x00", 15_000, 0.04, 8);
        // first call: no thresholds
        assert!(validate_decision_batch(b.clone(), &known(40), &CalibrationWindow::new(), &cfg).is_ok());
        // bootstrap: edge 0.04 < 0.05
        let err = validate_decision_batch(b.clone(), &known(40), &bootstrap_window(), &cfg).unwrap_err();
        assert_eq!(err.violations, vec![Violation::ThresholdViolation("0x00".into())]);
        // calibration: edge ok at 0.04 >= 0.03 but confidence 8 < 9
        let full = CalibrationWindow::from_entries((0..30).map(|i| ClosedPosition {
            condition_id: format!("0xh{i}"),
            side: Side::No,
            pnl: Cents(1),
        }));
        assert!(validate_decision_batch(b.clone(), &known(40), &full, &cfg).is_err());
        b.decisions[0].confidence = Some(9);
        assert!(validate_decision_batch(b.clone(), &known(40), &full, &cfg).is_ok());
        b.decisions[0].expected_return = Some(Cents(0));
        assert!(validate_decision_batch(b, &known(40), &full, &cfg).is_err());
    }

    #[test]
    fn edge_threshold_tolerates_float_noise() {
        let cfg = ThresholdConfig::default();
        assert!(cfg.passes(WindowMode::Bootstrap, Some(7), Some(0.60 - 0.55), Some(Cents(1))));
    }

    #[test]
    fn wire_round_trip_and_fences() {
        let mut b = holds(30);
        b.decisions[1] = buy("0x01", 15_000, 0.1, 9);
        b.decisions[2].action = Action::Close;
        b.decisions[2].close_fraction = Some(50);
        let text = b.to_wire_json();
        assert!(text.starts_with(r#"{"decisions":[{"marketId":"0x00","action":"HOLD""#));
        let parsed = parse_decision_batch(&text, "a", at(), false).unwrap();
        assert_eq!(parsed.batch, b);
        assert!(!parsed.fence_stripped);

        let fenced = format!("```json\n{text}\n```");
        assert!(parse_decision_batch(&fenced, "a", at(), false).is_err());
        let lenient = parse_decision_batch(&fenced, "a", at(), true).unwrap();
        assert!(lenient.fence_stripped);
        assert_eq!(lenient.batch, b);
    }

    #[test]
    fn format_example_amount_is_out_of_range() {
        let text =
            r#"{"decisions":[{"marketId":"0x00","action":"BUY_YES","amount":5.00,"reasoning":"r"}],"reasoning":"o"}"#;
        let parsed = parse_decision_batch(text, "a", at(), false).unwrap();
        assert_eq!(parsed.batch.decisions[0].amount, Some(Cents(500)));
        let err = validate_decision_batch(
            parsed.batch,
            &known(40),
            &CalibrationWindow::new(),
            &ThresholdConfig::default(),
        )
        .unwrap_err();
        assert!(err.violations.contains(&Violation::AmountOutOfRange("0x00".into())));
        assert!(parse_decision_batch("not json", "a", at(), true).is_err());
        assert!(parse_decision_batch(r#"{"decisions":[{"marketId":"x","action":"SELL"}]}"#, "a", at(), true).is_err());
    }

    fn opp(id: &str, h: f64, er: i64, edge: f64, conf: u8) -> Opportunity {
        Opportunity {
            market_id: id.into(),
            h_score: h,
            expected_return: Cents(er),
            edge,
            confidence: conf,
        }
    }

    #[test]
    fn ranking_order() {
        let r = rank_opportunities(vec![opp("a", 0.6, 0, 0.0, 0), opp("b", 0.8, 0, 0.0, 0)]);
        assert_eq!(r[0].market_id, "b");
        let r = rank_opportunities(vec![opp("a", 0.7, 500, 0.0, 0), opp("b", 0.7, 2_000, 0.0, 0)]);
        assert_eq!(r[0].market_id, "b");
        let r = rank_opportunities(vec![opp("a", 0.7, 500, 0.05, 7), opp("b", 0.7, 500, 0.08, 7)]);
        assert_eq!(r[0].market_id, "b");
        let r = rank_opportunities(vec![opp("a", 0.7, 500, 0.05, 7), opp("b", 0.7, 500, 0.05, 9)]);
        assert_eq!(r[0].market_id, "b");
        let tied: Vec<_> = (0..5).map(|i| opp(&format!("m{i}"), 0.5, 100, 0.05, 7)).collect();
        let r = rank_opportunities(tied.clone());
        assert_eq!(r, tied);
    }
}
