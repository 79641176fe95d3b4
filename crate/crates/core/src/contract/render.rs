//! Double-brace template substitution.
//!
//! `{{ key }}` is replaced by the value bound to `key`. The one helper is
//! `{{currency N}}`, which renders an integer dollar amount as `$N.00`.

use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{ContractError, PromptContract};
use crate::market_data::MarketSnapshot;
use crate::money::Cents;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("no value bound for placeholder `{0}`")]
    MissingPlaceholderValue(String),
    #[error("placeholder opened at byte {0} is never closed")]
    UnterminatedPlaceholder(usize),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

/// Placeholder bindings. Ordered so rendering never depends on hash seeds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenderContext {
    values: BTreeMap<String, String>,
}

fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

impl RenderContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.values.insert(key.into(), value.into());
        self
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.values.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Bindings for the contract itself.
    pub fn for_contract(contract: &PromptContract) -> Self {
        Self::new()
            .with("contract.version", contract.version())
            .with("contract.tokenBudget", contract.token_budget().to_string())
            .with("contract.horizonCycles", contract.horizon_cycles().to_string())
    }

    /// Bindings for a single-market instruction.
    pub fn for_market(contract: &PromptContract, market: &MarketSnapshot, portfolio: &str) -> Self {
        Self::for_contract(contract)
            .with("market.conditionId", market.condition_id.clone())
            .with("market.question", market.question.clone())
            .with("market.yesPrice", format!("{:.4}", market.yes_price))
            .with("market.noPrice", format!("{:.4}", market.no_price))
            .with("market.liquidity", market.liquidity_tier.as_str())
            .with("market.endDate", ts(market.end_time))
            .with("currentTime", ts(market.observed_at))
            .with("portfolio", portfolio)
    }

    /// Bindings for a multi-market cycle instruction. `markets` lists one line
    /// per market in feed order.
    pub fn for_cycle(
        contract: &PromptContract,
        markets: &[MarketSnapshot],
        portfolio: &str,
        now: DateTime<Utc>,
    ) -> Self {
        let mut listing = String::new();
        for m in markets {
            let question: String = m.question.chars().take(60).collect();
            listing.push_str(&format!(
                "[{}] {}\n  YES={:.2}% NO={:.2}% ends={}\n",
                m.condition_id,
                question,
                m.yes_price * 100.0,
                m.no_price * 100.0,
                ts(m.end_time)
            ));
        }
        if listing.is_empty() {
            listing.push_str("No markets available\n");
        }
        Self::for_contract(contract)
            .with("markets", listing)
            .with("marketCount", markets.len().to_string())
            .with("currentTime", ts(now))
            .with("portfolio", portfolio)
    }
}

/// Substitutes every placeholder in `template`.
pub fn render_template(template: &str, ctx: &RenderContext) -> Result<String, RenderError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut offset = 0;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or(RenderError::UnterminatedPlaceholder(offset + start))?;
        let expr = after[..end].trim();
        out.push_str(&resolve(expr, ctx)?);
        let consumed = start + 2 + end + 2;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push_str(rest);
    Ok(out)
}

fn resolve(expr: &str, ctx: &RenderContext) -> Result<String, RenderError> {
    if let Some(arg) = expr.strip_prefix("currency ") {
        let arg = arg.trim();
        if let Ok(dollars) = arg.parse::<i64>() {
            return Ok(Cents::from_dollars(dollars).to_string());
        }
        return ctx
            .get(arg)
            .map(str::to_string)
            .ok_or_else(|| RenderError::MissingPlaceholderValue(expr.to_string()));
    }
    ctx.get(expr)
        .map(str::to_string)
        .ok_or_else(|| RenderError::MissingPlaceholderValue(expr.to_string()))
}

/// Renders a locked contract's template against one market.
pub fn render_instruction(
    contract: &PromptContract,
    market: &MarketSnapshot,
    portfolio_summary: &str,
) -> Result<String, RenderError> {
    if !contract.is_locked() {
        return Err(ContractError::UnlockedContract.into());
    }
    let ctx = RenderContext::for_market(contract, market, portfolio_summary);
    render_template(contract.template_text(), &ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::lock_contract;
    use crate::market_data::LiquidityTier;
    use chrono::TimeZone;

    fn market() -> MarketSnapshot {
        MarketSnapshot {
            condition_id: "0xabc".into(),
            question: "Will A win?".into(),
            yes_price: 0.62,
            no_price: 0.38,
            liquidity_tier: LiquidityTier::High,
            end_time: Utc.with_ymd_and_hms(2025, 12, 1, 0, 0, 0).unwrap(),
            observed_at: Utc.with_ymd_and_hms(2025, 11, 1, 0, 0, 0).unwrap(),
        }
    }

    fn locked(text: &str) -> PromptContract {
        lock_contract(text, "v1", 1000, Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn plain_text_is_unchanged() {
        let c = locked("Forecast the outcome.");
        assert_eq!(
            render_instruction(&c, &market(), "none").unwrap(),
            "Forecast the outcome."
        );
    }

    #[test]
    fn question_is_substituted() {
        let c = locked("Q: {{market.question}} at {{ market.yesPrice }} ({{currency 100}})");
        let out = render_instruction(&c, &market(), "").unwrap();
        assert_eq!(out, "Q: Will A win? at 0.6200 ($100.00)");
        assert!(!out.contains("{{"));
    }

    #[test]
    fn undefined_key_is_an_error() {
        let c = locked("{{trading.max_open_positions}}");
        assert_eq!(
            render_instruction(&c, &market(), "").unwrap_err(),
            RenderError::MissingPlaceholderValue("trading.max_open_positions".into())
        );
        let c = locked("open {{market.question");
        assert_eq!(
            render_instruction(&c, &market(), "").unwrap_err(),
            RenderError::UnterminatedPlaceholder(5)
        );
    }

    #[test]
    fn render_is_deterministic() {
        let c = locked("{{portfolio}}|{{market.conditionId}}|{{currentTime}}|{{market.endDate}}");
        let a = render_instruction(&c, &market(), "cash").unwrap();
        let b = render_instruction(&c, &market(), "cash").unwrap();
        assert_eq!(a, b);
        assert_eq!(a, "cash|0xabc|2025-11-01T00:00:00Z|2025-12-01T00:00:00Z");
    }

    #[test]
    fn unlocked_contracts_do_not_render() {
        let d = PromptContract::draft("x", "v1", 1000, Utc::now());
        assert!(matches!(
            render_instruction(&d, &market(), ""),
            Err(RenderError::Contract(ContractError::UnlockedContract))
        ));
    }
}
