use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::market_data::{EventCategory, RiskLevel};
use crate::money::Cents;

/// Value at risk and conditional value at risk of one binary position, as
/// losses (negative values are gains).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarCvar {
    pub var: Cents,
    pub cvar: Cents,
}

/// Unrounded VaR/CVaR in cents for a position of `size` cents bought at
/// `price`, winning with probability `p_win`.
///
/// The loss is `size` with probability `1 - p_win` and
/// `-size * (1/price - 1)` with probability `p_win`.
pub fn var_cvar_raw(size: Cents, price: f64, p_win: f64, alpha: f64) -> Result<(f64, f64), MetricsError> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(MetricsError::InvalidAlpha(alpha));
    }
    if !(price > 0.0 && price <= 1.0) {
        return Err(MetricsError::InvalidPrice(price));
    }
    let s = size.as_f64();
    let lose = s;
    let win = -s * (1.0 / price - 1.0);
    let p_lose = 1.0 - p_win;
    if p_lose <= alpha {
        // P(L > win) = p_lose is within the tail budget, so VaR is the gain
        // branch and every outcome is in the tail.
        Ok((win, p_win * win + p_lose * lose))
    } else {
        Ok((lose, lose))
    }
}

pub fn var_cvar(size: Cents, price: f64, p_win: f64, alpha: f64) -> Result<VarCvar, MetricsError> {
    let (v, c) = var_cvar_raw(size, price, p_win, alpha)?;
    Ok(VarCvar {
        var: Cents::round_from(v),
        cvar: Cents::round_from(c),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RiskCategory {
    High,
    Medium,
    Low,
}

pub fn risk_category(category: &EventCategory, volatility: f64, threshold: f64) -> RiskCategory {
    if category.risk == RiskLevel::High || volatility > threshold {
        RiskCategory::High
    } else if category.risk == RiskLevel::Medium {
        RiskCategory::Medium
    } else {
        RiskCategory::Low
    }
}

/// Sample standard deviation of the last `window` price changes in `prices`.
/// Fewer than two changes give zero.
pub fn volatility(prices: &[f64], window: usize) -> f64 {
    let changes: Vec<f64> = prices.windows(2).map(|w| w[1] - w[0]).collect();
    let recent = &changes[changes.len().saturating_sub(window)..];
    if recent.len() < 2 {
        return 0.0;
    }
    let n = recent.len() as f64;
    let mean = recent.iter().sum::<f64>() / n;
    let ss: f64 = recent.iter().map(|c| (c - mean) * (c - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Total P&L divided by the population standard deviation of per-cycle P&L.
pub fn risk_adjusted_return(per_cycle_pnl: &[Cents]) -> Option<f64> {
    if per_cycle_pnl.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = per_cycle_pnl.iter().map(|c| c.as_f64()).collect();
    let n = xs.len() as f64;
    let total: f64 = xs.iter().sum();
    let mean = total / n;
    let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        None
    } else {
        Some(total / sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub risk_category: RiskCategory,
    pub var: Option<Cents>,
    pub cvar: Option<Cents>,
    pub risk_adjusted_return: Option<f64>,
}

/// Classifies a market and, when it is high risk, prices the tail of a
/// `size`-cent YES position at `price` whose win probability is `p_win`.
#[allow(clippy::too_many_arguments)]
pub fn risk_report(
    category: &EventCategory,
    volatility: f64,
    threshold: f64,
    size: Cents,
    price: f64,
    p_win: f64,
    alpha: f64,
    risk_adjusted: Option<f64>,
) -> Result<RiskReport, MetricsError> {
    let cat = risk_category(category, volatility, threshold);
    let (var, cvar) = if cat == RiskCategory::High && price > 0.0 {
        let v = var_cvar(size, price, p_win, alpha)?;
        (Some(v.var), Some(v.cvar))
    } else {
        (None, None)
    };
    Ok(RiskReport {
        risk_category: cat,
        var,
        cvar,
        risk_adjusted_return: risk_adjusted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{Domain, Horizon};
    use proptest::prelude::*;

    fn cat(risk: RiskLevel) -> EventCategory {
        EventCategory {
            risk,
            domain: Domain::Political,
            horizon: Horizon::Short,
        }
    }

    #[test]
    fn var_examples() {
        let v = var_cvar(Cents(10_000), 0.5, 0.5, 0.05).unwrap();
        assert_eq!(
            v,
            VarCvar {
                var: Cents(10_000),
                cvar: Cents(10_000)
            }
        );
        let v = var_cvar(Cents(10_000), 0.99, 0.99, 0.05).unwrap();
        assert_eq!(v.var, Cents(-101));
        assert!(v.cvar >= v.var);
        assert_eq!(var_cvar(Cents(1), 0.5, 0.5, 0.7), Err(MetricsError::InvalidAlpha(0.7)));
        assert!(var_cvar(Cents(1), 0.0, 0.5, 0.05).is_err());
    }

    #[test]
    fn category_examples() {
        assert_eq!(risk_category(&cat(RiskLevel::Low), 0.20, 0.08), RiskCategory::High);
        assert_eq!(risk_category(&cat(RiskLevel::Medium), 0.01, 0.08), RiskCategory::Medium);
        assert_eq!(risk_category(&cat(RiskLevel::Low), 0.01, 0.08), RiskCategory::Low);
        assert_eq!(risk_category(&cat(RiskLevel::High), 0.0, 0.08), RiskCategory::High);
    }

    #[test]
    fn volatility_uses_recent_window() {
        assert_eq!(volatility(&[0.5], 10), 0.0);
        assert_eq!(volatility(&[0.5, 0.6], 10), 0.0);
        let v = volatility(&[0.5, 0.6, 0.5], 10);
        assert!((v - (0.02f64).sqrt()).abs() < 1e-12);
        // older swings drop out of a window of two changes
        assert!(volatility(&[0.1, 0.9, 0.5, 0.5, 0.5], 2) == 0.0);
    }

    #[test]
    fn risk_adjusted() {
        assert_eq!(risk_adjusted_return(&[Cents(5), Cents(5)]), None);
        let r = risk_adjusted_return(&[Cents(100), Cents(-100), Cents(300)]).unwrap();
        let sd = ((100f64 * 100.0 + 300.0 * 300.0 + 100.0 * 100.0) / 3.0 - 10_000.0).sqrt();
        assert!((r - 300.0 / sd).abs() < 1e-9);
    }

    #[test]
    fn report_has_tail_only_when_high() {
        let r = risk_report(&cat(RiskLevel::High), 0.0, 0.08, Cents(10_000), 0.5, 0.5, 0.05, None).unwrap();
        assert!(r.var.is_some() && r.cvar.is_some());
        let r = risk_report(&cat(RiskLevel::Low), 0.0, 0.08, Cents(10_000), 0.5, 0.5, 0.05, None).unwrap();
        assert!(r.var.is_none() && r.cvar.is_none());
    }

    proptest! {
        #[test]
        fn cvar_not_below_var(size in 1i64..100_000, price in 0.001f64..=1.0, p in 0.0f64..=1.0, alpha in 0.001f64..0.499) {
            let v = var_cvar(Cents(size), price, p, alpha).unwrap();
            prop_assert!(v.cvar >= v.var);
        }
    }
}
