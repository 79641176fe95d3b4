use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::engine::{run_evaluation, RunOptions};
use super::{read_events, read_manifest, EvalError, Event, EVENTS_FILE};
use crate::config::EngineConfig;

/// One agent at one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub budget: u32,
    pub agent_id: String,
    pub run_id: String,
    pub contract_hash: String,
    /// Mean `|p_t - p_{t-1}|` over consecutive forecasts of the same market.
    pub mean_abs_delta_p: f64,
    pub mean_d_total: Option<f64>,
    pub mean_output_tokens: f64,
    pub forecasts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStability {
    pub agent_id: String,
    /// Largest change of any forecast relative to the first budget.
    pub max_probability_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub budgets: Vec<u32>,
    pub rows: Vec<BudgetRow>,
    pub stability: Vec<AgentStability>,
}

impl SweepReport {
    pub fn row(&self, agent_id: &str, budget: u32) -> Option<&BudgetRow> {
        self.rows.iter().find(|r| r.agent_id == agent_id && r.budget == budget)
    }
}

type Forecasts = BTreeMap<String, BTreeMap<(String, usize), f64>>;

/// Runs the same seed and feed once per budget, each under its own locked
/// contract, and compares forecasts across budgets.
pub fn token_budget_sweep(cfg: &EngineConfig, budgets: &[u32], opts: &RunOptions) -> Result<SweepReport, EvalError> {
    let base = opts.run_id.clone().unwrap_or_else(|| format!("sweep-{}", cfg.run.seed));
    let mut rows = Vec::new();
    let mut per_budget: Vec<Forecasts> = Vec::new();
    for &b in budgets {
        let mut c = cfg.clone();
        c.contract.token_budget = b;
        let run_opts = RunOptions {
            run_id: Some(format!("{base}-budget-{b}")),
            stop_after: None,
            ..opts.clone()
        };
        let summary = run_evaluation(&c, &run_opts)?;
        let manifest = read_manifest(&summary.dir)?;
        let events = read_events(&summary.dir.join(EVENTS_FILE))?;

        let mut probs: Forecasts = BTreeMap::new();
        let mut drift: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut tokens: BTreeMap<String, (u64, usize)> = BTreeMap::new();
        for e in &events {
            if let Event::AgentCycle(rec) = e {
                let p = probs.entry(rec.agent_id.clone()).or_default();
                let tk = tokens.entry(rec.agent_id.clone()).or_default();
                for r in &rec.records {
                    p.insert((r.condition_id.clone(), rec.cycle_index), r.probability);
                    tk.0 += u64::from(r.output_tokens);
                    tk.1 += 1;
                }
                if let Some(d) = &rec.drift {
                    drift.entry(rec.agent_id.clone()).or_default().push(d.d_total);
                }
            }
        }
        for id in &manifest.agent_ids {
            let p = probs.get(id).cloned().unwrap_or_default();
            let mut deltas = Vec::new();
            let mut prev: Option<(&String, f64)> = None;
            for ((market, _), &v) in &p {
                if let Some((m, q)) = prev {
                    if m == market {
                        deltas.push((v - q).abs());
                    }
                }
                prev = Some((market, v));
            }
            let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
            let (tok, n) = tokens.get(id).copied().unwrap_or_default();
            rows.push(BudgetRow {
                budget: b,
                agent_id: id.clone(),
                run_id: manifest.run_id.clone(),
                contract_hash: manifest.contract_hashes[0].clone(),
                mean_abs_delta_p: mean(&deltas).unwrap_or(0.0),
                mean_d_total: drift.get(id).and_then(|d| mean(d)),
                mean_output_tokens: if n == 0 { 0.0 } else { tok as f64 / n as f64 },
                forecasts: n,
            });
        }
        per_budget.push(probs);
    }

    let mut stability = Vec::new();
    if let Some(first) = per_budget.first() {
        for (id, reference) in first {
            let mut shift: f64 = 0.0;
            for other in &per_budget[1..] {
                let o = other.get(id);
                for (k, &v) in reference {
                    match o.and_then(|m| m.get(k)) {
                        Some(&w) => shift = shift.max((v - w).abs()),
                        None => shift = f64::INFINITY,
                    }
                }
            }
            stability.push(AgentStability {
                agent_id: id.clone(),
                max_probability_shift: shift,
            });
        }
    }
    Ok(SweepReport {
        budgets: budgets.to_vec(),
        rows,
        stability,
    })
}
