use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Aggregate, ReportError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    #[default]
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" => Ok(ReportFormat::Text),
            other => Err(format!("unknown format {other:?}; expected json, csv or text")),
        }
    }
}

fn opt(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

fn opt_u(x: Option<u64>) -> String {
    x.map_or_else(|| "-".into(), group)
}

fn group(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Pads every column to its widest cell.
fn table(out: &mut dyn Write, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<width$}", width = w[i]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    writeln!(out, "{}", line(header.to_vec()))?;
    let rule: Vec<String> = w.iter().map(|&n| "-".repeat(n)).collect();
    writeln!(out, "{}", rule.join("  "))?;
    for r in rows {
        writeln!(out, "{}", line(r.iter().map(String::as_str).collect()))?;
    }
    Ok(())
}

/// Writes the aggregate in the chosen format. CSV carries the leaderboard
/// only, one row per agent in [`super::LeaderboardRow`] field order.
pub fn emit(agg: &Aggregate, format: ReportFormat, out: &mut dyn Write) -> Result<(), ReportError> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, agg)?;
            writeln!(out)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in &agg.leaderboard {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        ReportFormat::Text => emit_text(agg, out)?,
    }
    Ok(())
}

fn emit_text(agg: &Aggregate, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "Leaderboard (sorted by {:?})", agg.sort)?;
    let rows: Vec<Vec<String>> = agg
        .leaderboard
        .iter()
        .map(|r| {
            vec![
                r.rank.to_string(),
                r.agent_id.clone(),
                r.model.clone().unwrap_or_else(|| "-".into()),
                format!("{:.4}", r.hhis),
                r.pnl.to_string(),
                opt(r.brier, 4),
                opt(r.ece, 4),
                opt(r.d_total, 3),
                opt(r.delta_vs_market, 4),
                opt_u(r.unique_users),
                opt_u(r.agent_count),
                group(r.avg_input_tokens.round() as u64),
                group(r.avg_output_tokens.round() as u64),
                r.failures.to_string(),
            ]
        })
        .collect();
    table(
        out,
        &[
            "rank",
            "agent",
            "model",
            "hhis",
            "pnl",
            "brier",
            "ece",
            "d_total",
            "vs_market",
            "users",
            "agents",
            "in_tok",
            "out_tok",
            "failures",
        ],
        &rows,
    )?;

    writeln!(out, "\nDiagnostics")?;
    let rows: Vec<Vec<String>> = agg
        .diagnostics
        .iter()
        .map(|d| {
            vec![
                d.agent_id.clone(),
                opt(d.score.as_ref().map(|s| s.log_likelihood), 4),
                opt(d.score.as_ref().map(|s| s.accuracy), 3),
                opt(d.score.as_ref().map(|s| s.overconfidence), 3),
                opt(d.d_narrative, 3),
                opt(d.d_temporal, 4),
                opt(d.d_confidence_final, 3),
                opt(d.d_total, 3),
                opt(d.market_divergence, 4),
                format!("{:.3}", d.reasoning_quality),
                d.max_drawdown.to_string(),
                d.trades.to_string(),
                format!("{}/{}", d.successes, d.cycles),
            ]
        })
        .collect();
    table(
        out,
        &[
            "agent",
            "loglik",
            "acc",
            "overconf",
            "d_n",
            "d_t",
            "d_c",
            "d_total",
            "diverg",
            "quality",
            "max_dd",
            "trades",
            "ok_cycles",
        ],
        &rows,
    )?;

    writeln!(out, "\nBaselines")?;
    let rows: Vec<Vec<String>> = agg
        .baselines
        .iter()
        .map(|b| {
            vec![
                b.kind.as_str().to_string(),
                b.n.to_string(),
                opt(b.brier, 4),
                opt(b.ece, 4),
            ]
        })
        .collect();
    table(out, &["baseline", "n", "brier", "ece"], &rows)?;

    if agg.categories.is_empty() {
        return Ok(());
    }
    writeln!(out, "\nBy category")?;
    let rows: Vec<Vec<String>> = agg
        .categories
        .iter()
        .map(|c| {
            vec![
                c.subject.clone(),
                c.dimension.clone(),
                c.value.clone(),
                c.n.to_string(),
                opt(c.brier, 4),
                c.pnl.to_string(),
            ]
        })
        .collect();
    table(out, &["subject", "dimension", "value", "n", "brier", "pnl"], &rows)
}

/// Reliability bins of every agent and baseline as CSV.
pub fn emit_reliability_csv(agg: &Aggregate, out: &mut dyn Write) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    for r in &agg.reliability {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
