use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use pmeval::config::{EngineConfig, FeedKind};
use pmeval::contract::{verify_file, ContractStore, PromptContract, CONTRACT_SUFFIX};
use pmeval::evalloop::{
    read_events, read_manifest, resume_run, run_evaluation, significance_test, token_budget_sweep, verify_run,
    RunOptions, RunSummary, EVENTS_FILE,
};
use pmeval::jsonl;
use pmeval::market_data::{generate_synthetic_with, stream_digest, write_feed, write_outcomes};
use pmeval::par::Execution;
use pmeval::reporting::{aggregate_run, emit, emit_reliability_csv, paired_brier, ReportFormat, SortKey};

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! outln {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(
    name = "pmeval",
    version,
    about = "Evaluate forecasting agents on prediction-market data"
)]
struct Cli {
    /// Run seed. Overrides `run.seed` from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file. Built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for contracts, feeds and runs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lock an instruction contract and store it by digest.
    Lock(LockArgs),
    /// Generate a synthetic feed with known outcomes.
    Synth(SynthArgs),
    /// Evaluate the configured agents on a recorded feed.
    Replay(ReplayArgs),
    /// Evaluate the configured agents on the configured feed.
    Run(RunArgs),
    /// Repeat a run once per token budget and compare.
    Sweep(SweepArgs),
    /// Score a run directory.
    Report(ReportArgs),
    /// Check a run directory or contract file for tampering.
    Verify(VerifyArgs),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args)]
struct LockArgs {
    /// Template file. Defaults to the configured template.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    version: Option<String>,
    #[arg(long)]
    budget: Option<u32>,
    /// Accept budgets outside the standard set.
    #[arg(long)]
    allow_custom_budget: bool,
    /// Creation timestamp (RFC 3339). Defaults to now.
    #[arg(long)]
    created_at: Option<DateTime<Utc>>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    markets: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Run single-threaded.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct RunControl {
    #[arg(long)]
    run_id: Option<String>,
    /// Stop after this many cycles, leaving a checkpoint to resume from.
    #[arg(long)]
    stop_after: Option<usize>,
    /// Run agents one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Snapshot feed (JSON lines).
    #[arg(long)]
    feed: PathBuf,
    /// Resolved outcomes (JSON lines).
    #[arg(long)]
    outcomes: Option<PathBuf>,
    #[command(flatten)]
    control: RunControl,
}

#[derive(Args)]
struct RunArgs {
    /// Resume the checkpointed run in this directory.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    control: RunControl,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated budgets. Defaults to `sweep.budgets`.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<u32>>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory.
    run: PathBuf,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    #[arg(long, default_value = "hhis")]
    sort: SortKey,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write per-bin reliability tables (CSV) to this file.
    #[arg(long)]
    reliability: Option<PathBuf>,
    /// Paired bootstrap test of two agents' per-forecast Brier scores.
    #[arg(long, num_args = 2, value_names = ["AGENT_A", "AGENT_B"])]
    compare: Option<Vec<String>>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run directory or `.contract.json` file.
    path: PathBuf,
}

fn load_config(cli: &Cli) -> Result<EngineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    Ok(cfg)
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn run_options(out: &Path, c: &RunControl) -> RunOptions {
    RunOptions {
        out_dir: out.to_path_buf(),
        run_id: c.run_id.clone(),
        exec: exec(c.sequential),
        stop_after: c.stop_after,
    }
}

fn print_summary(s: &RunSummary) -> Result<()> {
    let state = if s.completed { "completed" } else { "checkpointed" };
    outln!("run {} {state} after {} cycles", s.run_id, s.cycles_completed);
    outln!("directory: {}", s.dir.display());
    outln!("events sha256: {}", s.events_sha256);
    Ok(())
}

fn cmd_lock(cli: &Cli, cfg: &EngineConfig, a: &LockArgs) -> Result<()> {
    let template = match &a.template {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => cfg.contract.template.clone(),
    };
    let version = a.version.clone().unwrap_or_else(|| cfg.contract.version.clone());
    let budget = a.budget.unwrap_or(cfg.contract.token_budget);
    let created_at = a.created_at.unwrap_or_else(Utc::now);
    let allow = a.allow_custom_budget || cfg.contract.allow_custom_budget;
    let (contract, hash) =
        PromptContract::draft(template, version, budget, created_at).lock_with(cfg.contract.hash_algorithm, allow)?;
    let store = ContractStore::open_with(cli.out.join("contracts"), cfg.contract.hash_algorithm)?;
    store.put(&contract)?;
    outln!("{}", hash.to_hex());
    outln!("stored at {}", store.path_for(&hash).display());
    Ok(())
}

fn cmd_synth(cli: &Cli, cfg: &EngineConfig, a: &SynthArgs) -> Result<()> {
    let markets = a.markets.unwrap_or(cfg.feed.markets);
    let steps = a.steps.unwrap_or(cfg.run.cycles.max(2));
    let set = generate_synthetic_with(
        cfg.run.seed,
        markets,
        steps,
        &cfg.category_mix,
        &cfg.synthetic,
        &cfg.categorization,
        exec(a.sequential),
    )?;
    fs::create_dir_all(&cli.out)?;
    let feed = cli.out.join("feed.jsonl");
    let outcomes = cli.out.join("outcomes.jsonl");
    let truth = cli.out.join("truth.jsonl");
    write_feed(&feed, &set.feed)?;
    write_outcomes(&outcomes, &set.outcomes)?;
    jsonl::write_all(&truth, &set.truth)?;
    outln!(
        "{} markets x {} steps ({} snapshots), seed {}",
        markets,
        steps,
        set.feed.len(),
        cfg.run.seed
    );
    outln!("feed: {}", feed.display());
    outln!("outcomes: {}", outcomes.display());
    outln!("truth: {}", truth.display());
    outln!("stream sha256: {}", stream_digest(&set.feed));
    Ok(())
}

fn cmd_run(cli: &Cli, cfg: &EngineConfig, a: &RunArgs) -> Result<()> {
    let summary = match &a.resume {
        Some(dir) => resume_run(dir, &run_options(&cli.out, &a.control))?,
        None => run_evaluation(cfg, &run_options(&cli.out, &a.control))?,
    };
    print_summary(&summary)?;
    Ok(())
}

fn cmd_replay(cli: &Cli, cfg: &EngineConfig, a: &ReplayArgs) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.feed.source = FeedKind::Replay;
    cfg.feed.feed_path = Some(a.feed.clone());
    cfg.feed.outcomes_path = a.outcomes.clone();
    let summary = run_evaluation(&cfg, &run_options(&cli.out, &a.control))?;
    print_summary(&summary)?;
    Ok(())
}

fn cmd_sweep(cli: &Cli, cfg: &EngineConfig, a: &SweepArgs) -> Result<()> {
    let budgets = a.budgets.clone().unwrap_or_else(|| cfg.sweep.budgets.clone());
    if budgets.is_empty() {
        bail!("no budgets to sweep");
    }
    let opts = RunOptions {
        out_dir: cli.out.clone(),
        run_id: a.run_id.clone(),
        exec: exec(a.sequential),
        stop_after: None,
    };
    let report = token_budget_sweep(cfg, &budgets, &opts)?;
    outln!(
        "{:<8} {:<20} {:>14} {:>10} {:>10}",
        "budget",
        "agent",
        "mean |dp|",
        "d_total",
        "out_tok"
    );
    for r in &report.rows {
        outln!(
            "{:<8} {:<20} {:>14.6} {:>10} {:>10.1}",
            r.budget,
            r.agent_id,
            r.mean_abs_delta_p,
            r.mean_d_total.map_or_else(|| "-".into(), |d| format!("{d:.4}")),
            r.mean_output_tokens
        );
    }
    outln!("");
    for s in &report.stability {
        outln!(
            "{}: largest forecast shift across budgets {:.6}",
            s.agent_id,
            s.max_probability_shift
        );
    }
    let name = a.run_id.clone().unwrap_or_else(|| format!("sweep-{}", cfg.run.seed));
    let path = cli.out.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
    outln!("report: {}", path.display());
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let agg = aggregate_run(&a.run, a.sort)?;
    let mut out: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    emit(&agg, a.format, &mut out)?;
    if let Some(p) = &a.reliability {
        let mut f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        emit_reliability_csv(&agg, &mut f)?;
    }
    if let Some(pair) = &a.compare {
        let manifest = read_manifest(&a.run)?;
        let events = read_events(&a.run.join(EVENTS_FILE))?;
        let (x, y) = paired_brier(&events, &pair[0], &pair[1]);
        let s = significance_test(&x, &y, manifest.metric_config.significance.resamples, manifest.seed)?;
        writeln!(
            out,
            "\n{} vs {}: mean Brier difference {:+.6} over {} forecasts, p = {:.4} (95% interval {:+.6} to {:+.6})",
            pair[0], pair[1], s.mean_difference, s.n, s.p_value, s.ci_low, s.ci_high
        )?;
    }
    Ok(())
}

fn cmd_verify(cfg: &EngineConfig, a: &VerifyArgs) -> Result<bool> {
    let is_contract = a
        .path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(CONTRACT_SUFFIX));
    if is_contract {
        return match verify_file(&a.path, cfg.contract.hash_algorithm) {
            Ok(_) => {
                outln!("OK contract {}", a.path.display());
                Ok(true)
            }
            Err(e) => {
                outln!("FAIL {e}");
                Ok(false)
            }
        };
    }
    let rep = verify_run(&a.path);
    if rep.ok() {
        outln!(
            "OK {} contracts, {} events, {} ledgers",
            rep.contracts_checked,
            rep.events_checked,
            rep.ledgers_checked
        );
    } else {
        for p in &rep.problems {
            outln!("FAIL {p}");
        }
    }
    Ok(rep.ok())
}

/// A reader such as `head` went away; there is nobody left to tell.
fn closed_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli).and_then(|cfg| match &cli.command {
        Command::Lock(a) => cmd_lock(&cli, &cfg, a).map(|_| true),
        Command::Synth(a) => cmd_synth(&cli, &cfg, a).map(|_| true),
        Command::Replay(a) => cmd_replay(&cli, &cfg, a).map(|_| true),
        Command::Run(a) => cmd_run(&cli, &cfg, a).map(|_| true),
        Command::Sweep(a) => cmd_sweep(&cli, &cfg, a).map(|_| true),
        Command::Report(a) => cmd_report(a).map(|_| true),
        Command::Verify(a) => cmd_verify(&cfg, a),
        Command::Config => {
            write!(std::io::stdout(), "{}", cfg.to_toml_string())?;
            Ok(true)
        }
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if closed_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
