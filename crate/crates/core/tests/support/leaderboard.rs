//! Builder for the bundled leaderboard fixture: eight live-window agents
//! whose aggregate P&L, audience and token footprint are known in advance.

#![allow(dead_code)]

use chrono::{DateTime, TimeZone, Utc};
use pmeval::agents::{DecisionBatch, ForecastRecord, Strategy};
use pmeval::baselines::{market_baseline, uniform_baseline};
use pmeval::evalloop::{CycleRecord, Event, PortfolioSummary, Settlement};
use pmeval::market_data::{
    Domain, EventCategory, Horizon, LiquidityTier, MarketSnapshot, Outcome, ResolvedOutcome, RiskLevel, Side,
};
use pmeval::simulator::{EntryKind, LedgerEntry, Realized, StepOutcome};
use pmeval::Cents;

pub const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/leaderboard_events.jsonl");

pub struct Row {
    pub model: &'static str,
    pub pnl: Cents,
    pub unique_users: u64,
    pub agent_count: u64,
    pub avg_input_tokens: u32,
    pub avg_output_tokens: u32,
}

const fn row(model: &'static str, pnl: i64, users: u64, agents: u64, tin: u32, tout: u32) -> Row {
    Row {
        model,
        pnl: Cents(pnl),
        unique_users: users,
        agent_count: agents,
        avg_input_tokens: tin,
        avg_output_tokens: tout,
    }
}

/// In the order the rows are published.
pub const ROWS: [Row; 8] = [
    row("Kimi-K2-Thinking", -398_337_092, 76_369, 108_281, 3_794, 3_166),
    row("Claude-Sonnet-4.5", -1_427_693_658, 53_854, 73_095, 3_994, 713),
    row("GPT-5.1", -660_572_268, 46_479, 59_257, 3_961, 3_179),
    row("Grok-4", -359_653_338, 45_678, 58_268, 4_439, 3_930),
    row("Gemini-3-Pro-Preview", -260_493_330, 45_520, 57_656, 6_725, 4_611),
    row("DeepSeek-Chat-v3.1", -507_411_667, 43_980, 56_194, 4_106, 717),
    row("Qwen3-Max", -310_537_852, 43_618, 54_936, 4_377, 429),
    row("Minimax-M2", -355_146_532, 41_084, 50_674, 4_000, 1_532),
];

/// Best to worst by P&L.
pub const PNL_ORDER: [&str; 8] = [
    "Gemini-3-Pro-Preview",
    "Qwen3-Max",
    "Minimax-M2",
    "Grok-4",
    "Kimi-K2-Thinking",
    "DeepSeek-Chat-v3.1",
    "GPT-5.1",
    "Claude-Sonnet-4.5",
];

/// Pooled capital of each agent population; large enough to absorb the
/// biggest loss.
pub const POOL_CAPITAL: Cents = Cents(5_000_000_000);

fn t(day: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 11, day, 0, 0, 0).unwrap()
}

fn snapshot(id: &str, yes: f64, tier: LiquidityTier, day: u32) -> MarketSnapshot {
    MarketSnapshot {
        condition_id: id.into(),
        question: format!("Fixture market {id}?"),
        yes_price: yes,
        no_price: 1.0 - yes,
        liquidity_tier: tier,
        end_time: t(28),
        observed_at: t(day),
    }
}

fn entry(seq: u64, kind: EntryKind, id: &str, at: DateTime<Utc>, price: f64) -> LedgerEntry {
    LedgerEntry {
        seq,
        kind,
        condition_id: id.into(),
        timestamp: at,
        side: Side::Yes,
        price,
        cash_delta: Cents::ZERO,
        basis_delta: Cents::ZERO,
        available_delta: Cents::ZERO,
        quantity_delta: 0,
        unrealized_pnl: Cents::ZERO,
    }
}

fn summary(total: Cents, deployed: Cents, open: usize) -> PortfolioSummary {
    PortfolioSummary {
        initial_capital: POOL_CAPITAL,
        total_capital: total,
        available: total - deployed,
        deployed,
        open_positions: open,
        realized_pnl: total - POOL_CAPITAL,
        unrealized_pnl: Cents::ZERO,
    }
}

/// The fixture log. Each agent forecasts both markets over two cycles with
/// token counts straddling its published average, stakes its whole loss on
/// a YES position in the market that resolves NO, and settles once.
pub fn leaderboard_events() -> Vec<Event> {
    let markets = [
        ("0xf1", 0.40, LiquidityTier::High, Outcome::No),
        ("0xf2", 0.70, LiquidityTier::Low, Outcome::Yes),
    ];
    let category = EventCategory {
        risk: RiskLevel::Medium,
        domain: Domain::Economic,
        horizon: Horizon::Short,
    };
    let mut events = vec![Event::RunStarted {
        run_id: "leaderboard-fixture".into(),
        manifest_sha256: "0".repeat(64),
        at: t(1),
    }];
    for r in &ROWS {
        events.push(Event::AgentMeta {
            agent_id: r.model.into(),
            model: Some(r.model.into()),
            agent_count: Some(r.agent_count),
            unique_users: Some(r.unique_users),
        });
    }

    let mut settlements = Vec::new();
    for cycle in 0..2usize {
        let day = 1 + cycle as u32;
        let snaps: Vec<MarketSnapshot> = markets
            .iter()
            .map(|&(id, yes, tier, _)| snapshot(id, yes, tier, day))
            .collect();
        events.push(Event::Markets {
            cycle_index: cycle,
            at: t(day),
            snapshots: snaps.clone(),
            categories: vec![category; snaps.len()],
        });
        events.push(Event::Baselines {
            cycle_index: cycle,
            at: t(day),
            forecasts: snaps
                .iter()
                .flat_map(|s| [market_baseline(s), uniform_baseline(s)])
                .collect(),
        });
        for r in &ROWS {
            let stake = Cents(-r.pnl.0);
            let records: Vec<ForecastRecord> = snaps
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    // Token counts sit one above and one below the average.
                    let sign: i64 = if (k + cycle) % 2 == 0 { 1 } else { -1 };
                    ForecastRecord {
                        condition_id: s.condition_id.clone(),
                        agent_id: r.model.into(),
                        probability: s.yes_price,
                        confidence: 6,
                        reasoning_trace: format!("fixture trace for {}", s.condition_id),
                        strategy: Strategy::None,
                        input_tokens: (i64::from(r.avg_input_tokens) + sign) as u32,
                        output_tokens: (i64::from(r.avg_output_tokens) - sign) as u32,
                        latency_ms: 1_000,
                        sampled_at: t(day),
                        contract_hash: "f".repeat(64),
                        edge: None,
                        expected_return: None,
                    }
                })
                .collect();
            let mut step = StepOutcome::default();
            if cycle == 0 {
                let mut open = entry(0, EntryKind::Open, "0xf1", t(day), 0.40);
                open.basis_delta = stake;
                open.available_delta = Cents(-stake.0);
                open.quantity_delta = (stake.0 as f64 * 1e4 / 0.40).round() as i64;
                step.entries.push(open);
            }
            events.push(Event::AgentCycle(Box::new(CycleRecord {
                cycle_index: cycle,
                agent_id: r.model.into(),
                at: t(day),
                records,
                batch: DecisionBatch {
                    decisions: vec![],
                    overall_reasoning: String::new(),
                    agent_id: r.model.into(),
                    produced_at: t(day),
                },
                failure: None,
                fence_stripped: false,
                latency_ms: 1_000,
                drift: None,
                step,
                portfolio: summary(POOL_CAPITAL, stake, 1),
            })));
            if cycle == 1 {
                let mut settle = entry(1, EntryKind::Resolve, "0xf1", t(3), 0.0);
                settle.cash_delta = r.pnl;
                settle.basis_delta = Cents(-stake.0);
                settle.quantity_delta = -((stake.0 as f64 * 1e4 / 0.40).round() as i64);
                settlements.push(Settlement {
                    agent_id: r.model.into(),
                    entries: vec![settle],
                    realized: vec![Realized {
                        condition_id: "0xf1".into(),
                        side: Side::Yes,
                        pnl: r.pnl,
                    }],
                    portfolio: summary(POOL_CAPITAL + r.pnl, Cents::ZERO, 0),
                });
            }
        }
    }
    events.push(Event::Resolution {
        at: t(3),
        outcomes: markets
            .iter()
            .map(|&(id, _, _, o)| ResolvedOutcome {
                condition_id: id.into(),
                outcome: o,
                resolved_at: t(3),
            })
            .collect(),
        settlements,
    });
    events.push(Event::RunCompleted { at: t(3), cycles: 2 });
    events
}

/// The fixture serialized one event per line.
pub fn leaderboard_jsonl() -> String {
    leaderboard_events()
        .iter()
        .map(|e| pmeval::jsonl::to_line(e).unwrap() + "\n")
        .collect()
}
