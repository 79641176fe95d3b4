//! Keeps the bundled fixture logs in step with the event schema.
//!
//! Set `PMEVAL_WRITE_FIXTURES=1` to rewrite them after a schema change.

#[path = "support/leaderboard.rs"]
mod leaderboard;

use pmeval::reporting::{read_event_log, SortKey};

#[test]
fn leaderboard_fixture_matches_builder() {
    let expected = leaderboard::leaderboard_jsonl();
    if std::env::var_os("PMEVAL_WRITE_FIXTURES").is_some() {
        std::fs::create_dir_all(std::path::Path::new(leaderboard::FIXTURE).parent().unwrap()).unwrap();
        std::fs::write(leaderboard::FIXTURE, &expected).unwrap();
    }
    let on_disk = std::fs::read_to_string(leaderboard::FIXTURE).expect("fixture present");
    assert_eq!(
        on_disk, expected,
        "fixture is stale; rerun with PMEVAL_WRITE_FIXTURES=1"
    );
}

#[test]
fn leaderboard_fixture_partitions_pnl_by_slice() {
    let events = read_event_log(std::path::Path::new(leaderboard::FIXTURE)).unwrap();
    let agg = pmeval::reporting::aggregate(&events, &Default::default(), SortKey::Pnl).unwrap();
    for r in &leaderboard::ROWS {
        let by_liquidity: pmeval::Cents = agg
            .categories
            .iter()
            .filter(|c| c.subject == r.model && c.dimension == "liquidity")
            .map(|c| c.pnl)
            .sum();
        assert_eq!(by_liquidity, r.pnl);
        let d = agg.diagnostics_for(r.model).unwrap();
        assert_eq!(d.successes, 2);
        assert_eq!(d.trades, 1);
    }
}
