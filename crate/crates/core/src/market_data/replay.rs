//! Recorded feed replay and the JSON Lines feed/outcome formats.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Lines};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{LiquidityTier, MarketSnapshot, ResolvedOutcome, SnapshotError};
use crate::jsonl::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum FeedError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: observed_at {observed_at} precedes the previous record")]
    UnsortedFeed { line: usize, observed_at: DateTime<Utc> },
    #[error("line {line}: corrupt record: {message}")]
    CorruptRecord { line: usize, message: String },
    #[error("line {line}: {source}")]
    InvalidSnapshot { line: usize, source: SnapshotError },
}

impl From<JsonlError> for FeedError {
    fn from(e: JsonlError) -> Self {
        match e {
            JsonlError::Io(e) => FeedError::Io(e),
            JsonlError::Corrupt { line, message } => FeedError::CorruptRecord { line, message },
            JsonlError::Serialize(e) => FeedError::CorruptRecord {
                line: 0,
                message: e.to_string(),
            },
        }
    }
}

/// Feed line as written on disk. `outcomes` is only present on non-binary
/// markets, which are skipped.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedRecord {
    condition_id: String,
    question: String,
    yes_price: f64,
    no_price: f64,
    liquidity_tier: LiquidityTier,
    end_time: DateTime<Utc>,
    observed_at: DateTime<Utc>,
    #[serde(default)]
    outcomes: Option<Vec<String>>,
}

/// Virtual-time cursor advanced by replay.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VirtualClock {
    now: Option<DateTime<Utc>>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(t: DateTime<Utc>) -> Self {
        Self { now: Some(t) }
    }

    pub fn now(&self) -> Option<DateTime<Utc>> {
        self.now
    }

    /// Moves the clock forward. Returns false (and leaves it unchanged) when
    /// `t` is in the past.
    pub fn advance_to(&mut self, t: DateTime<Utc>) -> bool {
        match self.now {
            Some(now) if t < now => false,
            _ => {
                self.now = Some(t);
                true
            }
        }
    }
}

/// Streaming replay of a feed file in timestamp order.
pub struct Replay<R: BufRead> {
    lines: Lines<R>,
    line_no: usize,
    clock: VirtualClock,
    spread_tolerance: f64,
    skipped_non_binary: usize,
    failed: bool,
}

/// Opens `feed_file` for replay. The clock starts wherever `clock` is; records
/// earlier than it are reported as unsorted.
pub fn replay_feed(
    feed_file: &Path,
    clock: VirtualClock,
    spread_tolerance: f64,
) -> Result<Replay<BufReader<File>>, FeedError> {
    let reader = BufReader::new(File::open(feed_file)?);
    Ok(Replay::new(reader, clock, spread_tolerance))
}

impl<R: BufRead> Replay<R> {
    pub fn new(reader: R, clock: VirtualClock, spread_tolerance: f64) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            clock,
            spread_tolerance,
            skipped_non_binary: 0,
            failed: false,
        }
    }

    pub fn clock(&self) -> VirtualClock {
        self.clock
    }

    /// Records dropped because they describe markets with more than two
    /// outcomes.
    pub fn skipped_non_binary(&self) -> usize {
        self.skipped_non_binary
    }

    fn next_record(&mut self) -> Option<Result<MarketSnapshot, FeedError>> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = self.line_no;
            let rec: FeedRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    return Some(Err(FeedError::CorruptRecord {
                        line: line_no,
                        message: e.to_string(),
                    }))
                }
            };
            if !self.clock.advance_to(rec.observed_at) {
                return Some(Err(FeedError::UnsortedFeed {
                    line: line_no,
                    observed_at: rec.observed_at,
                }));
            }
            if rec.outcomes.as_ref().is_some_and(|o| o.len() != 2) {
                self.skipped_non_binary += 1;
                continue;
            }
            let snap = MarketSnapshot {
                condition_id: rec.condition_id,
                question: rec.question,
                yes_price: rec.yes_price,
                no_price: rec.no_price,
                liquidity_tier: rec.liquidity_tier,
                end_time: rec.end_time,
                observed_at: rec.observed_at,
            };
            if let Err(source) = snap.validate(self.spread_tolerance) {
                return Some(Err(FeedError::InvalidSnapshot { line: line_no, source }));
            }
            return Some(Ok(snap));
        }
    }
}

impl<R: BufRead> Iterator for Replay<R> {
    type Item = Result<MarketSnapshot, FeedError>;

    /// Stops after the first error.
    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.next_record();
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

/// A fully loaded feed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Feed {
    pub snapshots: Vec<MarketSnapshot>,
    pub skipped_non_binary: usize,
}

impl Feed {
    /// Groups snapshots that share an `observed_at` into ticks.
    pub fn ticks(&self) -> Vec<Vec<MarketSnapshot>> {
        group_ticks(&self.snapshots)
    }
}

pub fn load_feed(path: &Path, spread_tolerance: f64) -> Result<Feed, FeedError> {
    let mut replay = replay_feed(path, VirtualClock::new(), spread_tolerance)?;
    let mut snapshots = Vec::new();
    for item in replay.by_ref() {
        snapshots.push(item?);
    }
    Ok(Feed {
        snapshots,
        skipped_non_binary: replay.skipped_non_binary(),
    })
}

/// Splits a time-sorted snapshot list into runs with equal `observed_at`.
pub fn group_ticks(snapshots: &[MarketSnapshot]) -> Vec<Vec<MarketSnapshot>> {
    let mut ticks: Vec<Vec<MarketSnapshot>> = Vec::new();
    for s in snapshots {
        match ticks.last_mut() {
            Some(t) if t[0].observed_at == s.observed_at => t.push(s.clone()),
            _ => ticks.push(vec![s.clone()]),
        }
    }
    ticks
}

pub fn write_feed(path: &Path, snapshots: &[MarketSnapshot]) -> Result<(), JsonlError> {
    jsonl::write_all(path, snapshots)
}

pub fn load_outcomes(path: &Path) -> Result<Vec<ResolvedOutcome>, FeedError> {
    Ok(jsonl::read_all(path)?)
}

pub fn write_outcomes(path: &Path, outcomes: &[ResolvedOutcome]) -> Result<(), JsonlError> {
    jsonl::write_all(path, outcomes)
}

/// SHA-256 over the serialized snapshot stream, as lowercase hex.
pub fn stream_digest(snapshots: &[MarketSnapshot]) -> String {
    let mut h = Sha256::new();
    for s in snapshots {
        h.update(jsonl::to_line(s).expect("snapshot serializes").as_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const FEED: &str = r#"{"condition_id":"0xa","question":"Will A win?","yes_price":0.6,"no_price":0.4,"liquidity_tier":"high","end_time":"2026-01-01T00:00:00Z","observed_at":"2025-11-01T00:00:00Z"}
{"condition_id":"0xb","question":"Will B win?","yes_price":0.3,"no_price":0.7,"liquidity_tier":"low","end_time":"2026-01-01T00:00:00Z","observed_at":"2025-11-01T00:00:00Z"}
{"condition_id":"0xa","question":"Will A win?","yes_price":0.65,"no_price":0.35,"liquidity_tier":"high","end_time":"2026-01-01T00:00:00Z","observed_at":"2025-11-02T00:00:00Z"}
"#;

    fn collect(text: &str) -> Result<Vec<MarketSnapshot>, FeedError> {
        Replay::new(Cursor::new(text.to_string()), VirtualClock::new(), 0.02).collect()
    }

    #[test]
    fn replays_in_order() {
        let snaps = collect(FEED).unwrap();
        assert_eq!(snaps.len(), 3);
        assert_eq!(snaps[2].yes_price, 0.65);
        let ticks = group_ticks(&snaps);
        assert_eq!(ticks.len(), 2);
        assert_eq!(ticks[0].len(), 2);
    }

    #[test]
    fn replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feed.jsonl");
        std::fs::write(&path, FEED).unwrap();
        let a = load_feed(&path, 0.02).unwrap();
        let b = load_feed(&path, 0.02).unwrap();
        assert_eq!(stream_digest(&a.snapshots), stream_digest(&b.snapshots));
        // re-writing the loaded feed reproduces the original bytes
        let out = dir.path().join("copy.jsonl");
        write_feed(&out, &a.snapshots).unwrap();
        assert_eq!(std::fs::read_to_string(out).unwrap(), FEED);
    }

    #[test]
    fn unsorted_feed_is_rejected() {
        let lines: Vec<&str> = FEED.lines().collect();
        let text = format!("{}\n{}\n", lines[2], lines[0]);
        match collect(&text) {
            Err(FeedError::UnsortedFeed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected UnsortedFeed, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_record_reports_line() {
        let text = format!("{}{{not json\n", FEED);
        match collect(&text) {
            Err(FeedError::CorruptRecord { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected CorruptRecord, got {other:?}"),
        }
    }

    #[test]
    fn multinomial_records_are_skipped() {
        let extra = r#"{"condition_id":"0xc","question":"Who wins?","yes_price":0.3,"no_price":0.7,"liquidity_tier":"low","end_time":"2026-01-01T00:00:00Z","observed_at":"2025-11-02T00:00:00Z","outcomes":["A","B","C"]}"#;
        let text = format!("{FEED}{extra}\n");
        let mut r = Replay::new(Cursor::new(text), VirtualClock::new(), 0.02);
        let snaps: Vec<_> = r.by_ref().collect::<Result<_, _>>().unwrap();
        assert_eq!(snaps.len(), 3);
        assert_eq!(r.skipped_non_binary(), 1);
    }

    #[test]
    fn out_of_range_price_in_feed() {
        let text = FEED.replace("\"yes_price\":0.3,", "\"yes_price\":1.3,");
        assert!(matches!(
            collect(&text),
            Err(FeedError::InvalidSnapshot { line: 2, .. })
        ));
    }
}
