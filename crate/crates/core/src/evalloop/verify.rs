use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::{ledger_path_for, Digests};
use super::{
    read_manifest, sha256_hex, Event, PortfolioSummary, CONTRACTS_DIR, DIGESTS_FILE, EVENTS_FILE, MANIFEST_FILE,
};
use crate::contract::{ContractHash, ContractStore};
use crate::jsonl;
use crate::simulator::{read_ledger, Portfolio};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub contracts_checked: usize,
    pub events_checked: usize,
    pub ledgers_checked: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Audits a run directory: contract digests, file digests, event-log
/// structure, and that every ledger folds to the capital the log reports.
///
/// Problems are collected rather than returned as errors so one report
/// lists everything that failed.
pub fn verify_run(dir: &Path) -> VerifyReport {
    let mut rep = VerifyReport::default();
    let problem = |rep: &mut VerifyReport, m: String| rep.problems.push(m);

    let manifest = match read_manifest(dir) {
        Ok(m) => m,
        Err(e) => {
            problem(&mut rep, format!("manifest: {e}"));
            return rep;
        }
    };
    let alg = manifest.metric_config.contract.hash_algorithm;

    match ContractStore::open_with(dir.join(CONTRACTS_DIR), alg) {
        Ok(store) => {
            match store.verify_all() {
                Ok(hashes) => rep.contracts_checked = hashes.len(),
                Err(e) => problem(&mut rep, format!("contract: {e}")),
            }
            for h in &manifest.contract_hashes {
                match ContractHash::from_hex(h, alg) {
                    Some(hash) if store.path_for(&hash).exists() => {}
                    _ => problem(&mut rep, format!("contract {h} named in the manifest is missing")),
                }
            }
        }
        Err(e) => problem(&mut rep, format!("contract store: {e}")),
    }

    let read = |name: &Path| std::fs::read(name);
    let manifest_bytes = read(&dir.join(MANIFEST_FILE)).unwrap_or_default();
    let events_bytes = match read(&dir.join(EVENTS_FILE)) {
        Ok(b) => b,
        Err(e) => {
            problem(&mut rep, format!("events: {e}"));
            return rep;
        }
    };
    let digests: Option<Digests> = read(&dir.join(DIGESTS_FILE))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok());
    let Some(digests) = digests else {
        problem(&mut rep, "digest file missing or unreadable".into());
        return rep;
    };
    if digests.manifest != sha256_hex(&manifest_bytes) {
        problem(&mut rep, "manifest digest mismatch".into());
    }
    if digests.events != sha256_hex(&events_bytes) {
        problem(&mut rep, "event log digest mismatch".into());
    }

    let events: Vec<Event> = match jsonl::parse_lines(events_bytes.as_slice()) {
        Ok(e) => e,
        Err(e) => {
            problem(&mut rep, format!("event log: {e}"));
            return rep;
        }
    };
    rep.events_checked = events.len();
    match events.first() {
        Some(Event::RunStarted { manifest_sha256, .. }) if *manifest_sha256 == sha256_hex(&manifest_bytes) => {}
        _ => problem(&mut rep, "event log does not open with this manifest".into()),
    }

    let mut last: BTreeMap<&str, &PortfolioSummary> = BTreeMap::new();
    for e in &events {
        match e {
            Event::AgentCycle(r) => {
                last.insert(&r.agent_id, &r.portfolio);
            }
            Event::Resolution { settlements, .. } => {
                for s in settlements {
                    last.insert(&s.agent_id, &s.portfolio);
                }
            }
            _ => {}
        }
    }

    let sim = &manifest.metric_config.simulator;
    for id in &manifest.agent_ids {
        let path = ledger_path_for(dir, id);
        let bytes = read(&path).unwrap_or_default();
        if digests.ledgers.get(id) != Some(&sha256_hex(&bytes)) {
            problem(&mut rep, format!("ledger digest mismatch for {id}"));
        }
        let folded = read_ledger(&path).map_err(|e| e.to_string()).and_then(|entries| {
            Portfolio::replay(sim.initial_capital, sim.max_open, &entries).map_err(|e| e.to_string())
        });
        match (folded, last.get(id.as_str())) {
            (Ok(p), Some(summary)) => {
                if PortfolioSummary::of(&p) != **summary {
                    problem(
                        &mut rep,
                        format!("ledger for {id} does not fold to the logged portfolio"),
                    );
                }
            }
            (Ok(_), None) => {}
            (Err(e), _) => problem(&mut rep, format!("ledger for {id}: {e}")),
        }
        rep.ledgers_checked += 1;
    }
    rep
}
