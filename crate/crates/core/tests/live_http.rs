//! Live market client and HTTP agent adapter against an in-process server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use pmeval::config::{AgentConfig, EngineConfig, FeedKind};
use pmeval::evalloop::{
    read_events, resume_run, run_evaluation, verify_run, EvalError, Event, RunOptions, EVENTS_FILE,
};
use pmeval::market_data::{LiveClient, LiveError};
use serde_json::{json, Value};

#[derive(Default)]
struct State {
    fail_markets: AtomicBool,
    market_hits: AtomicUsize,
    /// Market requests allowed before the server starts failing them.
    fail_after: AtomicUsize,
    auth_seen: Mutex<Vec<String>>,
    agent_calls: AtomicUsize,
}

struct Server {
    base: String,
    state: Arc<State>,
}

fn market_body(id: &str) -> Value {
    let yes = match id {
        "m-a" => 0.62,
        "m-b" => 0.35,
        _ => 0.5,
    };
    json!({
        "condition_id": id,
        "question": format!("Will {id} happen by year end?"),
        "yes_price": yes,
        "no_price": 1.0 - yes,
        "liquidity_tier": "medium",
        "end_time": "2030-01-01T00:00:00Z",
    })
}

fn agent_reply(body: &Value) -> Value {
    let markets = body["markets"].as_array().cloned().unwrap_or_default();
    let forecasts: Vec<Value> = markets
        .iter()
        .map(|m| {
            json!({
                "condition_id": m["conditionId"],
                "probability": m["yesPrice"],
                "confidence": 6,
                "reasoning": "the quoted price looks fair",
            })
        })
        .collect();
    let decisions: Vec<Value> = markets
        .iter()
        .map(|m| json!({"marketId": m["conditionId"], "action": "HOLD", "reasoning": "no edge"}))
        .collect();
    json!({
        "forecasts": forecasts,
        "decision_text": json!({"decisions": decisions, "reasoning": "holding"}).to_string(),
        "input_tokens": 120,
    })
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = if status == 200 { "OK" } else { "Error" };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

fn handle(mut stream: TcpStream, state: &State) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
            break;
        }
        let lower = h.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            len = v.trim().parse().unwrap_or(0);
        }
        if lower.starts_with("authorization:") {
            state.auth_seen.lock().unwrap().push(h[14..].trim().to_string());
        }
    }
    let mut body = vec![0u8; len];
    let _ = reader.read_exact(&mut body);
    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));

    match (method, path.strip_prefix("/markets/")) {
        ("GET", Some(id)) => {
            let hit = state.market_hits.fetch_add(1, Ordering::SeqCst);
            let limit = state.fail_after.load(Ordering::SeqCst);
            if state.fail_markets.load(Ordering::SeqCst) || (limit > 0 && hit >= limit) {
                respond(&mut stream, 503, "{}");
            } else if id.starts_with("m-") {
                respond(&mut stream, 200, &market_body(id).to_string());
            } else {
                respond(&mut stream, 404, "{}");
            }
        }
        ("POST", None) if path == "/agent" => {
            state.agent_calls.fetch_add(1, Ordering::SeqCst);
            let v: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            respond(&mut stream, 200, &agent_reply(&v).to_string());
        }
        _ => respond(&mut stream, 404, "{}"),
    }
}

fn serve() -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let state = Arc::new(State::default());
    let s = Arc::clone(&state);
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let s = Arc::clone(&s);
            thread::spawn(move || handle(stream, &s));
        }
    });
    Server { base, state }
}

fn live_config(server: &Server, cycles: usize) -> EngineConfig {
    let mut cfg = EngineConfig::default();
    cfg.run.cycles = cycles;
    cfg.feed.source = FeedKind::Live;
    cfg.feed.endpoint = Some(server.base.clone());
    cfg.feed.market_ids = vec!["m-a".into(), "m-b".into(), "m-c".into()];
    cfg.feed.requests_per_sec = 1000.0;
    cfg.feed.live_interval_secs = 0;
    cfg.agents.push(AgentConfig::Http {
        id: "remote".into(),
        endpoint: format!("{}/agent", server.base),
        auth_env: None,
        timeout_ms: 5_000,
    });
    cfg
}

#[test]
fn live_client_fetches_and_classifies_errors() {
    let server = serve();
    let client = LiveClient::new(&server.base, Some("Bearer t0k".into()), 1000.0, 0.02);
    let snap = client.fetch("m-a").unwrap();
    assert_eq!(snap.condition_id, "m-a");
    assert_eq!(snap.yes_price, 0.62);
    assert_eq!(server.state.auth_seen.lock().unwrap().as_slice(), ["Bearer t0k"]);

    match client.fetch("unknown") {
        Err(e @ LiveError::HttpStatus(404)) => assert!(!e.is_retryable()),
        other => panic!("{other:?}"),
    }
    server.state.fail_markets.store(true, Ordering::SeqCst);
    match client.fetch_with_retry("m-a", 2) {
        Err(e @ LiveError::HttpStatus(503)) => assert!(e.is_retryable()),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.state.market_hits.load(Ordering::SeqCst), 4);
}

#[test]
fn live_run_with_remote_agent_completes_and_verifies() {
    let server = serve();
    let cfg = live_config(&server, 3);
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_evaluation(&cfg, &RunOptions::new(tmp.path()).with_run_id("live")).unwrap();
    assert!(summary.completed);
    assert_eq!(summary.cycles_completed, 3);
    assert_eq!(server.state.agent_calls.load(Ordering::SeqCst), 3);

    let events = read_events(&summary.dir.join(EVENTS_FILE)).unwrap();
    let remote: Vec<_> = events
        .iter()
        .filter_map(|e| match e {
            Event::AgentCycle(r) if r.agent_id == "remote" => Some(r),
            _ => None,
        })
        .collect();
    assert_eq!(remote.len(), 3);
    for r in &remote {
        assert!(r.failure.is_none(), "{:?}", r.failure);
        assert_eq!(r.records.len(), 3);
        assert!(r.records.iter().all(|f| f.input_tokens == 120));
    }
    let report = verify_run(&summary.dir);
    assert!(report.ok(), "{:?}", report.problems);
}

#[test]
fn fatal_feed_error_leaves_a_resumable_run() {
    let server = serve();
    let cfg = live_config(&server, 4);
    // Two full cycles of three markets, then every market request fails.
    server.state.fail_after.store(6, Ordering::SeqCst);
    let tmp = tempfile::tempdir().unwrap();
    let opts = RunOptions::new(tmp.path()).with_run_id("flaky");
    match run_evaluation(&cfg, &opts) {
        Err(EvalError::FatalFeed { cycle, .. }) => assert_eq!(cycle, 2),
        other => panic!("{other:?}"),
    }
    server.state.fail_after.store(0, Ordering::SeqCst);
    let dir = tmp.path().join("flaky");
    let resumed = resume_run(&dir, &opts).unwrap();
    assert!(resumed.completed);
    assert_eq!(resumed.cycles_completed, 4);
    let report = verify_run(&dir);
    assert!(report.ok(), "{:?}", report.problems);
}
