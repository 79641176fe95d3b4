//! Live snapshot fetching over HTTP.
//!
//! `GET {endpoint}/markets/{condition_id}` must return a JSON object with the
//! snapshot fields; `observed_at` is set to the receipt time regardless of
//! what the body says. The endpoint and an optional `Authorization` header
//! value come from [`ENDPOINT_ENV`] and [`AUTH_ENV`].

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::Deserialize;

use super::{LiquidityTier, MarketSnapshot, SnapshotError};

pub const ENDPOINT_ENV: &str = "PMEVAL_API_ENDPOINT";
pub const AUTH_ENV: &str = "PMEVAL_API_AUTH";

#[derive(Debug, thiserror::Error)]
pub enum LiveError {
    #[error("network error: {0}")]
    NetworkError(String),
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("{0}")]
    PriceOutOfRange(SnapshotError),
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(SnapshotError),
    #[error("environment variable {0} is not set")]
    MissingEndpoint(&'static str),
}

impl LiveError {
    /// Transport failures and server-side statuses may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            LiveError::NetworkError(_) => true,
            LiveError::HttpStatus(code) => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

/// Classic token bucket. `capacity` tokens, refilled at `rate` per second.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    rate: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    pub fn new(rate_per_sec: f64, capacity: f64, now: Instant) -> Self {
        Self {
            capacity,
            rate: rate_per_sec,
            tokens: capacity,
            last: now,
        }
    }

    fn refill(&mut self, now: Instant) {
        let elapsed = now.saturating_duration_since(self.last).as_secs_f64();
        self.tokens = (self.tokens + elapsed * self.rate).min(self.capacity);
        self.last = now;
    }

    /// Takes a token if one is available at `now`; otherwise returns how long
    /// to wait for the next one.
    pub fn try_acquire_at(&mut self, now: Instant) -> Result<(), Duration> {
        self.refill(now);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - self.tokens) / self.rate))
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&mut self) {
        loop {
            match self.try_acquire_at(Instant::now()) {
                Ok(()) => return,
                Err(wait) => thread::sleep(wait),
            }
        }
    }
}

#[derive(Deserialize)]
struct LiveBody {
    condition_id: String,
    question: String,
    yes_price: f64,
    no_price: f64,
    liquidity_tier: LiquidityTier,
    end_time: DateTime<Utc>,
}

/// HTTP client for a single endpoint, rate limited per endpoint.
pub struct LiveClient {
    agent: ureq::Agent,
    endpoint: String,
    auth: Option<String>,
    spread_tolerance: f64,
    limiter: Mutex<TokenBucket>,
}

impl LiveClient {
    pub fn new(
        endpoint: impl Into<String>,
        auth: Option<String>,
        requests_per_sec: f64,
        spread_tolerance: f64,
    ) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(10)))
            .http_status_as_error(false)
            .build();
        Self {
            agent: config.into(),
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            auth,
            spread_tolerance,
            limiter: Mutex::new(TokenBucket::new(
                requests_per_sec,
                requests_per_sec.max(1.0),
                Instant::now(),
            )),
        }
    }

    /// Builds a client from [`ENDPOINT_ENV`] / [`AUTH_ENV`].
    pub fn from_env(requests_per_sec: f64, spread_tolerance: f64) -> Result<Self, LiveError> {
        let endpoint = std::env::var(ENDPOINT_ENV).map_err(|_| LiveError::MissingEndpoint(ENDPOINT_ENV))?;
        let auth = std::env::var(AUTH_ENV).ok();
        Ok(Self::new(endpoint, auth, requests_per_sec, spread_tolerance))
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn fetch(&self, condition_id: &str) -> Result<MarketSnapshot, LiveError> {
        self.limiter.lock().expect("limiter poisoned").acquire();
        let url = format!("{}/markets/{}", self.endpoint, condition_id);
        let mut req = self.agent.get(&url);
        if let Some(auth) = &self.auth {
            req = req.header("Authorization", auth);
        }
        let mut resp = req.call().map_err(|e| LiveError::NetworkError(e.to_string()))?;
        let observed_at = Utc::now();
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(LiveError::HttpStatus(status));
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LiveError::NetworkError(e.to_string()))?;
        let body: LiveBody = serde_json::from_str(&text).map_err(|e| LiveError::MalformedResponse(e.to_string()))?;
        let snap = MarketSnapshot {
            condition_id: body.condition_id,
            question: body.question,
            yes_price: body.yes_price,
            no_price: body.no_price,
            liquidity_tier: body.liquidity_tier,
            end_time: body.end_time,
            observed_at,
        };
        snap.validate(self.spread_tolerance).map_err(|e| match e {
            SnapshotError::PriceOutOfRange { .. } => LiveError::PriceOutOfRange(e),
            other => LiveError::InvalidSnapshot(other),
        })?;
        Ok(snap)
    }

    /// Retries retryable failures up to `attempts` times with linear backoff.
    pub fn fetch_with_retry(&self, condition_id: &str, attempts: usize) -> Result<MarketSnapshot, LiveError> {
        let mut last = None;
        for attempt in 0..attempts.max(1) {
            match self.fetch(condition_id) {
                Ok(s) => return Ok(s),
                Err(e) if e.is_retryable() => {
                    last = Some(e);
                    thread::sleep(Duration::from_millis(100 * (attempt as u64 + 1)));
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// One-shot fetch with the default rate limit (2 requests/second).
pub fn fetch_snapshot(endpoint: &str, condition_id: &str) -> Result<MarketSnapshot, LiveError> {
    LiveClient::new(endpoint, None, 2.0, 0.02).fetch(condition_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_limits_rate() {
        let t0 = Instant::now();
        let mut b = TokenBucket::new(2.0, 2.0, t0);
        assert!(b.try_acquire_at(t0).is_ok());
        assert!(b.try_acquire_at(t0).is_ok());
        let wait = b.try_acquire_at(t0).unwrap_err();
        assert!((wait.as_secs_f64() - 0.5).abs() < 1e-9);
        assert!(b.try_acquire_at(t0 + Duration::from_millis(500)).is_ok());
        assert!(b.try_acquire_at(t0 + Duration::from_millis(500)).is_err());
        // refills never exceed capacity
        assert!(b.try_acquire_at(t0 + Duration::from_secs(60)).is_ok());
        assert!(b.try_acquire_at(t0 + Duration::from_secs(60)).is_ok());
        assert!(b.try_acquire_at(t0 + Duration::from_secs(60)).is_err());
    }

    #[test]
    fn retryability() {
        assert!(LiveError::NetworkError("x".into()).is_retryable());
        assert!(LiveError::HttpStatus(503).is_retryable());
        assert!(!LiveError::HttpStatus(404).is_retryable());
        assert!(!LiveError::MalformedResponse("x".into()).is_retryable());
    }
}
