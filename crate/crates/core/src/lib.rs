//! Deterministic evaluation engine for forecasting agents on prediction-market
//! data.
//!
//! The pipeline locks an instruction contract, feeds market snapshots to
//! agents and reference baselines on a shared schedule, simulates trading on
//! validated decision batches, and scores everything from an append-only event
//! log.

pub mod agents;
pub mod baselines;
pub mod config;
pub mod contract;
pub mod evalloop;
pub mod jsonl;
pub mod market_data;
pub mod metrics;
pub mod money;
pub mod par;
pub mod reporting;
pub mod rng;
pub mod simulator;

pub use money::Cents;
