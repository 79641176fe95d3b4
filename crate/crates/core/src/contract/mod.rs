//! Locked, hashed prompt contracts.
//!
//! A [`PromptContract`] binds an evaluation run to one exact instruction
//! template. Once locked it cannot be mutated, and its [`ContractHash`] is a
//! digest over a length-prefixed canonical encoding of every field.

mod hash;
mod render;
mod store;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

pub use hash::{ContractHash, HashAlgorithm};
pub use render::{render_instruction, render_template, RenderContext, RenderError};
pub use store::{verify_file, ContractStore, StoreError, CONTRACT_SUFFIX};

/// Token budgets accepted without an explicit override.
pub const STANDARD_BUDGETS: [u32; 4] = [500, 1000, 2000, 4000];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ContractError {
    #[error("template text is empty")]
    EmptyTemplate,
    #[error("token budget must be positive")]
    NonPositiveBudget,
    #[error("token budget {0} is not one of 500, 1000, 2000, 4000")]
    NonStandardBudget(u32),
    #[error("horizon must be at least one cycle")]
    NonPositiveHorizon,
    #[error("contract is locked")]
    Locked,
    #[error("contract is not locked")]
    UnlockedContract,
    #[error("unknown hash algorithm `{0}`")]
    UnknownAlgorithm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Binary,
}

impl TargetKind {
    fn as_str(self) -> &'static str {
        match self {
            TargetKind::Binary => "binary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityFormat {
    /// A single probability in `[0, 1]`.
    #[serde(rename = "scalar_0_1")]
    Scalar01,
}

impl ProbabilityFormat {
    fn as_str(self) -> &'static str {
        match self {
            ProbabilityFormat::Scalar01 => "scalar_0_1",
        }
    }
}

/// A forecasting instruction plus the metadata that pins it down.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptContract {
    template_text: String,
    version: String,
    target_kind: TargetKind,
    horizon_cycles: u32,
    token_budget: u32,
    probability_format: ProbabilityFormat,
    created_at: DateTime<Utc>,
    locked: bool,
}

impl PromptContract {
    /// Creates an unlocked draft. Drafts may be edited until [`lock`](Self::lock).
    pub fn draft(
        template_text: impl Into<String>,
        version: impl Into<String>,
        token_budget: u32,
        created_at: DateTime<Utc>,
    ) -> Self {
        Self {
            template_text: template_text.into(),
            version: version.into(),
            target_kind: TargetKind::Binary,
            horizon_cycles: 1,
            token_budget,
            probability_format: ProbabilityFormat::Scalar01,
            created_at,
            locked: false,
        }
    }

    pub fn template_text(&self) -> &str {
        &self.template_text
    }
    pub fn version(&self) -> &str {
        &self.version
    }
    pub fn target_kind(&self) -> TargetKind {
        self.target_kind
    }
    pub fn horizon_cycles(&self) -> u32 {
        self.horizon_cycles
    }
    pub fn token_budget(&self) -> u32 {
        self.token_budget
    }
    pub fn probability_format(&self) -> ProbabilityFormat {
        self.probability_format
    }
    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }
    pub fn is_locked(&self) -> bool {
        self.locked
    }

    fn ensure_unlocked(&self) -> Result<(), ContractError> {
        if self.locked {
            Err(ContractError::Locked)
        } else {
            Ok(())
        }
    }

    pub fn set_template_text(&mut self, text: impl Into<String>) -> Result<(), ContractError> {
        self.ensure_unlocked()?;
        self.template_text = text.into();
        Ok(())
    }

    pub fn set_version(&mut self, version: impl Into<String>) -> Result<(), ContractError> {
        self.ensure_unlocked()?;
        self.version = version.into();
        Ok(())
    }

    pub fn set_token_budget(&mut self, budget: u32) -> Result<(), ContractError> {
        self.ensure_unlocked()?;
        self.token_budget = budget;
        Ok(())
    }

    pub fn set_horizon_cycles(&mut self, cycles: u32) -> Result<(), ContractError> {
        self.ensure_unlocked()?;
        self.horizon_cycles = cycles;
        Ok(())
    }

    /// Validates and locks the draft, returning the default-algorithm hash.
    pub fn lock(self) -> Result<(PromptContract, ContractHash), ContractError> {
        self.lock_with(HashAlgorithm::default(), false)
    }

    /// Locks with an explicit algorithm. `allow_custom_budget` lifts the
    /// restriction to [`STANDARD_BUDGETS`].
    pub fn lock_with(
        mut self,
        algorithm: HashAlgorithm,
        allow_custom_budget: bool,
    ) -> Result<(PromptContract, ContractHash), ContractError> {
        if self.template_text.is_empty() {
            return Err(ContractError::EmptyTemplate);
        }
        if self.token_budget == 0 {
            return Err(ContractError::NonPositiveBudget);
        }
        if !allow_custom_budget && !STANDARD_BUDGETS.contains(&self.token_budget) {
            return Err(ContractError::NonStandardBudget(self.token_budget));
        }
        if self.horizon_cycles == 0 {
            return Err(ContractError::NonPositiveHorizon);
        }
        self.locked = true;
        let hash = ContractHash::compute(&self, algorithm);
        Ok((self, hash))
    }

    /// Length-prefixed encoding of every field in a fixed order.
    ///
    /// Each field is `u32 name length | name | u64 value length | value`, all
    /// big-endian, behind a format tag.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let created = self.created_at.to_rfc3339_opts(SecondsFormat::AutoSi, true);
        let fields: [(&str, &[u8]); 8] = [
            ("template_text", self.template_text.as_bytes()),
            ("version", self.version.as_bytes()),
            ("target_kind", self.target_kind.as_str().as_bytes()),
            ("horizon_cycles", &u64::from(self.horizon_cycles).to_be_bytes()),
            ("token_budget", &u64::from(self.token_budget).to_be_bytes()),
            ("probability_format", self.probability_format.as_str().as_bytes()),
            ("created_at", created.as_bytes()),
            ("locked", &[u8::from(self.locked)]),
        ];
        let mut out = Vec::with_capacity(64 + self.template_text.len());
        out.extend_from_slice(b"pmeval.contract.v1\0");
        for (name, value) in fields {
            out.extend_from_slice(&(name.len() as u32).to_be_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(value.len() as u64).to_be_bytes());
            out.extend_from_slice(value);
        }
        out
    }
}

/// Locks a new contract in one call.
pub fn lock_contract(
    template_text: &str,
    version: &str,
    token_budget: u32,
    created_at: DateTime<Utc>,
) -> Result<(PromptContract, ContractHash), ContractError> {
    PromptContract::draft(template_text, version, token_budget, created_at).lock()
}

/// Recomputes the digest of a locked contract and compares it with `claimed`.
pub fn verify_contract(contract: &PromptContract, claimed: &ContractHash) -> Result<bool, ContractError> {
    if !contract.is_locked() {
        return Err(ContractError::UnlockedContract);
    }
    let algorithm = HashAlgorithm::from_id(&claimed.algorithm_id)?;
    let recomputed = ContractHash::compute(contract, algorithm);
    Ok(recomputed == *claimed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 11, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn identical_inputs_hash_identically() {
        let (_, a) = lock_contract("Forecast X", "v1", 1000, ts()).unwrap();
        let (_, b) = lock_contract("Forecast X", "v1", 1000, ts()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_hex().len(), 64);
        assert!(a
            .to_hex()
            .chars()
            .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }

    #[test]
    fn trailing_period_changes_digest() {
        let (_, a) = lock_contract("Forecast X", "v1", 1000, ts()).unwrap();
        let (_, b) = lock_contract("Forecast X.", "v1", 1000, ts()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn precondition_errors() {
        assert_eq!(
            lock_contract("", "v1", 1000, ts()).unwrap_err(),
            ContractError::EmptyTemplate
        );
        assert_eq!(
            lock_contract("x", "v1", 0, ts()).unwrap_err(),
            ContractError::NonPositiveBudget
        );
        assert_eq!(
            lock_contract("x", "v1", 1500, ts()).unwrap_err(),
            ContractError::NonStandardBudget(1500)
        );
        let (c, _) = PromptContract::draft("x", "v1", 1500, ts())
            .lock_with(HashAlgorithm::Sha256, true)
            .unwrap();
        assert_eq!(c.token_budget(), 1500);
    }

    #[test]
    fn locked_contract_rejects_mutation() {
        let (mut c, _) = lock_contract("Forecast X", "v1", 1000, ts()).unwrap();
        assert_eq!(c.set_template_text("other"), Err(ContractError::Locked));
        assert_eq!(c.set_version("v2"), Err(ContractError::Locked));
        assert_eq!(c.set_token_budget(500), Err(ContractError::Locked));
        assert_eq!(c.set_horizon_cycles(3), Err(ContractError::Locked));
        assert_eq!(c.template_text(), "Forecast X");

        let mut d = PromptContract::draft("a", "v1", 1000, ts());
        d.set_template_text("b").unwrap();
        assert_eq!(d.template_text(), "b");
    }

    #[test]
    fn verify_round_trip() {
        let (c, h) = lock_contract("Forecast X", "v1", 1000, ts()).unwrap();
        let (_, other) = lock_contract("Forecast Y", "v1", 1000, ts()).unwrap();
        assert!(verify_contract(&c, &h).unwrap());
        assert!(!verify_contract(&c, &other).unwrap());
        let draft = PromptContract::draft("Forecast X", "v1", 1000, ts());
        assert_eq!(
            verify_contract(&draft, &h).unwrap_err(),
            ContractError::UnlockedContract
        );
    }

    #[test]
    fn algorithm_is_part_of_identity() {
        let d = PromptContract::draft("Forecast X", "v1", 1000, ts());
        let (c, a) = d.clone().lock_with(HashAlgorithm::Sha256, false).unwrap();
        let (_, b) = d.lock_with(HashAlgorithm::Sha512_256, false).unwrap();
        assert_ne!(a.digest, b.digest);
        assert!(verify_contract(&c, &b).unwrap());
    }

    #[test]
    fn every_field_feeds_the_digest() {
        let base = PromptContract::draft("T", "v1", 1000, ts());
        let (_, h0) = base.clone().lock().unwrap();
        let mut v = base.clone();
        v.set_version("v2").unwrap();
        let mut b = base.clone();
        b.set_token_budget(2000).unwrap();
        let mut hz = base.clone();
        hz.set_horizon_cycles(466).unwrap();
        let later = PromptContract::draft("T", "v1", 1000, ts() + chrono::Duration::seconds(1));
        for changed in [v, b, hz, later] {
            let (_, h) = changed.lock().unwrap();
            assert_ne!(h, h0);
        }
    }
}
