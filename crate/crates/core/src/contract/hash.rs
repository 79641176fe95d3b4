use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256, Sha512_256};

use super::{ContractError, PromptContract};

/// Digest algorithms available for contract hashing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HashAlgorithm {
    #[default]
    #[serde(rename = "sha256")]
    Sha256,
    #[serde(rename = "sha512-256")]
    Sha512_256,
}

impl HashAlgorithm {
    pub fn id(self) -> &'static str {
        match self {
            HashAlgorithm::Sha256 => "sha256",
            HashAlgorithm::Sha512_256 => "sha512-256",
        }
    }

    pub fn from_id(id: &str) -> Result<Self, ContractError> {
        match id {
            "sha256" => Ok(HashAlgorithm::Sha256),
            "sha512-256" => Ok(HashAlgorithm::Sha512_256),
            other => Err(ContractError::UnknownAlgorithm(other.to_string())),
        }
    }

    pub fn digest(self, bytes: &[u8]) -> [u8; 32] {
        match self {
            HashAlgorithm::Sha256 => Sha256::digest(bytes).into(),
            HashAlgorithm::Sha512_256 => Sha512_256::digest(bytes).into(),
        }
    }
}

/// A 256-bit contract digest tagged with the algorithm that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContractHash {
    #[serde(serialize_with = "ser_hex", deserialize_with = "de_hex")]
    pub digest: [u8; 32],
    pub algorithm_id: String,
}

impl ContractHash {
    pub fn compute(contract: &PromptContract, algorithm: HashAlgorithm) -> Self {
        Self {
            digest: algorithm.digest(&contract.canonical_bytes()),
            algorithm_id: algorithm.id().to_string(),
        }
    }

    /// 64 lowercase hex characters.
    pub fn to_hex(&self) -> String {
        hex::encode(self.digest)
    }

    pub fn from_hex(hex_digest: &str, algorithm: HashAlgorithm) -> Option<Self> {
        let mut digest = [0u8; 32];
        hex::decode_to_slice(hex_digest, &mut digest).ok()?;
        if hex_digest.chars().any(|c| c.is_ascii_uppercase()) {
            return None;
        }
        Some(Self {
            digest,
            algorithm_id: algorithm.id().to_string(),
        })
    }
}

impl fmt::Display for ContractHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

fn ser_hex<S: Serializer>(digest: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(digest))
}

fn de_hex<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
    let text = String::deserialize(d)?;
    let mut out = [0u8; 32];
    hex::decode_to_slice(&text, &mut out).map_err(serde::de::Error::custom)?;
    Ok(out)
}
