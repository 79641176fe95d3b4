//! Append-only on-disk contract store: one `<digest>.contract.json` per
//! contract.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::{ContractHash, HashAlgorithm, PromptContract};

pub const CONTRACT_SUFFIX: &str = ".contract.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("contract {0} is not locked")]
    Unlocked(String),
    #[error("contract file {0} already exists with different content")]
    Conflict(PathBuf),
    #[error("contract {0} not found")]
    NotFound(String),
    #[error("contract file {path} failed verification: {reason}")]
    Tampered { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct ContractStore {
    dir: PathBuf,
    algorithm: HashAlgorithm,
}

impl ContractStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::open_with(dir, HashAlgorithm::default())
    }

    /// Opens a store whose file names are digests under `algorithm`.
    pub fn open_with(dir: impl Into<PathBuf>, algorithm: HashAlgorithm) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir, algorithm })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, hash: &ContractHash) -> PathBuf {
        self.dir.join(format!("{}{CONTRACT_SUFFIX}", hash.to_hex()))
    }

    /// Stores a locked contract. Re-storing identical bytes is a no-op.
    pub fn put(&self, contract: &PromptContract) -> Result<ContractHash, StoreError> {
        let hash = ContractHash::compute(contract, self.algorithm);
        if !contract.is_locked() {
            return Err(StoreError::Unlocked(hash.to_hex()));
        }
        let bytes = serde_json::to_vec(contract).expect("contract serializes");
        let path = self.path_for(&hash);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                f.write_all(&bytes).map_err(io_err(&path))?;
                f.sync_all().map_err(io_err(&path))?;
                Ok(hash)
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                let existing = fs::read(&path).map_err(io_err(&path))?;
                if existing == bytes {
                    Ok(hash)
                } else {
                    Err(StoreError::Conflict(path))
                }
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Loads and verifies the contract stored under `hash`.
    pub fn get(&self, hash: &ContractHash) -> Result<PromptContract, StoreError> {
        let path = self.path_for(hash);
        if !path.exists() {
            return Err(StoreError::NotFound(hash.to_hex()));
        }
        verify_file(&path, self.algorithm)
    }

    /// Verifies every contract file in the store, returning the digests that
    /// passed.
    pub fn verify_all(&self) -> Result<Vec<ContractHash>, StoreError> {
        let mut entries: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(io_err(&self.dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.ends_with(CONTRACT_SUFFIX))
            })
            .collect();
        entries.sort();
        entries
            .iter()
            .map(|p| verify_file(p, self.algorithm).map(|c| ContractHash::compute(&c, self.algorithm)))
            .collect()
    }
}

/// Checks that a contract file parses, is locked, re-serializes to exactly the
/// stored bytes, and hashes to the digest in its file name.
pub fn verify_file(path: &Path, algorithm: HashAlgorithm) -> Result<PromptContract, StoreError> {
    let tampered = |reason: String| StoreError::Tampered {
        path: path.to_path_buf(),
        reason,
    };
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| tampered("unreadable file name".into()))?;
    let hex_digest = name
        .strip_suffix(CONTRACT_SUFFIX)
        .ok_or_else(|| tampered("missing contract suffix".into()))?;
    let claimed =
        ContractHash::from_hex(hex_digest, algorithm).ok_or_else(|| tampered("file name is not a digest".into()))?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    let contract: PromptContract = serde_json::from_slice(&bytes).map_err(|e| tampered(format!("parse: {e}")))?;
    if !contract.is_locked() {
        return Err(tampered("contract is not locked".into()));
    }
    let canonical = serde_json::to_vec(&contract).expect("contract serializes");
    if canonical != bytes {
        return Err(tampered("bytes differ from canonical form".into()));
    }
    if ContractHash::compute(&contract, algorithm) != claimed {
        return Err(tampered("digest mismatch".into()));
    }
    Ok(contract)
}
