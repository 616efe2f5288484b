//! On-disk cache of computed policies.
//!
//! One JSON file per parameter set, named by the SHA-256 of a canonical
//! rendering of every parameter (floats by their bit patterns). Entries carry
//! a checksum of the payload and are written to a temporary file and renamed
//! into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::policy::{Algorithm, Mode, PolicyTable, TieBreak};
use crate::runtime::RemainingTimeTable;

pub const SCHEMA_VERSION: u32 = 1;
pub const CACHE_ENV: &str = "ONEMAX_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = "cache";

/// Everything a cached result depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheParams {
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub n: usize,
    pub p_min: f64,
    pub tail_epsilon: f64,
    pub grid_points: usize,
    pub refine_tolerance: f64,
    pub tie_break: TieBreak,
    /// Static strength or rate; `None` for the optimized static rate and
    /// for non-static modes.
    pub static_value: Option<f64>,
}

impl CacheParams {
    fn canonical(&self) -> String {
        format!(
            "v{SCHEMA_VERSION}|{}|{}|n={}|p_min={:016x}|tail={:016x}|grid={}|tol={:016x}|tie={:?}|static={}",
            self.algorithm.as_str(),
            self.mode.as_str(),
            self.n,
            self.p_min.to_bits(),
            self.tail_epsilon.to_bits(),
            self.grid_points,
            self.refine_tolerance.to_bits(),
            self.tie_break,
            self.static_value.map_or("none".to_string(), |v| format!("{:016x}", v.to_bits())),
        )
    }

    pub fn key(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachePayload {
    pub policy: PolicyTable,
    pub times: RemainingTimeTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub schema_version: u32,
    pub params: CacheParams,
    pub payload: CachePayload,
    pub checksum: String,
}

fn checksum(payload: &CachePayload) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(payload)?)))
}

#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Flag value if given, else `$ONEMAX_CACHE_DIR`, else `./cache`.
    pub fn resolve(flag: Option<&Path>) -> Self {
        match flag {
            Some(dir) => Self::new(dir),
            None => match std::env::var_os(CACHE_ENV) {
                Some(dir) if !dir.is_empty() => Self::new(dir),
                _ => Self::new(DEFAULT_CACHE_DIR),
            },
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, params: &CacheParams) -> PathBuf {
        self.dir.join(format!("{}.json", params.key()))
    }

    /// Cached payload for `params`, if present. Corrupt or mismatched
    /// entries are errors, never silently recomputed.
    pub fn load(&self, params: &CacheParams) -> Result<Option<CachePayload>> {
        let path = self.path(params);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let entry: CacheEntry = serde_json::from_str(&text)
            .map_err(|e| Error::Cache(format!("{}: unreadable entry: {e}", path.display())))?;
        if entry.schema_version != SCHEMA_VERSION {
            return Err(Error::Cache(format!(
                "{}: schema version {} (reader expects {SCHEMA_VERSION})",
                path.display(),
                entry.schema_version
            )));
        }
        if entry.params != *params {
            return Err(Error::Cache(format!("{}: parameters do not match the key", path.display())));
        }
        if checksum(&entry.payload)? != entry.checksum {
            return Err(Error::Cache(format!("{}: checksum mismatch", path.display())));
        }
        Ok(Some(entry.payload))
    }

    pub fn store(&self, params: &CacheParams, payload: &CachePayload) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let entry = CacheEntry {
            schema_version: SCHEMA_VERSION,
            params: params.clone(),
            payload: payload.clone(),
            checksum: checksum(payload)?,
        };
        let path = self.path(params);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer(&mut tmp, &entry)?;
        tmp.flush()?;
        tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
        Ok(path)
    }
}
