//! Monte-Carlo heating tables cached on disk under a content hash of every
//! input they depend on.

use crate::error::{CliError, Result};
use nftrap_core::constants::AtomSpecies;
use nftrap_core::heating::{HeatingTable, MonteCarloSettings};
use nftrap_core::morse::{MorsePotential, RepulsivePotential};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Bumped whenever the estimator changes in a way that alters table values.
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct CacheKey<'a> {
    version: u32,
    species: &'a AtomSpecies,
    trap: &'a MorsePotential,
    excited: &'a RepulsivePotential,
    settings: &'a MonteCarloSettings,
}

pub fn heating_key(
    species: &AtomSpecies,
    trap: &MorsePotential,
    excited: &RepulsivePotential,
    settings: &MonteCarloSettings,
) -> String {
    let key = CacheKey { version: FORMAT_VERSION, species, trap, excited, settings };
    let bytes = serde_json::to_vec(&key).expect("cache key serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct HeatingCache {
    dir: PathBuf,
}

impl HeatingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("heating-{key}.json"))
    }

    /// A missing or unreadable entry is a miss; the table is then recomputed.
    pub fn load(&self, key: &str) -> Option<HeatingTable> {
        let path = self.path_for(key);
        let text = std::fs::read_to_string(&path).ok()?;
        match serde_json::from_str(&text) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store(&self, key: &str, table: &HeatingTable) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let path = self.path_for(key);
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string(table).expect("heating table serializes");
        std::fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))
    }

    pub fn get_or_compute<F>(&self, key: &str, compute: F) -> Result<HeatingTable>
    where
        F: FnOnce() -> Result<HeatingTable>,
    {
        if let Some(t) = self.load(key) {
            log::info!("heating table from cache {}", self.path_for(key).display());
            return Ok(t);
        }
        let table = compute()?;
        self.store(key, &table)?;
        Ok(table)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
