//! Measurement maps keyed by a hash of the setup and lattice.
//!
//! Maps live in memory for the lifetime of the process and, when a directory
//! is configured, on disk as `<key>.csv` with a `<key>.json` description.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sg_tomo::{measurement_map, pauli_triple, simulate, Grid64, Map64, Setup64};

use crate::error::{CliError, Result};

/// Bumped whenever the on-disk map format changes.
const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub format: u32,
    pub setup: Setup64,
    pub grid: Grid64,
}

pub fn cache_key(setup: &Setup64, grid: &Grid64) -> String {
    let entry = CacheEntry { format: FORMAT, setup: *setup, grid: *grid };
    let digest = Sha256::digest(serde_json::to_vec(&entry).expect("entry serializes"));
    hex::encode(&digest[..16])
}

#[derive(Debug, Default)]
pub struct MapCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Arc<Map64>>>,
}

impl MapCache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir, memory: Mutex::default() }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Cached map for `(setup, grid)`, computing and storing it on a miss.
    pub fn get(&self, setup: &Setup64, grid: &Grid64) -> Result<Arc<Map64>> {
        let key = cache_key(setup, grid);
        if let Some(m) = self.memory.lock().expect("cache lock").get(&key) {
            return Ok(m.clone());
        }
        let map = match self.load(&key, setup, grid)? {
            Some(m) => m,
            None => {
                let field = simulate(grid, setup).map_err(CliError::core("evolve"))?;
                let m = measurement_map(&field, &pauli_triple()).map_err(CliError::core("measure"))?;
                self.store(&key, setup, grid, &m)?;
                m
            }
        };
        let map = Arc::new(map);
        self.memory.lock().expect("cache lock").insert(key, map.clone());
        Ok(map)
    }

    fn load(&self, key: &str, setup: &Setup64, grid: &Grid64) -> Result<Option<Map64>> {
        let Some(dir) = &self.dir else { return Ok(None) };
        let path = dir.join(format!("{key}.csv"));
        if !path.exists() {
            return Ok(None);
        }
        let reader = BufReader::new(fs::File::open(&path)?);
        match Map64::read_csv(reader, grid, setup.t_detect) {
            Ok(m) => Ok(Some(m)),
            Err(e) => {
                log::warn!("ignoring unreadable cache file {}: {e}", path.display());
                Ok(None)
            }
        }
    }

    fn store(&self, key: &str, setup: &Setup64, grid: &Grid64, map: &Map64) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!("{key}.csv.tmp"));
        map.write_csv(BufWriter::new(fs::File::create(&tmp)?)).map_err(CliError::core("cache"))?;
        fs::rename(&tmp, dir.join(format!("{key}.csv")))?;
        let entry = CacheEntry { format: FORMAT, setup: *setup, grid: *grid };
        fs::write(dir.join(format!("{key}.json")), serde_json::to_string_pretty(&entry)?)?;
        Ok(())
    }
}

/// Stored entries in `dir`, sorted by key.
pub fn list(dir: &Path) -> Result<Vec<(String, CacheEntry)>> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for item in fs::read_dir(dir)? {
        let path = item?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let key = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            if dir.join(format!("{key}.csv")).exists() {
                out.push((key, serde_json::from_str(&fs::read_to_string(&path)?)?));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Remove every cache file in `dir`; returns the number of maps removed.
pub fn clear(dir: &Path) -> Result<usize> {
    let entries = list(dir)?;
    for (key, _) in &entries {
        fs::remove_file(dir.join(format!("{key}.csv")))?;
        fs::remove_file(dir.join(format!("{key}.json")))?;
    }
    Ok(entries.len())
}
