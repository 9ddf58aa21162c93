//! Content-addressed stage cache.
//!
//! Every stage output is stored under `out_dir/cache/<stage>/<key>.bin`,
//! where the key hashes the stage inputs and the stage-relevant config. A
//! rerun with unchanged inputs and config hits the cache and executes
//! nothing.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use dorf_core::error::Result;

use crate::config::fnv1a64;

pub struct Cache {
    root: PathBuf,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl Cache {
    pub fn new(out_dir: &std::path::Path) -> Result<Cache> {
        let root = out_dir.join("cache");
        std::fs::create_dir_all(&root)?;
        Ok(Cache {
            root,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn path_for(&self, stage: &str, key: u64) -> PathBuf {
        self.root.join(stage).join(format!("{key:016x}.bin"))
    }

    /// Returns the cached bytes for `(stage, key)`, computing and storing
    /// them on a miss.
    pub fn get_or_compute(
        &self,
        stage: &str,
        key: u64,
        compute: impl FnOnce() -> Result<Vec<u8>>,
    ) -> Result<Vec<u8>> {
        let path = self.path_for(stage, key);
        if path.is_file() {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(std::fs::read(&path)?);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let bytes = compute()?;
        std::fs::create_dir_all(path.parent().unwrap())?;
        // Write via a unique temp file so concurrent workers never observe a
        // partially written entry.
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, &path)?;
        Ok(bytes)
    }
}

/// Key combining an input content hash with a stage parameter string.
pub fn stage_key(input_hash: u64, params: &str) -> u64 {
    let mut bytes = input_hash.to_le_bytes().to_vec();
    bytes.extend_from_slice(params.as_bytes());
    fnv1a64(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_hits_skip_recompute() {
        let dir = std::env::temp_dir().join(format!("dorf_cache_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cache = Cache::new(&dir).unwrap();
        let mut calls = 0;
        let key = stage_key(1, "params");
        let a = cache
            .get_or_compute("s", key, || {
                calls += 1;
                Ok(vec![1, 2, 3])
            })
            .unwrap();
        let b = cache
            .get_or_compute("s", key, || {
                calls += 1;
                Ok(vec![9, 9, 9])
            })
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(calls, 1);
        assert_eq!(cache.hits(), 1);
        assert_eq!(cache.misses(), 1);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn different_params_use_different_entries() {
        assert_ne!(stage_key(1, "a"), stage_key(1, "b"));
        assert_ne!(stage_key(1, "a"), stage_key(2, "a"));
    }
}
