use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::objset::ObjSet;
use crate::store::DatasetStore;
use crate::trace::ObjectId;

const SELECTION_MAGIC: &[u8; 8] = b"SPNSELCT";
const SELECTION_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache persistence failed for {path}: {source}")]
    Persist { path: PathBuf, source: io::Error },
}

/// Result of a cache lookup or computation.
#[derive(Debug, Clone)]
pub struct CacheOutcome {
    pub set: Arc<ObjSet>,
    pub from_cache: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub computes: u64,
    pub memory_hits: u64,
    pub disk_hits: u64,
}

type Slot = Arc<Mutex<Option<Arc<ObjSet>>>>;

/// Selection cache keyed by dataset and canonical query text.
///
/// Concurrent misses on one key coalesce: the first caller computes while
/// the others wait on that key's slot. With a directory configured, every
/// computed selection is also written to disk and read back on a later miss.
#[derive(Debug, Default)]
pub struct QueryCache {
    dir: Option<PathBuf>,
    slots: Mutex<HashMap<(String, String), Slot>>,
    computes: AtomicU64,
    memory_hits: AtomicU64,
    disk_hits: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl QueryCache {
    pub fn in_memory() -> Self {
        QueryCache::default()
    }

    pub fn persistent(dir: impl Into<PathBuf>) -> Self {
        QueryCache {
            dir: Some(dir.into()),
            ..QueryCache::default()
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            computes: self.computes.load(Ordering::SeqCst),
            memory_hits: self.memory_hits.load(Ordering::SeqCst),
            disk_hits: self.disk_hits.load(Ordering::SeqCst),
        }
    }

    /// Number of entries held in memory.
    pub fn len(&self) -> usize {
        lock(&self.slots)
            .values()
            .filter(|s| lock(s).is_some())
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute<F>(
        &self,
        store: &DatasetStore,
        key: &str,
        compute: F,
    ) -> Result<CacheOutcome, CacheError>
    where
        F: FnOnce() -> Result<ObjSet, CacheError>,
    {
        let slot = {
            let mut slots = lock(&self.slots);
            slots
                .entry((dataset_key(store), key.to_string()))
                .or_default()
                .clone()
        };
        let mut value = lock(&slot);
        if let Some(set) = value.as_ref() {
            self.memory_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(CacheOutcome {
                set: set.clone(),
                from_cache: true,
            });
        }
        if let Some(set) = self.read_disk(store, key) {
            self.disk_hits.fetch_add(1, Ordering::SeqCst);
            let set = Arc::new(set);
            *value = Some(set.clone());
            return Ok(CacheOutcome {
                set,
                from_cache: true,
            });
        }
        let set = Arc::new(compute()?);
        self.computes.fetch_add(1, Ordering::SeqCst);
        *value = Some(set.clone());
        drop(value);
        self.write_disk(store, key, &set)?;
        Ok(CacheOutcome {
            set,
            from_cache: false,
        })
    }

    fn entry_path(&self, store: &DatasetStore, key: &str) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let digest = hex::encode(Sha256::digest(key.as_bytes()));
        Some(dir.join(dataset_key(store)).join(format!("{digest}.sel")))
    }

    /// Unreadable or mismatching files count as misses.
    fn read_disk(&self, store: &DatasetStore, key: &str) -> Option<ObjSet> {
        let path = self.entry_path(store, key)?;
        let mut bytes = Vec::new();
        fs::File::open(path).ok()?.read_to_end(&mut bytes).ok()?;
        let ids = decode_selection(&bytes, key)?;
        ObjSet::from_ids(store, ids)
    }

    fn write_disk(&self, store: &DatasetStore, key: &str, set: &ObjSet) -> Result<(), CacheError> {
        let Some(path) = self.entry_path(store, key) else {
            return Ok(());
        };
        let fail = |source| CacheError::Persist {
            path: path.clone(),
            source,
        };
        let parent = path.parent().expect("entry path has a parent");
        fs::create_dir_all(parent).map_err(fail)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(fail)?;
        tmp.write_all(&encode_selection(key, &set.to_ids(store)))
            .map_err(fail)?;
        tmp.persist(&path).map_err(|e| fail(e.error))?;
        Ok(())
    }
}

fn dataset_key(store: &DatasetStore) -> String {
    let fp = store.fingerprint();
    format!("{}-{}", store.name(), &fp[..fp.len().min(16)])
}

fn encode_selection(key: &str, ids: &[ObjectId]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + key.len() + ids.len() * 8);
    out.extend_from_slice(SELECTION_MAGIC);
    out.extend_from_slice(&SELECTION_VERSION.to_le_bytes());
    out.extend_from_slice(&(key.len() as u32).to_le_bytes());
    out.extend_from_slice(key.as_bytes());
    out.extend_from_slice(&(ids.len() as u64).to_le_bytes());
    for id in ids {
        out.extend_from_slice(&id.get().to_le_bytes());
    }
    out
}

fn decode_selection(bytes: &[u8], key: &str) -> Option<Vec<ObjectId>> {
    let rest = bytes.strip_prefix(SELECTION_MAGIC)?;
    let (version, rest) = rest.split_first_chunk::<4>()?;
    if u32::from_le_bytes(*version) != SELECTION_VERSION {
        return None;
    }
    let (len, rest) = rest.split_first_chunk::<4>()?;
    let len = u32::from_le_bytes(*len) as usize;
    if rest.get(..len)? != key.as_bytes() {
        return None;
    }
    let (count, rest) = rest[len..].split_first_chunk::<8>()?;
    let count = u64::from_le_bytes(*count) as usize;
    if rest.len() != count.checked_mul(8)? {
        return None;
    }
    Some(
        rest.chunks_exact(8)
            .map(|c| ObjectId(u64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect(),
    )
}
