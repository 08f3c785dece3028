use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use heapscope_core::store::{ingest_bytes, persist, validate_name, DatasetManifest, DatasetStore};

use crate::error::ApiError;

pub struct Dataset {
    pub store: DatasetStore,
    pub manifest: DatasetManifest,
}

/// Datasets found under a data directory, loaded once.
pub struct Registry {
    data_dir: PathBuf,
    datasets: BTreeMap<String, Arc<Dataset>>,
}

impl Registry {
    /// A missing directory is an empty registry. Subdirectories that fail
    /// to load are skipped with a warning.
    pub fn open(data_dir: impl Into<PathBuf>) -> io::Result<Registry> {
        let data_dir = data_dir.into();
        let mut datasets = BTreeMap::new();
        let entries = match fs::read_dir(&data_dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Ok(Registry { data_dir, datasets })
            }
            Err(e) => return Err(e),
        };
        for entry in entries {
            let path = entry?.path();
            if !path.join(persist::MANIFEST_FILE).is_file() {
                continue;
            }
            match persist::load(&path) {
                Ok((store, manifest)) => {
                    datasets.insert(manifest.name.clone(), Arc::new(Dataset { store, manifest }));
                }
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping dataset"),
            }
        }
        Ok(Registry { data_dir, datasets })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn get(&self, name: &str) -> Result<Arc<Dataset>, ApiError> {
        self.datasets
            .get(name)
            .cloned()
            .ok_or_else(|| ApiError::unknown_dataset(name))
    }

    /// Sorted by name.
    pub fn manifests(&self) -> Vec<DatasetManifest> {
        self.datasets.values().map(|d| d.manifest.clone()).collect()
    }
}

/// Ingests a trace file into `<data_dir>/<name>`. Existing datasets are
/// never replaced.
pub fn ingest_trace_file(
    trace: &Path,
    name: &str,
    data_dir: &Path,
) -> Result<DatasetManifest, ApiError> {
    validate_name(name)?;
    let dir = data_dir.join(name);
    if dir.exists() {
        return Err(ApiError::bad_request(format!(
            "dataset '{name}' already exists"
        )));
    }
    let bytes = fs::read(trace)
        .map_err(|e| ApiError::bad_request(format!("cannot read {}: {e}", trace.display())))?;
    let store = ingest_bytes(bytes.as_slice(), name)?;
    let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    Ok(persist::save(&store, &bytes, &dir, &now)?)
}
