//! On-disk model store: a flat directory of artifacts keyed by content hash.
//!
//! Each model is kept as `<id>.model.json` (the canonical artifact) next to
//! `<id>.meta.json`. Uploaded datasets are kept verbatim as `<id>.csv`. Every
//! write goes to a temporary file in the same directory and is renamed into
//! place, so readers never observe a partial file.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;
use thiserror::Error;

use cfx_core::format::{model_to_json, parse_model};
use cfx_core::{CfxError, Model};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Invalid(#[from] CfxError),
    #[error("no {kind} with id `{id}`")]
    NotFound { kind: &'static str, id: String },
    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
}

/// Metadata kept next to each stored artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredModel {
    pub id: String,
    #[serde(rename = "type")]
    pub model_type: String,
    pub features: Vec<String>,
    /// Dataset used by default for the `mad` and `std` weight schemes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Seconds since the Unix epoch of the first upload.
    pub created_at: u64,
}

/// Hex SHA-256 of `bytes`; the id of models and datasets alike.
pub fn content_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn is_id(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

#[derive(Clone, Debug)]
pub struct ModelStore {
    dir: PathBuf,
}

impl ModelStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ModelStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str, suffix: &str) -> PathBuf {
        self.dir.join(format!("{id}.{suffix}"))
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        let mut tmp = NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    /// Validates and stores an artifact. The id hashes the canonical form,
    /// so re-uploading the same model (even reformatted) returns the same id
    /// and keeps the original creation time. A given dataset id replaces the
    /// model's dataset link.
    pub fn put_model(&self, artifact: &[u8], dataset: Option<&str>) -> Result<StoredModel, StoreError> {
        let text = std::str::from_utf8(artifact).map_err(|e| CfxError::Format(format!("artifact is not UTF-8: {e}")))?;
        let model = parse_model(text)?;
        if let Some(d) = dataset {
            self.dataset(d)?;
        }
        let canonical = model_to_json(&model);
        let id = content_id(canonical.as_bytes());
        let meta = match self.meta(&id) {
            Ok(mut existing) => {
                if dataset.is_none() || existing.dataset.as_deref() == dataset {
                    return Ok(existing);
                }
                existing.dataset = dataset.map(str::to_owned);
                existing
            }
            Err(StoreError::NotFound { .. }) => {
                self.write_atomic(&self.path(&id, "model.json"), canonical.as_bytes())?;
                StoredModel {
                    id: id.clone(),
                    model_type: model.kind_name().into(),
                    features: model.features().iter().map(|f| f.name.clone()).collect(),
                    dataset: dataset.map(str::to_owned),
                    created_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
                }
            }
            Err(e) => return Err(e),
        };
        let bytes = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
        self.write_atomic(&self.path(&id, "meta.json"), &bytes)?;
        Ok(meta)
    }

    fn read(&self, kind: &'static str, id: &str, suffix: &str) -> Result<Vec<u8>, StoreError> {
        let not_found = || StoreError::NotFound { kind, id: id.to_owned() };
        if !is_id(id) {
            return Err(not_found());
        }
        fs::read(self.path(id, suffix)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => not_found(),
            _ => StoreError::Io(e),
        })
    }

    pub fn meta(&self, id: &str) -> Result<StoredModel, StoreError> {
        let bytes = self.read("model", id, "meta.json")?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))
    }

    /// The canonical artifact text.
    pub fn artifact(&self, id: &str) -> Result<String, StoreError> {
        let bytes = self.read("model", id, "model.json")?;
        String::from_utf8(bytes).map_err(|e| StoreError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))
    }

    pub fn model(&self, id: &str) -> Result<(Model, StoredModel), StoreError> {
        let meta = self.meta(id)?;
        Ok((parse_model(&self.artifact(id)?)?, meta))
    }

    /// All stored models, oldest first.
    pub fn list(&self) -> Result<Vec<StoredModel>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".meta.json")) else { continue };
            match self.meta(id) {
                Ok(meta) => out.push(meta),
                Err(StoreError::NotFound { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(out)
    }

    /// Stores a CSV dataset verbatim after checking it has a header row.
    pub fn put_dataset(&self, csv_bytes: &[u8]) -> Result<String, StoreError> {
        let mut reader = csv::Reader::from_reader(csv_bytes);
        let headers = reader.headers().map_err(|e| CfxError::Dataset(e.to_string()))?;
        if headers.iter().all(str::is_empty) {
            return Err(CfxError::Dataset("missing header row".into()).into());
        }
        let id = content_id(csv_bytes);
        let path = self.path(&id, "csv");
        if !path.exists() {
            self.write_atomic(&path, csv_bytes)?;
        }
        Ok(id)
    }

    pub fn dataset(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        self.read("dataset", id, "csv")
    }
}
