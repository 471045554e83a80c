//! Artifact tree with a content-hashed manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fblab_core::lattice::gfn;
use fblab_core::GridFunction;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_SCHEMA: &str = "fblab.manifest/1";
pub const SUMMARY: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
    /// Module operation that produced the content.
    pub op: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub task: String,
    pub seed: u64,
    pub config_sha256: String,
    pub artifacts: Vec<Entry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Option<Manifest> {
        let bytes = fs::read(dir.join(MANIFEST)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn hash_of(&self, path: &str) -> Option<&str> {
        self.artifacts
            .iter()
            .find(|e| e.path == path)
            .map(|e| e.sha256.as_str())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

pub struct ArtifactWriter {
    root: PathBuf,
    entries: BTreeMap<String, Entry>,
}

impl ArtifactWriter {
    pub fn create(root: &Path) -> Result<ArtifactWriter> {
        fs::create_dir_all(root)?;
        Ok(ArtifactWriter {
            root: root.to_path_buf(),
            entries: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn bytes(&mut self, rel: &str, op: &str, data: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, data)?;
        self.entries.insert(
            rel.to_string(),
            Entry {
                path: rel.to_string(),
                sha256: sha256_hex(data),
                bytes: data.len(),
                op: op.to_string(),
            },
        );
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, rel: &str, op: &str, value: &T) -> Result<()> {
        self.bytes(rel, op, &json_bytes(value)?)
    }

    pub fn csv<R: Serialize>(&mut self, rel: &str, op: &str, rows: &[R]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let data = w.into_inner().map_err(|e| e.into_error())?;
        self.bytes(rel, op, &data)
    }

    /// Runs a writer-based emitter into memory and records the result.
    pub fn emit(
        &mut self,
        rel: &str,
        op: &'static str,
        f: impl FnOnce(&mut Vec<u8>) -> fblab_core::Result<()>,
    ) -> Result<()> {
        let mut data = Vec::new();
        f(&mut data).map_err(crate::error::CliError::core(op))?;
        self.bytes(rel, op, &data)
    }

    /// Field values and their metadata sidecar.
    pub fn gfn(&mut self, rel: &str, op: &str, u: &GridFunction) -> Result<()> {
        self.bytes(rel, op, &gfn::encode(u))?;
        let side = format!("{rel}.json");
        self.json(&side, op, &gfn::GfnMeta::of(u))
    }

    pub fn finish(self, task: &str, seed: u64, config_sha256: String) -> Result<Manifest> {
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA.into(),
            task: task.into(),
            seed,
            config_sha256,
            artifacts: self.entries.into_values().collect(),
        };
        fs::write(self.root.join(MANIFEST), json_bytes(&manifest)?)?;
        Ok(manifest)
    }
}
