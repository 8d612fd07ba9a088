//! Weight checkpoints: one binary tensor file per parameter plus `manifest.json`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Network, NetworkConfig};
use crate::error::{CanmError, Result};
use crate::fsutil::OutputSet;
use crate::params::ParamStore;
use crate::tensor::{decode, write_tensor_to, DType};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: NetworkConfig,
    pub parameters: Vec<ManifestEntry>,
}

fn file_name(param: &str) -> String {
    format!("{param}.canm")
}

impl Network {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            config_hash: self.config.hash(),
            config: self.config.clone(),
            parameters: self
                .params
                .iter()
                .map(|(name, t)| ManifestEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    file: file_name(name),
                })
                .collect(),
        }
    }

    /// Writes every parameter at double precision, then the manifest.
    pub fn save_weights(&self, dir: &Path) -> Result<()> {
        let mut out = OutputSet::new();
        for (name, t) in self.params.iter() {
            let mut buf = Vec::new();
            write_tensor_to(&mut buf, t, DType::F64).map_err(|e| CanmError::io("encoding tensor", e))?;
            out.add(file_name(name), buf);
        }
        out.add(MANIFEST, serde_json::to_vec_pretty(&self.manifest())?);
        out.commit(dir)
    }

    /// Replaces the parameters with those stored in `dir`. On any error the
    /// network is left untouched.
    pub fn load_weights(&mut self, dir: &Path) -> Result<()> {
        let text = fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| CanmError::io(format!("reading {}", dir.join(MANIFEST).display()), e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let expected: BTreeSet<&str> = self.params.names().collect();
        let found: BTreeSet<&str> = manifest.parameters.iter().map(|e| e.name.as_str()).collect();
        if let Some(name) = expected.difference(&found).next() {
            return Err(CanmError::Checkpoint {
                name: name.to_string(),
                reason: "missing from checkpoint".into(),
            });
        }
        if let Some(name) = found.difference(&expected).next() {
            return Err(CanmError::Checkpoint {
                name: name.to_string(),
                reason: "not a parameter of this network".into(),
            });
        }
        if manifest.config_hash != self.config.hash() || manifest.config != self.config {
            return Err(CanmError::Checkpoint {
                name: MANIFEST.into(),
                reason: format!(
                    "config hash {} does not match network config {}",
                    manifest.config_hash,
                    self.config.hash()
                ),
            });
        }
        let mut store = ParamStore::new();
        for entry in &manifest.parameters {
            let fail = |reason: String| CanmError::Checkpoint {
                name: entry.name.clone(),
                reason,
            };
            let want = self.params.get(&entry.name).expect("name checked above").shape();
            if entry.shape != want {
                return Err(fail(format!("manifest shape {:?}, network expects {want:?}", entry.shape)));
            }
            let bytes = fs::read(dir.join(&entry.file)).map_err(|e| fail(e.to_string()))?;
            let t = decode(&bytes).map_err(|e| fail(e.to_string()))?;
            if t.shape() != want {
                return Err(fail(format!("file holds shape {:?}, network expects {want:?}", t.shape())));
            }
            store.insert(&entry.name, t)?;
        }
        // keep declaration order
        let mut ordered = ParamStore::new();
        for name in self.params.names() {
            ordered.insert(name, store.get(name).expect("all names loaded").clone())?;
        }
        self.params = ordered;
        Ok(())
    }

    /// Builds a network from a checkpoint directory using its own manifest config.
    pub fn open(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| CanmError::io(format!("reading {}", dir.join(MANIFEST).display()), e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut net = Network::build(&manifest.config, 0)?;
        net.load_weights(dir)?;
        Ok(net)
    }
}
