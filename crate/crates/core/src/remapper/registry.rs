use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Vae;
use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::formats::{read_file, write_file};

/// Posterior means of the training targets, keyed by scene id. Stored as
/// JSON; values are `f64` so a reload is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRegistry {
    pub latent_dim: usize,
    pub entries: BTreeMap<String, Vec<f64>>,
}

impl LatentRegistry {
    pub fn new(latent_dim: usize) -> Self {
        LatentRegistry {
            latent_dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, scene_id: &str) -> Option<&Vec<f64>> {
        self.entries.get(scene_id)
    }

    /// Adds an entry; a scene id may repeat only with an identical latent.
    pub fn insert(&mut self, scene_id: &str, latent: Vec<f64>) -> Result<()> {
        if latent.len() != self.latent_dim || latent.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                format!("latent for {scene_id}"),
                format!("expected {} finite values", self.latent_dim),
            ));
        }
        match self.entries.get(scene_id) {
            Some(old) if *old != latent => Err(Error::invalid(
                "scene_id",
                format!("{scene_id} registered twice with different targets"),
            )),
            _ => {
                self.entries.insert(scene_id.to_owned(), latent);
                Ok(())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (id, z) in &self.entries {
            if z.len() != self.latent_dim || z.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    format!("latent for {id}"),
                    format!("expected {} finite values", self.latent_dim),
                ));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &serde_json::to_vec_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reg: LatentRegistry = serde_json::from_slice(&read_file(path)?)?;
        reg.validate()?;
        Ok(reg)
    }
}

/// `registry[scene_id] = encode(target).mu` for every record.
pub fn build_latent_registry(vae: &Vae, records: &[DatasetRecord]) -> Result<LatentRegistry> {
    let mut reg = LatentRegistry::new(vae.latent_dim);
    for r in records {
        let out = vae.encode(&vae.target_tensor(&r.target)?)?;
        reg.insert(&r.scene_id, out.mu)?;
    }
    Ok(reg)
}
