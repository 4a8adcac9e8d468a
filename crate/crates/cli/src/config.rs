//! Run configuration: library defaults, overridden by an optional JSON file,
//! then by flags. The resolved result is written next to every output.

use std::path::Path;

use anyhow::{Context, Result};
use nlos_core::dataset::toy::ToyFamily;
use nlos_core::metrics::Thresholds;
use nlos_core::remapper::{CompressorArch, TrainConfig, VaeArch};
use nlos_core::scene::RenderParams;
use serde::{Deserialize, Serialize};

/// Optional replacements for a scene's histogram settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOverrides {
    pub bin_width: Option<f64>,
    pub max_path_length: Option<f64>,
    pub min_total_intensity: Option<f64>,
}

impl RenderOverrides {
    pub fn apply(&self, p: &mut RenderParams) {
        if let Some(v) = self.bin_width {
            p.bin_width = v;
        }
        if let Some(v) = self.max_path_length {
            p.max_path_length = v;
        }
        if let Some(v) = self.min_total_intensity {
            p.min_total_intensity = v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub family: ToyFamily,
    pub train_fraction: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            family: ToyFamily::default(),
            train_fraction: 500.0 / 600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSection {
    pub arch: VaeArch,
    pub train: TrainConfig,
}

impl Default for VaeSection {
    fn default() -> Self {
        VaeSection {
            arch: VaeArch::default(),
            train: TrainConfig::desk_vae(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressorSection {
    pub arch: CompressorArch,
    pub train: TrainConfig,
}

impl Default for CompressorSection {
    fn default() -> Self {
        CompressorSection {
            arch: CompressorArch::default(),
            train: TrainConfig::desk_compressor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// The only seed. Copied over every per-stage seed when resolved.
    pub seed: u64,
    pub render: RenderOverrides,
    pub dataset: DatasetSection,
    pub vae: VaeSection,
    pub compressor: CompressorSection,
    pub eval: Thresholds,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: ToyFamily::default().seed,
            render: RenderOverrides::default(),
            dataset: DatasetSection::default(),
            vae: VaeSection::default(),
            compressor: CompressorSection::default(),
            eval: Thresholds::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config = serde_json::from_str(&text).map_err(nlos_core::Error::from)?;
        Ok(config)
    }

    /// Defaults, then the file, then `--seed`; per-stage seeds follow the
    /// run seed.
    pub fn resolve(file: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
        let mut config = match file {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            config.seed = s;
        }
        config.dataset.family.seed = config.seed;
        config.vae.train.seed = config.seed;
        config.compressor.train.seed = config.seed;
        Ok(config)
    }
}
