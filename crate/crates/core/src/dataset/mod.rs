//! From rendered frames to network-ready records.
//!
//! A frame is cut into left and right halves and stacked channel-wise as
//! right-depth, right-intensity, left-depth, left-intensity. Each channel is
//! min–max normalized on its own (per sample), and the left channels get
//! Gaussian noise. Records pair that input with the hidden-scene depth map.

mod files;
pub mod toy;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::renderer::{render_scene, render_target_depth, DetectionMaps, NlosDepthMap, TargetWindow};
use crate::scene::{place_object, NlosObject, Placement, SceneConfig};

pub use files::{
    decode_record, encode_record, read_dataset, record_digest, sha256_hex, write_dataset,
    DatasetManifest, LoadedDataset, ManifestCounts, ManifestEntry, Split, MANIFEST_NAME,
    RECORD_MAGIC,
};

/// Channel order of [`StackedInput::planes`].
pub const CHANNEL_NAMES: [&str; 4] = ["right_depth", "right_intensity", "left_depth", "left_intensity"];

/// Default noise on the left channels, normalized units.
pub const DEFAULT_NOISE_SIGMA: f64 = 0.01;

/// Affine map from normalized to raw values: `raw = offset + scale · value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub offset: f64,
    pub scale: f64,
}

impl ChannelStats {
    pub const IDENTITY: ChannelStats = ChannelStats {
        offset: 0.0,
        scale: 1.0,
    };
}

/// Four `height × width` planes (each half of the frame is `width` wide).
#[derive(Debug, Clone, PartialEq)]
pub struct StackedInput {
    pub width: usize,
    pub height: usize,
    pub planes: [Vec<f64>; 4],
    pub norm_stats: [ChannelStats; 4],
}

impl StackedInput {
    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    /// Channel-major `[4, height, width]` values.
    pub fn to_tensor(&self) -> Vec<f64> {
        self.planes.concat()
    }

    /// Rounds every sample to `f32`, the precision records are stored at.
    pub fn quantized(mut self) -> Self {
        for plane in &mut self.planes {
            for v in plane.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
        self
    }
}

/// Splits the frame down the middle and stacks right halves before left.
pub fn split_and_stack(maps: &DetectionMaps) -> Result<StackedInput> {
    if maps.width % 2 != 0 {
        return Err(Error::contract(format!("frame width {} is odd", maps.width)));
    }
    let half = maps.width / 2;
    let cut = |plane: &[f64], from: usize| -> Vec<f64> {
        (0..maps.height)
            .flat_map(|i| plane[i * maps.width + from..i * maps.width + from + half].iter().copied())
            .collect()
    };
    Ok(StackedInput {
        width: half,
        height: maps.height,
        planes: [
            cut(&maps.depth, half),
            cut(&maps.intensity, half),
            cut(&maps.depth, 0),
            cut(&maps.intensity, 0),
        ],
        norm_stats: [ChannelStats::IDENTITY; 4],
    })
}

/// Inverse of [`split_and_stack`] on the (raw) depth and intensity planes.
pub fn unstack(input: &StackedInput) -> (Vec<f64>, Vec<f64>) {
    let w = input.width;
    let join = |left: &[f64], right: &[f64]| -> Vec<f64> {
        (0..input.height)
            .flat_map(|i| {
                left[i * w..(i + 1) * w]
                    .iter()
                    .chain(&right[i * w..(i + 1) * w])
                    .copied()
            })
            .collect()
    };
    let [rd, ri, ld, li] = &input.planes;
    (join(ld, rd), join(li, ri))
}

/// Min–max scales each channel to `[0, 1]`. A constant channel becomes all
/// zeros with scale 0. The recorded stats always map back to the raw values,
/// also when the input was already normalized.
pub fn normalize_channels(input: &StackedInput) -> StackedInput {
    let mut out = input.clone();
    for (plane, stats) in out.planes.iter_mut().zip(out.norm_stats.iter_mut()) {
        let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if plane.is_empty() || !(range > 0.0) {
            let value = plane.first().copied().unwrap_or(0.0);
            plane.fill(0.0);
            *stats = ChannelStats {
                offset: stats.offset + stats.scale * value,
                scale: 0.0,
            };
        } else {
            for v in plane.iter_mut() {
                *v = (*v - lo) / range;
            }
            *stats = ChannelStats {
                offset: stats.offset + stats.scale * lo,
                scale: stats.scale * range,
            };
        }
    }
    out
}

/// Maps every channel back to raw units.
pub fn denormalize(input: &StackedInput) -> StackedInput {
    let mut out = input.clone();
    for (plane, stats) in out.planes.iter_mut().zip(out.norm_stats.iter_mut()) {
        for v in plane.iter_mut() {
            *v = stats.offset + stats.scale * *v;
        }
        *stats = ChannelStats::IDENTITY;
    }
    out
}

/// Adds i.i.d. `N(0, sigma²)` to the left channels and clips to `[0, 1]`.
/// The right channels are returned untouched.
pub fn add_left_noise(input: &StackedInput, sigma: f64, seed: u64) -> Result<StackedInput> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::contract(format!("noise sigma {sigma} must be finite and >= 0")));
    }
    let mut out = input.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked above");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for plane in &mut out.planes[2..] {
        for v in plane.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// How a scene's hidden depth map is rasterized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub width: usize,
    pub height: usize,
    pub window: TargetWindow,
}

/// Settings shared by every record of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub base_scene: SceneConfig,
    pub target: TargetSpec,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// A named object, or `None` for an empty scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetObject {
    pub name: String,
    pub object: Option<NlosObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    /// Position in the object × placement grid, object-major.
    pub index: usize,
    pub scene_id: String,
    pub placement: Placement,
    pub input: StackedInput,
    pub target: NlosDepthMap,
    pub artifact_pixels: usize,
}

impl DatasetRecord {
    pub fn is_empty_scene(&self) -> bool {
        self.target.foreground_count() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub index: usize,
    pub scene_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub records: Vec<DatasetRecord>,
    pub skipped: Vec<SkippedRecord>,
}

/// Independent per-record seed: stream `index` of the dataset generator.
pub fn record_seed(seed: u64, index: usize) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Renders one record: place, render the frame and the target, stack,
/// normalize, add noise, and round to storage precision.
pub fn build_record(
    config: &DatasetConfig,
    item: &DatasetObject,
    placement: Placement,
    index: usize,
    scene_id: String,
) -> Result<DatasetRecord> {
    let object = match &item.object {
        Some(o) => Some(place_object(o, &config.base_scene.wall, placement)?),
        None => None,
    };
    let scene = config.base_scene.with_object(object);
    scene.validate()?;
    let maps = render_scene(&scene);
    let target = render_target_depth(&scene, config.target.width, config.target.height, &config.target.window)?;
    let stacked = normalize_channels(&split_and_stack(&maps)?);
    let input = add_left_noise(&stacked, config.noise_sigma, record_seed(config.seed, index))?.quantized();
    Ok(DatasetRecord {
        index,
        scene_id,
        placement,
        input,
        target,
        artifact_pixels: maps.artifact_count(),
    })
}

/// Renders every object at every placement (`|objects| × |placements|`
/// records, object-major). Records render in parallel; failures are logged
/// and listed in `skipped` under their index, so indices never silently
/// shift.
pub fn generate_dataset(
    objects: &[DatasetObject],
    placements: &[Placement],
    config: &DatasetConfig,
) -> Result<GeneratedDataset> {
    if objects.is_empty() || placements.is_empty() {
        return Err(Error::contract("need at least one object and one placement"));
    }
    config.base_scene.validate()?;
    config.target.window.validate()?;
    let n = objects.len() * placements.len();
    let results: Vec<(usize, String, Result<DatasetRecord>)> = (0..n)
        .into_par_iter()
        .map(|index| {
            let item = &objects[index / placements.len()];
            let p = index % placements.len();
            let scene_id = format!("{}-p{p:03}", item.name);
            let r = build_record(config, item, placements[p], index, scene_id.clone());
            (index, scene_id, r)
        })
        .collect();

    let mut out = GeneratedDataset {
        records: Vec::with_capacity(n),
        skipped: Vec::new(),
    };
    for (index, scene_id, result) in results {
        match result {
            Ok(record) => out.records.push(record),
            Err(e) => {
                log::warn!("record {index} ({scene_id}) skipped: {e}");
                out.skipped.push(SkippedRecord {
                    index,
                    scene_id,
                    reason: e.to_string(),
                });
            }
        }
    }
    log::info!("generated {} records, {} skipped", out.records.len(), out.skipped.len());
    Ok(out)
}

/// Number of training items for `n` items at `fraction`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

/// Deterministic shuffle by `seed`, then the first `round(fraction · n)` go
/// to training.
pub fn split_train_test<T>(items: Vec<T>, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    use rand::seq::SliceRandom;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::contract(format!("train fraction {fraction} outside (0, 1)")));
    }
    let n_train = train_count(items.len(), fraction);
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(slots.len() - n_train);
    for (rank, idx) in order.into_iter().enumerate() {
        let item = slots[idx].take().expect("each index drawn once");
        if rank < n_train {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests;
