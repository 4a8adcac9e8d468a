//! On-disk dataset: a `dataset.json` manifest plus one `NLOSRC01` blob per
//! record under `records/`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChannelStats, DatasetConfig, DatasetRecord, SkippedRecord, StackedInput, CHANNEL_NAMES};
use crate::error::{Error, Result};
use crate::formats::{read_file, write_file, ByteReader, ByteWriter};
use crate::renderer::NlosDepthMap;
use crate::scene::Placement;

pub const RECORD_MAGIC: &[u8; 8] = b"NLOSRC01";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "dataset.json";

/// `NLOSRC01`, input width and height, the four input planes (`f32`), four
/// `(offset, scale)` pairs (`f64`), target width and height, target plane
/// (`f32`).
pub fn encode_record(input: &StackedInput, target: &NlosDepthMap) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new(RECORD_MAGIC);
    w.u32(input.width)?;
    w.u32(input.height)?;
    for plane in &input.planes {
        if plane.len() != input.plane_len() {
            return Err(Error::contract("input plane length does not match its extent"));
        }
        w.f32s(plane.iter().copied());
    }
    for s in &input.norm_stats {
        w.f64(s.offset);
        w.f64(s.scale);
    }
    w.u32(target.width)?;
    w.u32(target.height)?;
    for &d in &target.depth {
        w.f32(d);
    }
    Ok(w.finish())
}

pub fn decode_record(data: &[u8]) -> Result<(StackedInput, NlosDepthMap)> {
    let mut r = ByteReader::new("dataset record", data, RECORD_MAGIC)?;
    let width = r.u32()?;
    let height = r.u32()?;
    let n = width.checked_mul(height).ok_or_else(|| r.error("extent overflow"))?;
    let planes = [r.f32s(n)?, r.f32s(n)?, r.f32s(n)?, r.f32s(n)?];
    let mut norm_stats = [ChannelStats::IDENTITY; 4];
    for s in &mut norm_stats {
        s.offset = r.f64()?;
        s.scale = r.f64()?;
    }
    let tw = r.u32()?;
    let th = r.u32()?;
    let m = tw.checked_mul(th).ok_or_else(|| r.error("extent overflow"))?;
    let depth = r.f32s(m)?.into_iter().map(|d| d as f32).collect();
    r.finish()?;
    Ok((
        StackedInput {
            width,
            height,
            planes,
            norm_stats,
        },
        NlosDepthMap {
            width: tw,
            height: th,
            depth,
        },
    ))
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// SHA-256 of the record's encoded bytes.
pub fn record_digest(record: &DatasetRecord) -> Result<String> {
    Ok(sha256_hex(&encode_record(&record.input, &record.target)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub scene_id: String,
    pub placement: Placement,
    pub split: Split,
    /// Relative to the dataset directory.
    pub path: PathBuf,
    pub sha256: String,
    pub artifact_pixels: usize,
    pub empty_scene: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub total: usize,
    pub train: usize,
    pub test: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub train_fraction: f64,
    pub channel_order: Vec<String>,
    pub counts: ManifestCounts,
    pub config: DatasetConfig,
    /// Sorted by index.
    pub records: Vec<ManifestEntry>,
    pub skipped: Vec<SkippedRecord>,
}

fn record_path(index: usize) -> PathBuf {
    PathBuf::from("records").join(format!("{index:06}.nlosrc"))
}

/// Writes every record blob, then the manifest (records in index order).
/// Returns the manifest and the SHA-256 of its bytes.
pub fn write_dataset(
    dir: &Path,
    config: &DatasetConfig,
    train_fraction: f64,
    train: &[DatasetRecord],
    test: &[DatasetRecord],
    skipped: &[SkippedRecord],
) -> Result<(DatasetManifest, String)> {
    std::fs::create_dir_all(dir.join("records"))?;
    let mut entries = Vec::with_capacity(train.len() + test.len());
    for (split, records) in [(Split::Train, train), (Split::Test, test)] {
        for record in records {
            let bytes = encode_record(&record.input, &record.target)?;
            let path = record_path(record.index);
            write_file(&dir.join(&path), &bytes)?;
            entries.push(ManifestEntry {
                index: record.index,
                scene_id: record.scene_id.clone(),
                placement: record.placement,
                split,
                path,
                sha256: sha256_hex(&bytes),
                artifact_pixels: record.artifact_pixels,
                empty_scene: record.is_empty_scene(),
            });
        }
    }
    entries.sort_by_key(|e| e.index);
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed: config.seed,
        train_fraction,
        channel_order: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
        counts: ManifestCounts {
            total: entries.len(),
            train: train.len(),
            test: test.len(),
            skipped: skipped.len(),
        },
        config: config.clone(),
        records: entries,
        skipped: skipped.to_vec(),
    };
    let bytes = serde_json::to_vec_pretty(&manifest)?;
    write_file(&dir.join(MANIFEST_NAME), &bytes)?;
    Ok((manifest, sha256_hex(&bytes)))
}

/// A dataset read back from disk, records in index order per split.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

/// Reads the manifest and every record, checking each digest.
pub fn read_dataset(dir: &Path) -> Result<LoadedDataset> {
    let manifest: DatasetManifest = serde_json::from_slice(&read_file(&dir.join(MANIFEST_NAME))?)?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::invalid(
            "dataset.json schema_version",
            format!("unsupported version {}", manifest.schema_version),
        ));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for entry in &manifest.records {
        let bytes = read_file(&dir.join(&entry.path))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::invalid(
                entry.path.display().to_string(),
                "digest does not match the manifest",
            ));
        }
        let (input, target) = decode_record(&bytes)?;
        let record = DatasetRecord {
            index: entry.index,
            scene_id: entry.scene_id.clone(),
            placement: entry.placement,
            input,
            target,
            artifact_pixels: entry.artifact_pixels,
        };
        match entry.split {
            Split::Train => train.push(record),
            Split::Test => test.push(record),
        }
    }
    Ok(LoadedDataset {
        manifest,
        train,
        test,
    })
}
