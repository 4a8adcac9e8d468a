//! Reconstruction quality: masked depth RMSE, a range-relative accuracy,
//! false-positive detection on empty scenes, and test-set reports.
//!
//! Accuracy is defined locally as `100·(1 − rmse/depth_range)`, clamped to
//! `[0, 100]`; reports say so in their summary.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::formats::write_file;
use crate::remapper::Remapper;
use crate::renderer::NlosDepthMap;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const ROWS_NAME: &str = "eval_rows.csv";
pub const SUMMARY_NAME: &str = "eval_summary.json";
pub const ACCURACY_DEFINITION: &str = "100 * (1 - rmse_mm / depth_range_mm), clamped to [0, 100]; local definition";

/// Masked RMSE in millimeters. `masked == 0` means the ground truth had
/// no foreground and `rmse_mm` is 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthError {
    pub rmse_mm: f64,
    pub masked: usize,
}

impl DepthError {
    pub fn mask_empty(&self) -> bool {
        self.masked == 0
    }
}

fn same_shape(a: &NlosDepthMap, b: &NlosDepthMap) -> Result<()> {
    if a.width != b.width || a.height != b.height || a.depth.len() != b.depth.len() {
        return Err(Error::contract(format!(
            "{}x{} prediction against {}x{} ground truth",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// RMSE over pixels where `gt > 0`.
pub fn rmse_depth(pred: &NlosDepthMap, gt: &NlosDepthMap) -> Result<DepthError> {
    same_shape(pred, gt)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (&p, &g) in pred.depth.iter().zip(&gt.depth) {
        if g > 0.0 {
            let e = 1000.0 * (p as f64 - g as f64);
            sum += e * e;
            n += 1;
        }
    }
    Ok(DepthError {
        rmse_mm: if n == 0 { 0.0 } else { (sum / n as f64).sqrt() },
        masked: n,
    })
}

/// `100·(1 − rmse/depth_range)` clamped to `[0, 100]`.
pub fn accuracy_from_rmse(rmse_mm: f64, depth_range_mm: f64) -> Result<f64> {
    if !(depth_range_mm > 0.0) {
        return Err(Error::contract("depth_range must be positive"));
    }
    Ok((100.0 * (1.0 - rmse_mm / depth_range_mm)).clamp(0.0, 100.0))
}

pub fn depth_accuracy(pred: &NlosDepthMap, gt: &NlosDepthMap, depth_range_mm: f64) -> Result<f64> {
    accuracy_from_rmse(rmse_depth(pred, gt)?.rmse_mm, depth_range_mm)
}

/// Fraction of pixels deeper than `depth_floor_mm`.
pub fn foreground_fraction(pred: &NlosDepthMap, depth_floor_mm: f64) -> f64 {
    if pred.depth.is_empty() {
        return 0.0;
    }
    let floor = depth_floor_mm / 1000.0;
    pred.depth.iter().filter(|&&d| d as f64 > floor).count() as f64 / pred.depth.len() as f64
}

/// True when strictly more than `area_threshold` of the pixels lie above
/// the floor.
pub fn false_positive_check(pred: &NlosDepthMap, area_threshold: f64, depth_floor_mm: f64) -> Result<bool> {
    if !(area_threshold > 0.0) || !(depth_floor_mm > 0.0) {
        return Err(Error::contract("false-positive thresholds must be positive"));
    }
    Ok(foreground_fraction(pred, depth_floor_mm) > area_threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub area_fraction: f64,
    pub depth_floor_mm: f64,
    /// Defaults to the spread of foreground depths in the test set.
    pub depth_range_mm: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            area_fraction: 0.02,
            depth_floor_mm: 10.0,
            depth_range_mm: None,
        }
    }
}

/// One test record. Metric fields are `None` when reconstruction failed;
/// `accuracy_percent` is also `None` for empty ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub index: usize,
    pub scene_id: String,
    pub empty_scene: bool,
    pub masked_pixels: usize,
    pub rmse_mm: Option<f64>,
    pub accuracy_percent: Option<f64>,
    pub foreground_area_fraction: Option<f64>,
    pub false_positive: Option<bool>,
    pub latency_ms: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub schema_version: u32,
    pub records: usize,
    pub failed: usize,
    pub masked_pixels: usize,
    /// Root of the masked-pixel-weighted mean of squared per-record RMSEs.
    pub pooled_rmse_mm: f64,
    pub mean_rmse_mm: f64,
    pub worst_rmse_mm: f64,
    pub worst_rmse_scene: Option<String>,
    pub pooled_accuracy_percent: f64,
    pub mean_accuracy_percent: f64,
    pub worst_accuracy_percent: f64,
    pub accuracy_definition: String,
    pub depth_range_mm: f64,
    pub thresholds: Thresholds,
    pub empty_scenes: usize,
    pub false_positives: usize,
    pub mean_latency_ms: f64,
    pub max_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Sorted by record index.
    pub rows: Vec<EvalRow>,
    pub summary: EvalSummary,
}

/// Foreground depth spread of the ground truth in millimeters, or its
/// maximum when every foreground pixel sits at one depth.
pub fn test_depth_range_mm(records: &[DatasetRecord]) -> Option<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for d in records.iter().flat_map(|r| &r.target.depth) {
        if *d > 0.0 {
            lo = lo.min(*d as f64);
            hi = hi.max(*d as f64);
        }
    }
    if hi <= 0.0 {
        return None;
    }
    Some(1000.0 * if hi > lo { hi - lo } else { hi })
}

/// Reconstructs every record and scores it. A failing record becomes a row
/// with its error; the sweep continues.
pub fn evaluate(records: &[DatasetRecord], remapper: &Remapper, thresholds: &Thresholds) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::contract("test set is empty"));
    }
    if !(thresholds.area_fraction > 0.0) || !(thresholds.depth_floor_mm > 0.0) {
        return Err(Error::invalid("thresholds", "area_fraction and depth_floor_mm must be positive"));
    }
    let range = match thresholds.depth_range_mm {
        Some(r) if r > 0.0 => r,
        Some(_) => return Err(Error::invalid("depth_range_mm", "must be positive")),
        None => test_depth_range_mm(records).unwrap_or(1.0),
    };
    let mut rows: Vec<EvalRow> = records
        .par_iter()
        .map(|r| score(r, remapper, thresholds, range))
        .collect();
    rows.sort_by_key(|r| r.index);
    let summary = summarize(&rows, *thresholds, range);
    Ok(EvalReport { rows, summary })
}

fn score(record: &DatasetRecord, remapper: &Remapper, t: &Thresholds, range: f64) -> EvalRow {
    let mut row = EvalRow {
        index: record.index,
        scene_id: record.scene_id.clone(),
        empty_scene: record.is_empty_scene(),
        masked_pixels: record.target.foreground_count(),
        rmse_mm: None,
        accuracy_percent: None,
        foreground_area_fraction: None,
        false_positive: None,
        latency_ms: None,
        error: None,
    };
    let result = remapper.reconstruct(&record.input).and_then(|rec| {
        let err = rmse_depth(&rec.depth, &record.target)?;
        Ok((rec, err))
    });
    match result {
        Ok((rec, err)) => {
            row.rmse_mm = Some(err.rmse_mm);
            if !err.mask_empty() {
                row.accuracy_percent = accuracy_from_rmse(err.rmse_mm, range).ok();
            }
            row.foreground_area_fraction = Some(foreground_fraction(&rec.depth, t.depth_floor_mm));
            row.false_positive = false_positive_check(&rec.depth, t.area_fraction, t.depth_floor_mm).ok();
            row.latency_ms = Some(rec.elapsed.as_secs_f64() * 1000.0);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn summarize(rows: &[EvalRow], thresholds: Thresholds, range: f64) -> EvalSummary {
    let ok: Vec<&EvalRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let scored: Vec<&EvalRow> = ok.iter().copied().filter(|r| r.masked_pixels > 0).collect();
    let masked: usize = scored.iter().map(|r| r.masked_pixels).sum();
    let sq: f64 = scored
        .iter()
        .map(|r| r.rmse_mm.unwrap().powi(2) * r.masked_pixels as f64)
        .sum();
    let pooled = if masked == 0 { 0.0 } else { (sq / masked as f64).sqrt() };
    let mean = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let worst = scored
        .iter()
        .max_by(|a, b| a.rmse_mm.unwrap().total_cmp(&b.rmse_mm.unwrap()));
    let accs: Vec<f64> = scored.iter().filter_map(|r| r.accuracy_percent).collect();
    let lat: Vec<f64> = ok.iter().filter_map(|r| r.latency_ms).collect();
    let empties: Vec<&&EvalRow> = ok.iter().filter(|r| r.empty_scene).collect();
    EvalSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        records: rows.len(),
        failed: rows.len() - ok.len(),
        masked_pixels: masked,
        pooled_rmse_mm: pooled,
        mean_rmse_mm: mean(scored.iter().map(|r| r.rmse_mm.unwrap()).collect()),
        worst_rmse_mm: worst.map_or(0.0, |r| r.rmse_mm.unwrap()),
        worst_rmse_scene: worst.map(|r| r.scene_id.clone()),
        pooled_accuracy_percent: accuracy_from_rmse(pooled, range).unwrap_or(0.0),
        mean_accuracy_percent: mean(accs.clone()),
        worst_accuracy_percent: accs.iter().copied().fold(100.0, f64::min),
        accuracy_definition: ACCURACY_DEFINITION.into(),
        depth_range_mm: range,
        thresholds,
        empty_scenes: empties.len(),
        false_positives: empties.iter().filter(|r| r.false_positive == Some(true)).count(),
        mean_latency_ms: mean(lat.clone()),
        max_latency_ms: lat.iter().copied().fold(0.0, f64::max),
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), |v| v.to_string())
}

impl EvalReport {
    /// One row per record after a `#`-prefixed version line. Scene ids are
    /// generated identifiers and never contain commas; error text is quoted.
    pub fn rows_csv(&self) -> String {
        let mut s = format!("# nlos eval rows v{REPORT_SCHEMA_VERSION}\n");
        s.push_str(
            "index,scene_id,empty_scene,masked_pixels,rmse_mm,accuracy_percent,\
             foreground_area_fraction,false_positive,latency_ms,error\n",
        );
        for r in &self.rows {
            let err = r
                .error
                .as_ref()
                .map_or(String::new(), |e| format!("\"{}\"", e.replace('"', "\"\"")));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.scene_id,
                r.empty_scene,
                r.masked_pixels,
                opt(&r.rmse_mm),
                opt(&r.accuracy_percent),
                opt(&r.foreground_area_fraction),
                opt(&r.false_positive),
                opt(&r.latency_ms),
                err
            );
        }
        s
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }

    /// Copy with every timing field cleared, for comparing runs.
    pub fn without_timing(&self) -> EvalReport {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.latency_ms = None;
        }
        r.summary.mean_latency_ms = 0.0;
        r.summary.max_latency_ms = 0.0;
        r
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_file(&dir.join(ROWS_NAME), self.rows_csv().as_bytes())?;
        write_file(&dir.join(SUMMARY_NAME), self.summary_json()?.as_bytes())
    }
}
