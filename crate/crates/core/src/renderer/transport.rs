//! Three-bounce (Lidar → wall → object → wall → Lidar) transport.
//!
//! Every diffuse segment `a → b` carries
//! `albedo_a · cos(out at a) · cos(in at b) · area_b / (π |ab|²)`; the
//! outgoing Lidar beam is collimated and contributes no factor, and the Lidar
//! receives through a unit aperture facing its forward axis. Cosines are
//! clamped at zero so back-facing surfels contribute nothing. There is no
//! visibility test: every object point sees every wall patch.
//!
//! Path lengths are split into the pixel-dependent forward part
//! `|Lw| + |wp|` and the pixel-independent return part `|pw'| + |w'L|`. Each
//! part is quantized to a time-of-flight tick of `bin_width / TICKS_PER_BIN`
//! before the two are added, so bin membership is pure integer arithmetic and
//! the factored kernel lands every path in exactly the bin the naive loop
//! does.

use std::f64::consts::PI;

use crate::geometry::Vec3;
use crate::scene::{sample_wall_patches, NlosObject, RenderParams, SceneConfig, WallPatch};

use super::PathHistogram;

/// Sub-bin time-of-flight ticks per histogram bin.
pub const TICKS_PER_BIN: i64 = 16;

#[inline]
fn tick_of(length: f64, params: &RenderParams) -> i64 {
    (length / (params.bin_width / TICKS_PER_BIN as f64)).floor() as i64
}

/// Histogram bin for a path whose forward and return parts quantize to the
/// given ticks.
#[inline]
pub fn bin_of_ticks(forward_ticks: i64, return_ticks: i64) -> i64 {
    (forward_ticks + return_ticks).div_euclid(TICKS_PER_BIN)
}

/// Histogram bin of a path given its two halves.
pub fn path_bin(forward_length: f64, return_length: f64, params: &RenderParams) -> i64 {
    bin_of_ticks(tick_of(forward_length, params), tick_of(return_length, params))
}

/// Lambertian throughput of one diffuse segment from `a` (normal `na`,
/// albedo `albedo_a`) to `b` (normal `nb`, receiving area `area_b`).
#[inline]
pub fn segment_throughput(
    a: Vec3,
    na: Vec3,
    albedo_a: f64,
    b: Vec3,
    nb: Vec3,
    area_b: f64,
) -> f64 {
    let ab = b - a;
    let d2 = ab.norm_sq();
    if d2 == 0.0 {
        return 0.0;
    }
    let d = d2.sqrt();
    let cos_out = (na.dot(ab) / d).max(0.0);
    let cos_in = (-nb.dot(ab) / d).max(0.0);
    albedo_a * cos_out * cos_in * area_b / (PI * d2)
}

/// Throughput of the wall-hit → object-point segment for one pixel.
#[inline]
pub fn forward_throughput(scene: &SceneConfig, wall_hit: Vec3, object: &NlosObject, k: usize) -> f64 {
    segment_throughput(
        wall_hit,
        scene.wall.normal,
        scene.wall.albedo,
        object.points[k],
        object.normals[k],
        object.patch_area,
    )
}

/// Throughput of object point `k` → wall patch → Lidar aperture.
#[inline]
pub fn return_throughput(scene: &SceneConfig, object: &NlosObject, k: usize, patch: &WallPatch) -> f64 {
    let to_patch = segment_throughput(
        object.points[k],
        object.normals[k],
        object.albedos[k],
        patch.center,
        scene.wall.normal,
        patch.area,
    );
    // Unit-area aperture whose outward normal is the Lidar's forward axis.
    let to_lidar = segment_throughput(
        patch.center,
        scene.wall.normal,
        scene.wall.albedo,
        scene.lidar.origin,
        scene.lidar.forward,
        1.0,
    );
    to_patch * to_lidar
}

#[inline]
fn forward_length(scene: &SceneConfig, wall_hit: Vec3, p: Vec3) -> f64 {
    scene.lidar.origin.distance(wall_hit) + wall_hit.distance(p)
}

#[inline]
fn return_length(scene: &SceneConfig, p: Vec3, patch: &WallPatch) -> f64 {
    p.distance(patch.center) + patch.center.distance(scene.lidar.origin)
}

/// Direct accumulation over every (object point, wall patch) pair for the
/// beam hitting the wall at `wall_hit`.
pub fn three_bounce_histogram(
    scene: &SceneConfig,
    wall_hit: Vec3,
    params: &RenderParams,
) -> PathHistogram {
    let patches = sample_wall_patches(&scene.wall);
    let mut hist = PathHistogram::new(params);
    accumulate_naive(scene, wall_hit, params, &patches, &mut hist);
    hist
}

pub(crate) fn accumulate_naive(
    scene: &SceneConfig,
    wall_hit: Vec3,
    params: &RenderParams,
    patches: &[WallPatch],
    hist: &mut PathHistogram,
) {
    let Some(object) = &scene.object else {
        return;
    };
    let bins = hist.totals.len() as i64;
    for k in 0..object.len() {
        let p = object.points[k];
        let fwd = forward_throughput(scene, wall_hit, object, k);
        let fwd_len = forward_length(scene, wall_hit, p);
        for patch in patches {
            let bin = path_bin(fwd_len, return_length(scene, p, patch), params);
            if bin < 0 || bin >= bins {
                continue;
            }
            hist.totals[bin as usize] += fwd * return_throughput(scene, object, k, patch);
        }
    }
}

/// Pre-binned return-leg transport for one object point.
///
/// `tables[r]` holds the return throughput grouped by output bin for a
/// forward tick count congruent to `r` modulo [`TICKS_PER_BIN`]; its first
/// entry corresponds to bin `forward_ticks / TICKS_PER_BIN + offsets[r]`.
#[derive(Debug, Clone)]
struct PointReturn {
    offsets: [i64; TICKS_PER_BIN as usize],
    tables: Vec<Vec<f64>>,
}

/// Pixel-independent part of the three-bounce transport, shared read-only by
/// all render workers.
#[derive(Debug, Clone)]
pub struct FactoredTransport {
    points: Vec<PointReturn>,
    params: RenderParams,
}

impl FactoredTransport {
    pub fn new(scene: &SceneConfig) -> Self {
        let params = scene.render;
        let patches = sample_wall_patches(&scene.wall);
        let points = match &scene.object {
            None => Vec::new(),
            Some(object) => (0..object.len())
                .map(|k| Self::point_tables(scene, object, k, &patches))
                .collect(),
        };
        FactoredTransport { points, params }
    }

    fn point_tables(
        scene: &SceneConfig,
        object: &NlosObject,
        k: usize,
        patches: &[WallPatch],
    ) -> PointReturn {
        let p = object.points[k];
        let entries: Vec<(i64, f64)> = patches
            .iter()
            .map(|w| {
                (
                    tick_of(return_length(scene, p, w), &scene.render),
                    return_throughput(scene, object, k, w),
                )
            })
            .collect();
        let lo = entries.iter().map(|e| e.0).min().unwrap_or(0);
        let hi = entries.iter().map(|e| e.0).max().unwrap_or(0);
        let mut fine = vec![0.0; (hi - lo + 1) as usize];
        for &(q, t) in &entries {
            fine[(q - lo) as usize] += t;
        }

        let mut offsets = [0i64; TICKS_PER_BIN as usize];
        let mut tables = Vec::with_capacity(TICKS_PER_BIN as usize);
        for r in 0..TICKS_PER_BIN {
            let first = bin_of_ticks(r, lo);
            let last = bin_of_ticks(r, hi);
            let mut table = vec![0.0; (last - first + 1) as usize];
            for (idx, &t) in fine.iter().enumerate() {
                let q = lo + idx as i64;
                table[(bin_of_ticks(r, q) - first) as usize] += t;
            }
            offsets[r as usize] = first;
            tables.push(table);
        }
        PointReturn { offsets, tables }
    }

    /// Adds the three-bounce histogram of the beam hitting `wall_hit` into
    /// `hist`, which must use this transport's render parameters.
    pub fn accumulate(&self, scene: &SceneConfig, wall_hit: Vec3, hist: &mut PathHistogram) {
        let Some(object) = &scene.object else {
            return;
        };
        let bins = hist.totals.len() as i64;
        for (k, point) in self.points.iter().enumerate() {
            let fwd = forward_throughput(scene, wall_hit, object, k);
            if fwd == 0.0 {
                continue;
            }
            let q = tick_of(forward_length(scene, wall_hit, object.points[k]), &self.params);
            let r = q.rem_euclid(TICKS_PER_BIN);
            let table = &point.tables[r as usize];
            let start = q.div_euclid(TICKS_PER_BIN) + point.offsets[r as usize];
            let end = (start + table.len() as i64).min(bins);
            if end <= 0 || start >= bins {
                continue;
            }
            let skip = (-start).max(0);
            let lo = (start + skip) as usize;
            let hi = end as usize;
            let src = &table[skip as usize..skip as usize + (hi - lo)];
            for (dst, &t) in hist.totals[lo..hi].iter_mut().zip(src) {
                *dst += fwd * t;
            }
            hist.touch(lo, hi);
        }
    }

    pub fn histogram(&self, scene: &SceneConfig, wall_hit: Vec3) -> PathHistogram {
        let mut hist = PathHistogram::new(&self.params);
        self.accumulate(scene, wall_hit, &mut hist);
        hist
    }
}
