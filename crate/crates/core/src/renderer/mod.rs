//! What the Lidar reports per pixel: a direct wall return, or the dominant
//! three-bounce path-length bin when that bin is strictly brighter.

mod target;
pub mod transport;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::scene::{pixel_ray, sample_wall_patches, RenderParams, SceneConfig};

pub use target::{render_target_depth, NlosDepthMap, TargetWindow};
pub use transport::{three_bounce_histogram, FactoredTransport};

/// Bins within this relative distance of the maximum count as tied; the
/// shortest tied path wins.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-12;

/// Depth/intensity frame as reported by the Lidar, row-major `height × width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMaps {
    pub width: usize,
    pub height: usize,
    /// Meters; 0 where the beam misses the wall.
    pub depth: Vec<f64>,
    pub intensity: Vec<f64>,
    /// True where a multipath bin replaced the direct return.
    pub artifact: Vec<bool>,
}

impl DetectionMaps {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        DetectionMaps {
            width,
            height,
            depth: vec![0.0; n],
            intensity: vec![0.0; n],
            artifact: vec![false; n],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.width + j
    }

    pub fn artifact_count(&self) -> usize {
        self.artifact.iter().filter(|&&a| a).count()
    }
}

/// Uniform path-length histogram; bin `k` covers `[k·w, (k+1)·w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathHistogram {
    pub bin_width: f64,
    pub totals: Vec<f64>,
    touched: Option<(usize, usize)>,
}

impl PathHistogram {
    pub fn new(params: &RenderParams) -> Self {
        PathHistogram {
            bin_width: params.bin_width,
            totals: vec![0.0; params.bin_count()],
            touched: None,
        }
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.totals.len())
            .map(|k| k as f64 * self.bin_width)
            .collect()
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.bin_width
    }

    pub(crate) fn touch(&mut self, lo: usize, hi: usize) {
        self.touched = Some(match self.touched {
            None => (lo, hi),
            Some((a, b)) => (a.min(lo), b.max(hi)),
        });
    }

    /// Zeroes the histogram, only visiting bins that were written through
    /// the factored kernel (or all bins if unknown).
    pub fn clear(&mut self) {
        match self.touched.take() {
            Some((lo, hi)) => self.totals[lo..hi].fill(0.0),
            None => self.totals.fill(0.0),
        }
    }

    /// `(bin, total)` of the strongest bin; ties go to the shortest path.
    /// `None` when every bin is zero.
    pub fn max_bin(&self) -> Option<(usize, f64)> {
        let (lo, hi) = self.touched.unwrap_or((0, self.totals.len()));
        let slice = &self.totals[lo..hi];
        let max = slice.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return None;
        }
        let floor = max * (1.0 - TIE_RELATIVE_TOLERANCE);
        slice
            .iter()
            .position(|&t| t >= floor)
            .map(|k| (lo + k, slice[k]))
    }

    pub fn total(&self) -> f64 {
        self.totals.iter().sum()
    }
}

/// Direct single-bounce return of one beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectReturn {
    /// Distance from the Lidar plane to the hit, along `forward`.
    pub orthogonal_depth: f64,
    pub intensity: f64,
    /// `None` is the no-return marker (depth and intensity both 0).
    pub hit_point: Option<Vec3>,
}

impl DirectReturn {
    pub const NONE: DirectReturn = DirectReturn {
        orthogonal_depth: 0.0,
        intensity: 0.0,
        hit_point: None,
    };
}

/// Final reading of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelReading {
    pub depth: f64,
    pub intensity: f64,
    pub artifact: bool,
}

/// Intersects pixel `(i, j)`'s beam with the front face of the wall.
///
/// Intensity is `albedo · cos²θ / (π r²)` for incidence angle `θ` and beam
/// length `r`. Misses, back-face hits and out-of-range pixels give
/// [`DirectReturn::NONE`].
pub fn trace_direct(scene: &SceneConfig, i: usize, j: usize) -> DirectReturn {
    let Ok(dir) = pixel_ray(&scene.grid, &scene.lidar, i, j) else {
        return DirectReturn::NONE;
    };
    trace_ray(scene, dir)
}

pub(crate) fn trace_ray(scene: &SceneConfig, dir: Vec3) -> DirectReturn {
    let wall = &scene.wall;
    let origin = scene.lidar.origin;
    let facing = dir.dot(wall.normal);
    if !(facing < 0.0) {
        return DirectReturn::NONE;
    }
    let r = (wall.point - origin).dot(wall.normal) / facing;
    if !(r > 0.0) || !r.is_finite() {
        return DirectReturn::NONE;
    }
    let hit = origin + dir * r;
    if !wall.contains(hit) {
        return DirectReturn::NONE;
    }
    let cos_i = -facing;
    DirectReturn {
        orthogonal_depth: (hit - origin).dot(scene.lidar.forward),
        intensity: wall.albedo * cos_i * cos_i / (PI * r * r),
        hit_point: Some(hit),
    }
}

/// Decision rule: the strongest multipath bin wins only if it is strictly
/// brighter than the direct return and reaches `min_total_intensity`; its
/// depth is then half the bin-center path length.
pub fn resolve_pixel(
    direct: &DirectReturn,
    hist: &PathHistogram,
    params: &RenderParams,
) -> PixelReading {
    let direct_reading = PixelReading {
        depth: direct.orthogonal_depth,
        intensity: direct.intensity,
        artifact: false,
    };
    match hist.max_bin() {
        Some((k, total)) if total > direct.intensity && total >= params.min_total_intensity => {
            PixelReading {
                depth: hist.bin_center(k) / 2.0,
                intensity: total,
                artifact: true,
            }
        }
        _ => direct_reading,
    }
}

fn assemble(width: usize, height: usize, readings: Vec<PixelReading>) -> DetectionMaps {
    let mut maps = DetectionMaps::zeros(width, height);
    for (idx, r) in readings.into_iter().enumerate() {
        maps.depth[idx] = r.depth;
        maps.intensity[idx] = r.intensity;
        maps.artifact[idx] = r.artifact;
    }
    maps
}

/// Renders the frame with the factored transport, pixels in parallel on the
/// current rayon pool. Output does not depend on the worker count.
pub fn render_scene(scene: &SceneConfig) -> DetectionMaps {
    let grid = scene.grid;
    let transport = FactoredTransport::new(scene);
    let readings: Vec<PixelReading> = (0..grid.pixel_count())
        .into_par_iter()
        .map_init(
            || PathHistogram::new(&scene.render),
            |hist, idx| {
                let direct = trace_direct(scene, idx / grid.width, idx % grid.width);
                let Some(hit) = direct.hit_point else {
                    return PixelReading {
                        depth: 0.0,
                        intensity: 0.0,
                        artifact: false,
                    };
                };
                hist.clear();
                transport.accumulate(scene, hit, hist);
                resolve_pixel(&direct, hist, &scene.render)
            },
        )
        .collect();
    assemble(grid.width, grid.height, readings)
}

/// Reference renderer: pixels × object points × wall patches, one thread,
/// no precomputation shared between pixels.
pub fn render_scene_bruteforce(scene: &SceneConfig) -> DetectionMaps {
    let grid = scene.grid;
    let patches = sample_wall_patches(&scene.wall);
    let mut readings = Vec::with_capacity(grid.pixel_count());
    for i in 0..grid.height {
        for j in 0..grid.width {
            let direct = trace_direct(scene, i, j);
            let reading = match direct.hit_point {
                None => PixelReading {
                    depth: 0.0,
                    intensity: 0.0,
                    artifact: false,
                },
                Some(hit) => {
                    let mut hist = PathHistogram::new(&scene.render);
                    transport::accumulate_naive(scene, hit, &scene.render, &patches, &mut hist);
                    resolve_pixel(&direct, &hist, &scene.render)
                }
            };
            readings.push(reading);
        }
    }
    assemble(grid.width, grid.height, readings)
}

/// Three-bounce histogram of pixel `(i, j)` through the naive kernel, for
/// inspecting individual decisions. `None` when the pixel has no wall return.
pub fn pixel_histogram(scene: &SceneConfig, i: usize, j: usize) -> Option<PathHistogram> {
    let hit = trace_direct(scene, i, j).hit_point?;
    Some(three_bounce_histogram(scene, hit, &scene.render))
}

#[cfg(test)]
mod tests;
