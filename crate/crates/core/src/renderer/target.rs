use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::SceneConfig;

/// Ground-truth hidden-scene depth: perpendicular wall-to-object distance in
/// meters, row-major, 0 where nothing projects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlosDepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
}

impl NlosDepthMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        NlosDepthMap {
            width,
            height,
            depth: vec![0.0; width * height],
        }
    }

    pub fn foreground_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }
}

/// Axis-aligned rectangle in wall-local `(u, v)` coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetWindow {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl TargetWindow {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.u_min, self.u_max, self.v_min, self.v_max]
            .iter()
            .all(|x| x.is_finite())
            && self.u_max > self.u_min
            && self.v_max > self.v_min;
        if ok {
            Ok(())
        } else {
            Err(Error::contract(format!("degenerate target window {self:?}")))
        }
    }
}

/// Projects every object point orthogonally onto the wall and keeps, per
/// window pixel, the smallest positive perpendicular distance. Column 0 is
/// at `u_min`, row 0 at `v_max`.
pub fn render_target_depth(
    scene: &SceneConfig,
    width: usize,
    height: usize,
    window: &TargetWindow,
) -> Result<NlosDepthMap> {
    window.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::contract("target resolution must be at least 1x1"));
    }
    let mut best = vec![f64::INFINITY; width * height];
    if let Some(object) = &scene.object {
        let du = window.u_max - window.u_min;
        let dv = window.v_max - window.v_min;
        for &p in &object.points {
            let (u, v, h) = scene.wall.to_local(p);
            if !(h > 0.0) {
                continue;
            }
            let col = ((u - window.u_min) / du * width as f64).floor();
            let row = ((window.v_max - v) / dv * height as f64).floor();
            if col < 0.0 || row < 0.0 || col >= width as f64 || row >= height as f64 {
                continue;
            }
            let idx = row as usize * width + col as usize;
            best[idx] = best[idx].min(h);
        }
    }
    Ok(NlosDepthMap {
        width,
        height,
        depth: best
            .into_iter()
            .map(|d| if d.is_finite() { d as f32 } else { 0.0 })
            .collect(),
    })
}
