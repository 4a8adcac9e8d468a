//! Procedural flat objects: axis-aligned rectangles and ellipses parallel to
//! the wall, sampled as surfels facing the wall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::{NlosObject, WallPlane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outline {
    Rectangle { width: f64, height: f64 },
    Ellipse { width: f64, height: f64 },
}

impl Outline {
    fn size(&self) -> (f64, f64) {
        match *self {
            Outline::Rectangle { width, height } | Outline::Ellipse { width, height } => {
                (width, height)
            }
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Outline::Rectangle { width, height } => {
                x.abs() <= 0.5 * width && y.abs() <= 0.5 * height
            }
            Outline::Ellipse { width, height } => {
                let a = x / (0.5 * width);
                let b = y / (0.5 * height);
                a * a + b * b <= 1.0
            }
        }
    }
}

/// Flat shape in wall-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatShape {
    pub outline: Outline,
    /// Center in wall-local `(u, v)`, meters.
    pub center: (f64, f64),
    /// Perpendicular distance from the wall, meters.
    pub distance: f64,
    /// Surfel grid spacing, meters.
    pub spacing: f64,
    pub albedo: f64,
}

impl FlatShape {
    /// Samples the outline on a square grid of `spacing`, one surfel per grid
    /// cell whose center lies inside, all facing the wall.
    pub fn build(&self, wall: &WallPlane) -> Result<NlosObject> {
        if !(self.spacing > 0.0) {
            return Err(Error::invalid("shape.spacing", "must be positive"));
        }
        let (w, h) = self.outline.size();
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::invalid("shape.outline", "size must be positive"));
        }
        let nx = (w / self.spacing).round().max(1.0) as usize;
        let ny = (h / self.spacing).round().max(1.0) as usize;
        let facing = -wall.normal;
        let mut points = Vec::new();
        for b in 0..ny {
            let y = ((b as f64 + 0.5) / ny as f64 - 0.5) * h;
            for a in 0..nx {
                let x = ((a as f64 + 0.5) / nx as f64 - 0.5) * w;
                if self.outline.contains(x, y) {
                    points.push(wall.from_local(
                        self.center.0 + x,
                        self.center.1 + y,
                        self.distance,
                    ));
                }
            }
        }
        if points.is_empty() {
            return Err(Error::invalid("shape", "outline contains no sample"));
        }
        let n = points.len();
        let object = NlosObject {
            points,
            normals: vec![facing; n],
            albedos: vec![self.albedo; n],
            patch_area: (w / nx as f64) * (h / ny as f64),
        };
        object.validate()?;
        Ok(object)
    }
}

/// Single surfel, mostly for hand-checkable scenes.
pub fn single_point(position: Vec3, normal: Vec3, albedo: f64, area: f64) -> NlosObject {
    NlosObject {
        points: vec![position],
        normals: vec![normal],
        albedos: vec![albedo],
        patch_area: area,
    }
}
