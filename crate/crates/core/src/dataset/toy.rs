//! Procedural benchmark family: flat rectangles and ellipses near the lit
//! part of the wall, varied in size, position, altitude, yaw and distance,
//! plus empty scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetConfig, DatasetObject, TargetSpec, DEFAULT_NOISE_SIGMA};
use crate::error::Result;
use crate::presets::standard_scene;
use crate::renderer::TargetWindow;
use crate::scene::Placement;
use crate::shapes::{FlatShape, Outline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyFamily {
    /// Distinct shapes; one empty scene is added on top.
    pub shapes: usize,
    pub placements: usize,
    pub target_size: usize,
    /// Side lengths, meters.
    pub size_range: (f64, f64),
    /// Wall-local `u` of shape centers, meters.
    pub center_u_range: (f64, f64),
    pub altitude_range: (f64, f64),
    pub yaw_range_deg: (f64, f64),
    pub distance_range: (f64, f64),
    pub spacing: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ToyFamily {
    /// 20 objects (19 shapes and the empty scene) × 30 placements = 600
    /// records with 32×32 targets.
    fn default() -> Self {
        ToyFamily {
            shapes: 19,
            placements: 30,
            target_size: 32,
            size_range: (0.3, 0.8),
            center_u_range: (-0.2, 1.7),
            altitude_range: (-0.5, 0.5),
            yaw_range_deg: (-20.0, 8.0),
            distance_range: (0.03, 0.15),
            spacing: 0.05,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            seed: 7,
        }
    }
}

/// Everything `generate_dataset` needs for the family.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub objects: Vec<DatasetObject>,
    pub placements: Vec<Placement>,
    pub config: DatasetConfig,
}

/// Window on the wall covering the lit grazing region: 3 m × 3 m.
pub const TOY_WINDOW: TargetWindow = TargetWindow {
    u_min: -0.75,
    u_max: 2.25,
    v_min: -1.5,
    v_max: 1.5,
};

impl ToyFamily {
    pub fn build(&self) -> Result<ToyDataset> {
        let mut base = standard_scene();
        base.wall.patch_resolution = (60, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut objects = Vec::with_capacity(self.shapes + 1);
        objects.push(DatasetObject {
            name: "empty".into(),
            object: None,
        });
        for k in 0..self.shapes {
            let width = rng.random_range(self.size_range.0..=self.size_range.1);
            let height = rng.random_range(self.size_range.0..=self.size_range.1);
            let (outline, kind) = if rng.random_bool(0.5) {
                (Outline::Rectangle { width, height }, "rect")
            } else {
                (Outline::Ellipse { width, height }, "ellipse")
            };
            let shape = FlatShape {
                outline,
                center: (rng.random_range(self.center_u_range.0..=self.center_u_range.1), 0.0),
                distance: self.distance_range.0,
                spacing: self.spacing,
                albedo: rng.random_range(0.8..=1.0),
            };
            objects.push(DatasetObject {
                name: format!("{kind}{k:02}"),
                object: Some(shape.build(&base.wall)?),
            });
        }
        let placements = (0..self.placements)
            .map(|_| Placement {
                altitude: rng.random_range(self.altitude_range.0..=self.altitude_range.1),
                yaw_deg: rng.random_range(self.yaw_range_deg.0..=self.yaw_range_deg.1),
                distance_to_wall: rng.random_range(self.distance_range.0..=self.distance_range.1),
            })
            .collect();
        Ok(ToyDataset {
            objects,
            placements,
            config: DatasetConfig {
                base_scene: base,
                target: TargetSpec {
                    width: self.target_size,
                    height: self.target_size,
                    window: TOY_WINDOW,
                },
                noise_sigma: self.noise_sigma,
                seed: self.seed,
            },
        })
    }
}
