//! Ready-made scenes: the oblique-wall setup used throughout, the
//! strong-multipath configuration, and small random scenes for oracle checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec3;
use crate::renderer::trace_direct;
use crate::scene::{FovGrid, LidarPose, NlosObject, RenderParams, SceneConfig, WallPlane};
use crate::shapes::{FlatShape, Outline};

/// Lidar at the origin looking along `+z` turned `lidar_yaw_deg` toward `+x`;
/// wall in the plane `z = wall_distance` facing the Lidar, spanning
/// `x ∈ [-1, 5]` m and `y ∈ [-1.5, 1.5]` m in 5 cm patches, albedo 0.9.
/// Beams in the right half of the frame hit the wall at increasingly grazing
/// angles.
pub fn oblique_wall_scene(wall_distance: f64, lidar_yaw_deg: f64) -> SceneConfig {
    let yaw = lidar_yaw_deg.to_radians();
    let forward = Vec3::new(yaw.sin(), 0.0, yaw.cos());
    SceneConfig {
        lidar: LidarPose::looking(Vec3::ZERO, forward, Vec3::Y)
            .expect("yaw keeps forward off the up axis"),
        wall: WallPlane {
            point: Vec3::new(2.0, 0.0, wall_distance),
            normal: -Vec3::Z,
            albedo: 0.9,
            extent: (6.0, 3.0),
            patch_resolution: (120, 60),
        },
        object: None,
        grid: FovGrid::default(),
        render: RenderParams::default(),
    }
}

/// The standard oblique setup: wall 0.4 m ahead, Lidar turned 55°, so the
/// right half of the frame sees incidence from 55° to grazing.
pub fn standard_scene() -> SceneConfig {
    oblique_wall_scene(0.4, 55.0)
}

/// Pixel whose beam defines the illuminated spot in [`multipath_scene`].
pub const MULTIPATH_SPOT_PIXEL: (usize, usize) = (32, 68);

/// Strong-multipath configuration: a 0.6 m albedo-1 plate parallel to the
/// wall, its nearest point `spot_distance` from the spot lit by
/// [`MULTIPATH_SPOT_PIXEL`] (incidence ≈ 80°).
pub fn multipath_scene(spot_distance: f64) -> SceneConfig {
    let mut scene = standard_scene();
    let (i, j) = MULTIPATH_SPOT_PIXEL;
    let spot = trace_direct(&scene, i, j)
        .hit_point
        .expect("spot pixel hits the wall");
    let (u, v, _) = scene.wall.to_local(spot);
    let plate = FlatShape {
        outline: Outline::Rectangle {
            width: 0.6,
            height: 0.6,
        },
        center: (u, v),
        distance: spot_distance,
        spacing: 0.03,
        albedo: 1.0,
    };
    scene.object = Some(plate.build(&scene.wall).expect("valid plate"));
    scene
}

/// Size limits for [`random_small_scene`].
#[derive(Debug, Clone, Copy)]
pub struct RandomSceneLimits {
    pub max_grid: usize,
    pub max_points: usize,
    pub max_patches_per_axis: usize,
}

impl Default for RandomSceneLimits {
    fn default() -> Self {
        RandomSceneLimits {
            max_grid: 16,
            max_points: 50,
            max_patches_per_axis: 10,
        }
    }
}

/// Random oblique scene with a small grid, a handful of surfels near the
/// wall and a coarse patch grid. Biased toward close, bright objects so a
/// fair share of scenes contain artifact pixels.
pub fn random_small_scene(seed: u64, limits: RandomSceneLimits) -> SceneConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wall_distance = rng.random_range(0.3..1.2);
    let yaw = rng.random_range(25.0..60.0);
    let mut scene = oblique_wall_scene(wall_distance, yaw);
    scene.wall.albedo = rng.random_range(0.3..1.0);
    scene.wall.patch_resolution = (
        rng.random_range(1..=limits.max_patches_per_axis),
        rng.random_range(1..=limits.max_patches_per_axis),
    );
    scene.grid = FovGrid {
        width: rng.random_range(1..=limits.max_grid),
        height: rng.random_range(1..=limits.max_grid),
        ..FovGrid::default()
    };
    scene.render = RenderParams {
        bin_width: rng.random_range(0.02..0.3),
        max_path_length: rng.random_range(4.0..20.0),
        min_total_intensity: if rng.random_bool(0.2) {
            rng.random_range(0.0..1e-4)
        } else {
            0.0
        },
    };

    if rng.random_bool(0.9) {
        let n = rng.random_range(1..=limits.max_points);
        let center_u = rng.random_range(-1.0..3.0);
        let center_v = rng.random_range(-0.8..0.8);
        let mut object = NlosObject {
            points: Vec::with_capacity(n),
            normals: Vec::with_capacity(n),
            albedos: Vec::with_capacity(n),
            patch_area: rng.random_range(1e-3..3e-2),
        };
        for _ in 0..n {
            let u = center_u + rng.random_range(-0.4..0.4);
            let v = center_v + rng.random_range(-0.4..0.4);
            let h = rng.random_range(0.02..0.4);
            object.points.push(scene.wall.from_local(u, v, h));
            let tilt = Vec3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                0.0,
            );
            object.normals.push((-scene.wall.normal + tilt).normalized());
            object.albedos.push(rng.random_range(0.2..1.0));
        }
        scene.object = Some(object);
    }
    scene
}
