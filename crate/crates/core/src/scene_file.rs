//! JSON scene description.
//!
//! Units are explicit in every key: `_m` meters, `_m2` square meters, `_deg`
//! degrees; unsuffixed numbers are dimensionless. Vectors are `[x, y, z]`.
//! Unknown keys are rejected so typos surface with their line and column.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "lidar": { "origin_m": [0, 0, 0], "forward": [0.819, 0, 0.574], "up": [0, 1, 0] },
//!   "wall": { "center_m": [2, 0, 0.4], "normal": [0, 0, -1], "albedo": 0.9,
//!             "extent_m": [6, 3], "patch_resolution": [120, 60] },
//!   "object": { "kind": "shape", "outline": { "kind": "rectangle", "width": 0.6, "height": 0.6 },
//!               "center_m": [2.3, 0], "distance_m": 0.2, "spacing_m": 0.03, "albedo": 1.0 },
//!   "placement": { "altitude": 0.1, "yaw_deg": 10, "distance_to_wall": 0.15 },
//!   "grid": { "h_fov_deg": 70, "v_fov_deg": 55, "width": 80, "height": 64 },
//!   "render": { "bin_width_m": 0.2, "max_path_length_m": 20, "min_total_intensity": 0 }
//! }
//! ```
//!
//! `object` may be omitted or `null` (empty scene), a `shape`, or a
//! `point_cloud` whose `path` is resolved against the scene file's directory.
//! `placement` is applied to the object after it is built.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{decode_point_cloud, read_file};
use crate::scene::{
    place_object, FovGrid, LidarPose, NlosObject, Placement, RenderParams, SceneConfig, WallPlane,
};
use crate::shapes::{FlatShape, Outline};
use crate::Vec3;

pub const SCENE_SCHEMA_VERSION: u32 = 1;

fn default_wall_albedo() -> f64 {
    0.7
}

fn default_object_albedo() -> f64 {
    0.5
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarSpec {
    pub origin_m: [f64; 3],
    pub forward: [f64; 3],
    /// Only needs to be non-parallel to `forward`; it is orthogonalized.
    pub up: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    pub center_m: [f64; 3],
    pub normal: [f64; 3],
    #[serde(default = "default_wall_albedo")]
    pub albedo: f64,
    pub extent_m: [f64; 2],
    pub patch_resolution: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectSpec {
    Shape {
        outline: Outline,
        /// Wall-local `(u, v)` of the shape center.
        center_m: [f64; 2],
        distance_m: f64,
        spacing_m: f64,
        #[serde(default = "default_object_albedo")]
        albedo: f64,
    },
    PointCloud {
        path: PathBuf,
        patch_area_m2: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSpec {
    pub bin_width_m: f64,
    pub max_path_length_m: f64,
    #[serde(default)]
    pub min_total_intensity: f64,
}

impl From<RenderParams> for RenderSpec {
    fn from(p: RenderParams) -> Self {
        RenderSpec {
            bin_width_m: p.bin_width,
            max_path_length_m: p.max_path_length,
            min_total_intensity: p.min_total_intensity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub schema_version: u32,
    pub lidar: LidarSpec,
    pub wall: WallSpec,
    #[serde(default)]
    pub object: Option<ObjectSpec>,
    #[serde(default)]
    pub placement: Option<Placement>,
    #[serde(default)]
    pub grid: Option<FovGrid>,
    #[serde(default)]
    pub render: Option<RenderSpec>,
}

impl SceneFile {
    /// Parses the JSON text; syntax and schema errors carry line and column.
    pub fn parse(text: &str) -> Result<SceneFile> {
        let file: SceneFile = serde_json::from_str(text)?;
        if file.schema_version != SCENE_SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("unsupported version {}", file.schema_version),
            ));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<SceneFile> {
        let bytes = read_file(path)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::invalid(path.display().to_string(), e.to_string()))?;
        Self::parse(text)
    }

    /// Describes an in-memory scene without its object.
    pub fn from_config(scene: &SceneConfig) -> SceneFile {
        SceneFile {
            schema_version: SCENE_SCHEMA_VERSION,
            lidar: LidarSpec {
                origin_m: arr(scene.lidar.origin),
                forward: arr(scene.lidar.forward),
                up: arr(scene.lidar.up),
            },
            wall: WallSpec {
                center_m: arr(scene.wall.point),
                normal: arr(scene.wall.normal),
                albedo: scene.wall.albedo,
                extent_m: [scene.wall.extent.0, scene.wall.extent.1],
                patch_resolution: [scene.wall.patch_resolution.0, scene.wall.patch_resolution.1],
            },
            object: None,
            placement: None,
            grid: Some(scene.grid),
            render: Some(scene.render.into()),
        }
    }

    /// Builds and validates the scene. Relative point-cloud paths are taken
    /// relative to `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<SceneConfig> {
        let normal = v3(self.wall.normal);
        if !(normal.norm() > 0.0) {
            return Err(Error::invalid("wall.normal", "must be non-zero"));
        }
        let lidar = LidarPose::looking(v3(self.lidar.origin_m), v3(self.lidar.forward), v3(self.lidar.up))?;
        let wall = WallPlane {
            point: v3(self.wall.center_m),
            normal: normal.normalized(),
            albedo: self.wall.albedo,
            extent: (self.wall.extent_m[0], self.wall.extent_m[1]),
            patch_resolution: (self.wall.patch_resolution[0], self.wall.patch_resolution[1]),
        };
        wall.validate()?;
        let render = match &self.render {
            Some(r) => RenderParams {
                bin_width: r.bin_width_m,
                max_path_length: r.max_path_length_m,
                min_total_intensity: r.min_total_intensity,
            },
            None => RenderParams::default(),
        };
        let mut object = match &self.object {
            None => None,
            Some(spec) => Some(build_object(spec, &wall, base_dir)?),
        };
        if let Some(placement) = self.placement {
            match &object {
                Some(o) => object = Some(place_object(o, &wall, placement)?),
                None => return Err(Error::invalid("placement", "given without an object")),
            }
        }
        let scene = SceneConfig {
            lidar,
            wall,
            object,
            grid: self.grid.unwrap_or_default(),
            render,
        };
        scene.validate()?;
        Ok(scene)
    }
}

fn build_object(spec: &ObjectSpec, wall: &WallPlane, base_dir: &Path) -> Result<NlosObject> {
    match spec {
        ObjectSpec::Shape {
            outline,
            center_m,
            distance_m,
            spacing_m,
            albedo,
        } => FlatShape {
            outline: *outline,
            center: (center_m[0], center_m[1]),
            distance: *distance_m,
            spacing: *spacing_m,
            albedo: *albedo,
        }
        .build(wall),
        ObjectSpec::PointCloud {
            path,
            patch_area_m2,
        } => {
            let full = base_dir.join(path);
            decode_point_cloud(&read_file(&full)?, *patch_area_m2)
        }
    }
}
