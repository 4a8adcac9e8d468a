//! The scanned world: Lidar pose and scan grid, relay wall, hidden object.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

const FRAME_TOL: f64 = 1e-9;

/// Lidar position and its right-handed frame `right = up × forward`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPose {
    pub origin: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub right: Vec3,
}

impl LidarPose {
    /// Builds an orthonormal frame looking along `forward`, with `up_hint`
    /// Gram-Schmidt corrected against it.
    pub fn looking(origin: Vec3, forward: Vec3, up_hint: Vec3) -> Result<Self> {
        let forward = forward.normalized();
        let up = (up_hint - forward * up_hint.dot(forward)).normalized();
        if forward.norm_sq() == 0.0 || up.norm_sq() == 0.0 {
            return Err(Error::invalid(
                "lidar",
                "forward and up hint must be non-zero and not parallel",
            ));
        }
        let right = up.cross(forward);
        let pose = LidarPose {
            origin,
            forward,
            up,
            right,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [
            ("forward", self.forward),
            ("up", self.up),
            ("right", self.right),
        ] {
            if !axis.is_unit(FRAME_TOL) {
                return Err(Error::invalid(
                    format!("lidar.{name}"),
                    "axis is not unit length",
                ));
            }
        }
        if self.forward.dot(self.up).abs() > FRAME_TOL
            || self.forward.dot(self.right).abs() > FRAME_TOL
            || self.up.dot(self.right).abs() > FRAME_TOL
        {
            return Err(Error::invalid("lidar", "frame axes are not orthogonal"));
        }
        if (self.up.cross(self.forward) - self.right).norm() > 1e-6 {
            return Err(Error::invalid("lidar", "frame is not right-handed"));
        }
        if !self.origin.is_finite() {
            return Err(Error::invalid("lidar.origin", "non-finite coordinate"));
        }
        Ok(())
    }
}

/// Planar Lambertian relay wall. `point` is the center of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallPlane {
    pub point: Vec3,
    pub normal: Vec3,
    pub albedo: f64,
    /// (width, height) in meters along the wall's horizontal and vertical axes.
    pub extent: (f64, f64),
    /// (nu, nv) patches along width and height.
    pub patch_resolution: (usize, usize),
}

impl WallPlane {
    pub fn validate(&self) -> Result<()> {
        if !self.normal.is_unit(FRAME_TOL) {
            return Err(Error::invalid("wall.normal", "must be unit length"));
        }
        if !(0.0..=1.0).contains(&self.albedo) {
            return Err(Error::invalid("wall.albedo", "must lie in [0, 1]"));
        }
        if !(self.extent.0 > 0.0 && self.extent.1 > 0.0) {
            return Err(Error::invalid("wall.extent", "must be positive"));
        }
        if self.patch_resolution.0 == 0 || self.patch_resolution.1 == 0 {
            return Err(Error::invalid("wall.patch_resolution", "must be at least 1"));
        }
        Ok(())
    }

    /// In-plane axes `(u, v)`: `v` is world +Y projected onto the wall (world
    /// +Z when the wall is horizontal), `u = normal × v`, so that a viewer
    /// facing the wall sees `u` pointing right and `v` up.
    pub fn axes(&self) -> (Vec3, Vec3) {
        let n = self.normal;
        let hint = if n.y.abs() < 0.9 { Vec3::Y } else { Vec3::Z };
        let v = (hint - n * hint.dot(n)).normalized();
        let u = n.cross(v);
        (u, v)
    }

    /// Wall-local coordinates `(u, v, height above the plane along normal)`.
    pub fn to_local(&self, p: Vec3) -> (f64, f64, f64) {
        let (u, v) = self.axes();
        let d = p - self.point;
        (d.dot(u), d.dot(v), d.dot(self.normal))
    }

    pub fn from_local(&self, u_coord: f64, v_coord: f64, height: f64) -> Vec3 {
        let (u, v) = self.axes();
        self.point + u * u_coord + v * v_coord + self.normal * height
    }

    /// True when an in-plane point lies within the rectangle.
    pub fn contains(&self, p: Vec3) -> bool {
        let (a, b, _) = self.to_local(p);
        a.abs() <= 0.5 * self.extent.0 && b.abs() <= 0.5 * self.extent.1
    }

    pub fn area(&self) -> f64 {
        self.extent.0 * self.extent.1
    }
}

/// Oriented surfel cloud standing in for the hidden object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlosObject {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub albedos: Vec<f64>,
    /// Area represented by each surfel, m².
    pub patch_area: f64,
}

impl NlosObject {
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n == 0 {
            return Err(Error::invalid("object.points", "must be non-empty"));
        }
        if self.normals.len() != n || self.albedos.len() != n {
            return Err(Error::invalid(
                "object",
                format!(
                    "points/normals/albedos lengths differ ({n}/{}/{})",
                    self.normals.len(),
                    self.albedos.len()
                ),
            ));
        }
        if let Some(k) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("object.points[{k}]"), "non-finite"));
        }
        if let Some(k) = self.normals.iter().position(|m| !m.is_unit(1e-6)) {
            return Err(Error::invalid(
                format!("object.normals[{k}]"),
                "must be unit length",
            ));
        }
        if let Some(k) = self.albedos.iter().position(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid(
                format!("object.albedos[{k}]"),
                "must lie in [0, 1]",
            ));
        }
        if !(self.patch_area > 0.0) {
            return Err(Error::invalid("object.patch_area", "must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        let sum = self
            .points
            .iter()
            .fold(Vec3::ZERO, |acc, &p| acc + p);
        sum / self.points.len() as f64
    }
}

/// Angular scan grid. Defaults to the 70°×55°, 80×64 device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovGrid {
    pub h_fov_deg: f64,
    pub v_fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for FovGrid {
    fn default() -> Self {
        FovGrid {
            h_fov_deg: 70.0,
            v_fov_deg: 55.0,
            width: 80,
            height: 64,
        }
    }
}

impl FovGrid {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("grid", "width and height must be >= 1"));
        }
        for (name, a) in [("grid.h_fov_deg", self.h_fov_deg), ("grid.v_fov_deg", self.v_fov_deg)] {
            if !(a > 0.0 && a < 180.0) {
                return Err(Error::invalid(name, "must lie in (0, 180) degrees"));
            }
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Azimuth of column `j` in radians, positive toward the Lidar's right.
    pub fn azimuth(&self, j: usize) -> f64 {
        let h = self.h_fov_deg.to_radians();
        ((j as f64 + 0.5) / self.width as f64 - 0.5) * h
    }

    /// Elevation of row `i` in radians, positive toward the Lidar's up.
    pub fn elevation(&self, i: usize) -> f64 {
        let v = self.v_fov_deg.to_radians();
        (0.5 - (i as f64 + 0.5) / self.height as f64) * v
    }
}

/// Path-length histogram settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Histogram resolution in meters of optical path.
    pub bin_width: f64,
    /// Paths longer than this are discarded, meters.
    pub max_path_length: f64,
    /// A multipath bin must reach at least this total to override the direct return.
    pub min_total_intensity: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            bin_width: 0.2,
            max_path_length: 20.0,
            min_total_intensity: 0.0,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0) {
            return Err(Error::invalid("render.bin_width", "must be positive"));
        }
        if !(self.max_path_length > 0.0) {
            return Err(Error::invalid("render.max_path_length", "must be positive"));
        }
        if !(self.min_total_intensity >= 0.0) {
            return Err(Error::invalid(
                "render.min_total_intensity",
                "must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        (self.max_path_length / self.bin_width).ceil() as usize
    }
}

/// Everything needed to render one Lidar frame. The object is assumed to sit
/// on the Lidar side of the wall, hidden from the Lidar by an occluder that is
/// not modeled; nothing here enforces that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub lidar: LidarPose,
    pub wall: WallPlane,
    pub object: Option<NlosObject>,
    pub grid: FovGrid,
    pub render: RenderParams,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.lidar.validate()?;
        self.wall.validate()?;
        self.grid.validate()?;
        self.render.validate()?;
        if let Some(obj) = &self.object {
            obj.validate()?;
        }
        Ok(())
    }

    pub fn with_object(&self, object: Option<NlosObject>) -> SceneConfig {
        SceneConfig {
            object,
            ..self.clone()
        }
    }
}

/// Outgoing beam direction for pixel `(i, j)` (row, column).
///
/// Pixels sample the center of equal-angle cells: column `j` sits at azimuth
/// `((j + ½)/width − ½)·h_fov` and row `i` at elevation
/// `(½ − (i + ½)/height)·v_fov`.
pub fn pixel_ray(grid: &FovGrid, lidar: &LidarPose, i: usize, j: usize) -> Result<Vec3> {
    if i >= grid.height || j >= grid.width {
        return Err(Error::contract(format!(
            "pixel ({i}, {j}) outside {}x{} grid",
            grid.height, grid.width
        )));
    }
    let (sa, ca) = grid.azimuth(j).sin_cos();
    let (se, ce) = grid.elevation(i).sin_cos();
    Ok(lidar.forward * (ce * ca) + lidar.right * (ce * sa) + lidar.up * se)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPatch {
    pub center: Vec3,
    pub area: f64,
}

/// Tiles the wall rectangle into `nu × nv` equal patches, row-major in `v`
/// then `u`.
pub fn sample_wall_patches(wall: &WallPlane) -> Vec<WallPatch> {
    let (nu, nv) = wall.patch_resolution;
    let (w, h) = wall.extent;
    let area = w * h / (nu * nv) as f64;
    let mut out = Vec::with_capacity(nu * nv);
    for b in 0..nv {
        let vc = ((b as f64 + 0.5) / nv as f64 - 0.5) * h;
        for a in 0..nu {
            let uc = ((a as f64 + 0.5) / nu as f64 - 0.5) * w;
            out.push(WallPatch {
                center: wall.from_local(uc, vc, 0.0),
                area,
            });
        }
    }
    out
}

/// Placement of an object relative to the wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Shift along the wall's vertical axis, meters.
    pub altitude: f64,
    /// Rotation about the wall-vertical axis through the centroid, degrees.
    pub yaw_deg: f64,
    /// Perpendicular distance from the wall to the object's nearest point.
    pub distance_to_wall: f64,
}

/// Smallest perpendicular distance from the wall plane to any object point.
pub fn nearest_wall_distance(object: &NlosObject, wall: &WallPlane) -> f64 {
    object
        .points
        .iter()
        .map(|&p| (p - wall.point).dot(wall.normal))
        .fold(f64::INFINITY, f64::min)
}

/// Rigidly moves `object`: yaw about the wall-vertical axis through its
/// centroid, then an `altitude` shift along that axis and a shift along the
/// wall normal that puts the nearest point at `distance_to_wall`.
pub fn place_object(
    object: &NlosObject,
    wall: &WallPlane,
    placement: Placement,
) -> Result<NlosObject> {
    if !(placement.distance_to_wall > 0.0) {
        return Err(Error::contract("distance_to_wall must be positive"));
    }
    object.validate()?;
    let (_, vertical) = wall.axes();
    let yaw = placement.yaw_deg.to_radians();
    let c = object.centroid();

    let mut points: Vec<Vec3> = object
        .points
        .iter()
        .map(|&p| c + (p - c).rotate_about(vertical, yaw))
        .collect();
    let normals = object
        .normals
        .iter()
        .map(|&m| m.rotate_about(vertical, yaw))
        .collect();

    let current = points
        .iter()
        .map(|&p| (p - wall.point).dot(wall.normal))
        .fold(f64::INFINITY, f64::min);
    let shift = vertical * placement.altitude
        + wall.normal * (placement.distance_to_wall - current);
    for p in &mut points {
        *p += shift;
    }

    Ok(NlosObject {
        points,
        normals,
        albedos: object.albedos.clone(),
        patch_area: object.patch_area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lidar() -> LidarPose {
        LidarPose::looking(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap()
    }

    fn wall() -> WallPlane {
        WallPlane {
            point: Vec3::new(0.0, 0.0, 2.0),
            normal: -Vec3::Z,
            albedo: 0.7,
            extent: (2.0, 1.0),
            patch_resolution: (1, 1),
        }
    }

    fn object() -> NlosObject {
        NlosObject {
            points: vec![
                Vec3::new(0.1, 0.0, 1.6),
                Vec3::new(-0.2, 0.3, 1.7),
                Vec3::new(0.0, -0.1, 1.5),
            ],
            normals: vec![Vec3::Z; 3],
            albedos: vec![0.5; 3],
            patch_area: 1e-3,
        }
    }

    #[test]
    fn frame_right_is_up_cross_forward() {
        let l = lidar();
        assert!((l.right - Vec3::X).norm() < 1e-12);
    }

    #[test]
    fn center_pixel_of_odd_grid_is_forward() {
        let grid = FovGrid {
            width: 81,
            height: 65,
            ..FovGrid::default()
        };
        let d = pixel_ray(&grid, &lidar(), 32, 40).unwrap();
        assert!((d - Vec3::Z).norm() < 1e-9);
    }

    #[test]
    fn extreme_columns_are_symmetric() {
        let grid = FovGrid::default();
        let l = lidar();
        let expected = (70.0f64 / 2.0 * 79.0 / 80.0).to_radians();
        for i in [0, 17, 63] {
            let a = pixel_ray(&grid, &l, i, 0).unwrap();
            let b = pixel_ray(&grid, &l, i, 79).unwrap();
            let az_a = a.dot(l.right).atan2(a.dot(l.forward));
            let az_b = b.dot(l.right).atan2(b.dot(l.forward));
            assert!((az_a + expected).abs() < 1e-9);
            assert!((az_b - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn azimuth_increases_with_column() {
        let grid = FovGrid::default();
        let l = lidar();
        let mut prev = f64::NEG_INFINITY;
        for j in 0..grid.width {
            let d = pixel_ray(&grid, &l, 5, j).unwrap();
            let az = d.dot(l.right).atan2(d.dot(l.forward));
            assert!(az > prev);
            prev = az;
        }
    }

    #[test]
    fn elevation_decreases_with_row() {
        let grid = FovGrid::default();
        let l = lidar();
        let top = pixel_ray(&grid, &l, 0, 10).unwrap();
        let bottom = pixel_ray(&grid, &l, 63, 10).unwrap();
        assert!(top.dot(l.up) > 0.0 && bottom.dot(l.up) < 0.0);
    }

    #[test]
    fn pixel_out_of_range_is_rejected() {
        let grid = FovGrid::default();
        assert!(matches!(
            pixel_ray(&grid, &lidar(), 64, 0),
            Err(Error::Contract(_))
        ));
        assert!(pixel_ray(&grid, &lidar(), 0, 80).is_err());
    }

    #[test]
    fn single_patch_covers_wall() {
        let patches = sample_wall_patches(&wall());
        assert_eq!(patches.len(), 1);
        assert!((patches[0].area - 2.0).abs() < 1e-12);
        assert!((patches[0].center - Vec3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn two_by_two_patches_quarter_the_area() {
        let mut w = wall();
        w.patch_resolution = (2, 2);
        let patches = sample_wall_patches(&w);
        assert_eq!(patches.len(), 4);
        for p in &patches {
            assert!((p.area - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn wall_axes_face_the_viewer() {
        let (u, v) = wall().axes();
        assert!((u - Vec3::X).norm() < 1e-12);
        assert!((v - Vec3::Y).norm() < 1e-12);
    }

    #[test]
    fn identity_placement_keeps_points() {
        let o = object();
        let w = wall();
        let d = nearest_wall_distance(&o, &w);
        let placed = place_object(
            &o,
            &w,
            Placement {
                altitude: 0.0,
                yaw_deg: 0.0,
                distance_to_wall: d,
            },
        )
        .unwrap();
        for (a, b) in o.points.iter().zip(&placed.points) {
            assert!((*a - *b).norm() < 1e-9);
        }
    }

    #[test]
    fn full_turn_is_identity() {
        let o = object();
        let w = wall();
        let d = nearest_wall_distance(&o, &w);
        let placed = place_object(
            &o,
            &w,
            Placement {
                altitude: 0.0,
                yaw_deg: 360.0,
                distance_to_wall: d,
            },
        )
        .unwrap();
        for (a, b) in o.points.iter().zip(&placed.points) {
            assert!((*a - *b).norm() < 1e-9);
        }
    }

    #[test]
    fn placement_sets_nearest_distance() {
        let w = wall();
        let placed = place_object(
            &object(),
            &w,
            Placement {
                altitude: 0.2,
                yaw_deg: 30.0,
                distance_to_wall: 0.25,
            },
        )
        .unwrap();
        assert!((nearest_wall_distance(&placed, &w) - 0.25).abs() < 1e-12);
        assert!(placed.normals.iter().all(|n| n.is_unit(1e-12)));
    }

    #[test]
    fn non_positive_distance_is_rejected() {
        let r = place_object(
            &object(),
            &wall(),
            Placement {
                altitude: 0.0,
                yaw_deg: 0.0,
                distance_to_wall: 0.0,
            },
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn invalid_albedo_is_reported_by_field() {
        let mut o = object();
        o.albedos[1] = 1.5;
        let err = o.validate().unwrap_err().to_string();
        assert!(err.contains("object.albedos[1]"), "{err}");
    }
}
