//! Lidar multipath simulation and two-step latent remapping for
//! non-line-of-sight imaging.
//!
//! A scanning Lidar aimed obliquely at a relay wall normally reports the wall
//! distance. When three-bounce light from a hidden object near the wall is
//! brighter than the direct return, it reports half the three-bounce path
//! length instead. [`renderer`] simulates those readings, [`dataset`] turns
//! them into network inputs, and [`remapper`] recovers the hidden depth map by
//! compressing readings into a VAE latent and decoding it.

pub mod dataset;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod presets;
pub mod remapper;
pub mod renderer;
pub mod scene;
pub mod scene_file;
pub mod shapes;

pub use error::{Error, Result};
pub use geometry::Vec3;
