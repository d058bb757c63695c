//! Trajectory and scene model for language-driven trajectory adaptation.
//!
//! A [`Trajectory`] is a dense sequence of waypoints `(x, y, z, v)` where `v`
//! is the scalar path speed. A [`Scene`] holds labeled objects. The
//! [`transform`] module contains the deterministic reference transforms that
//! back the script builtins, and [`verify`] turns per-sample constraint
//! specs into a pass/fail report.

pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod transform;
pub mod verify;

pub use error::{CoreError, Result};
pub use geometry::Vec3;
pub use metrics::{arc_length_params, discrete_frechet, nearest_index, roughness};
pub use model::{BlendMode, Scene, SceneObject, Trajectory, Waypoint};
pub use transform::{
    append_spiral, enforce_min_distance, radial_rescale, resample, scale_speed_near, smooth,
    translate_blend, truncate_at_nearest,
};
