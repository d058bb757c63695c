use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{self, Vec3};

/// One sample of a trajectory: position in meters and scalar path speed in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
}

impl Waypoint {
    pub const fn new(x: f64, y: f64, z: f64, v: f64) -> Self {
        Self { x, y, z, v }
    }

    pub fn from_position(p: Vec3, v: f64) -> Self {
        Self::new(p[0], p[1], p[2], v)
    }

    pub fn position(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    pub fn with_position(self, p: Vec3) -> Self {
        Self::from_position(p, self.v)
    }

    pub fn is_valid(&self) -> bool {
        geometry::is_finite(self.position()) && self.v.is_finite() && self.v >= 0.0
    }
}

impl From<[f64; 4]> for Waypoint {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Waypoint> for [f64; 4] {
    fn from(w: Waypoint) -> Self {
        [w.x, w.y, w.z, w.v]
    }
}

/// An ordered sequence of at least two valid waypoints.
///
/// Construction always validates, so every `Trajectory` value in the program
/// satisfies the invariants and transforms never need to re-check them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryFile", into = "TrajectoryFile")]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    waypoints: Vec<Waypoint>,
}

impl TryFrom<TrajectoryFile> for Trajectory {
    type Error = CoreError;

    fn try_from(f: TrajectoryFile) -> Result<Self> {
        Trajectory::new(f.waypoints)
    }
}

impl From<Trajectory> for TrajectoryFile {
    fn from(t: Trajectory) -> Self {
        TrajectoryFile {
            waypoints: t.waypoints,
        }
    }
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(CoreError::InvalidTrajectory(format!(
                "a trajectory needs at least 2 waypoints, got {}",
                waypoints.len()
            )));
        }
        if let Some((i, w)) = waypoints.iter().enumerate().find(|(_, w)| !w.is_valid()) {
            return Err(CoreError::InvalidTrajectory(format!(
                "waypoint {i} is invalid ({}, {}, {}, v={}): components must be finite and v >= 0",
                w.x, w.y, w.z, w.v
            )));
        }
        Ok(Self { waypoints })
    }

    pub fn from_rows(rows: &[[f64; 4]]) -> Result<Self> {
        Self::new(rows.iter().copied().map(Waypoint::from).collect())
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn into_waypoints(self) -> Vec<Waypoint> {
        self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.waypoints.iter().map(Waypoint::position).collect()
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.waypoints.iter().map(|w| w.v).collect()
    }

    pub fn first(&self) -> &Waypoint {
        &self.waypoints[0]
    }

    pub fn last(&self) -> &Waypoint {
        &self.waypoints[self.waypoints.len() - 1]
    }

    pub fn rows(&self) -> Vec<[f64; 4]> {
        self.waypoints.iter().map(|&w| w.into()).collect()
    }

    /// Sum of Euclidean distances between consecutive waypoints.
    pub fn chord_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| geometry::dist(w[0].position(), w[1].position()))
            .sum()
    }

    /// Diagonal of the axis-aligned bounding box of all positions.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in self.waypoints.iter().map(Waypoint::position) {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        geometry::dist(hi, lo)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| CoreError::Format(format!("trajectory: {e}")))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub label: String,
    pub position: Vec3,
}

impl SceneObject {
    pub fn new(label: impl Into<String>, position: Vec3) -> Self {
        Self {
            label: label.into(),
            position,
        }
    }
}

/// Labeled objects plus an optional prose description of the environment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneFile", into = "SceneFile")]
pub struct Scene {
    objects: Vec<SceneObject>,
    description: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    #[serde(default)]
    objects: Vec<SceneObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
}

impl TryFrom<SceneFile> for Scene {
    type Error = CoreError;

    fn try_from(f: SceneFile) -> Result<Self> {
        Scene::new(f.objects, f.description)
    }
}

impl From<Scene> for SceneFile {
    fn from(s: Scene) -> Self {
        SceneFile {
            objects: s.objects,
            description: s.description,
        }
    }
}

impl Scene {
    pub fn new(objects: Vec<SceneObject>, description: Option<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for o in &objects {
            if o.label.trim().is_empty() {
                return Err(CoreError::InvalidScene("object label is empty".into()));
            }
            if !geometry::is_finite(o.position) {
                return Err(CoreError::InvalidScene(format!(
                    "object '{}' has a non-finite position",
                    o.label
                )));
            }
            if !seen.insert(o.label.as_str()) {
                return Err(CoreError::InvalidScene(format!(
                    "duplicate object label '{}'",
                    o.label
                )));
            }
        }
        Ok(Self {
            objects,
            description: description.filter(|d| !d.trim().is_empty()),
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn description(&self) -> Option<&str> {
        self.description.as_deref()
    }

    pub fn get(&self, label: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.label == label)
    }

    /// Lenient lookup used by the script builtin `detect_objects`: case,
    /// surrounding whitespace, and space/hyphen vs underscore are ignored.
    pub fn find(&self, name: &str) -> Option<&SceneObject> {
        let key = normalize_label(name);
        self.objects
            .iter()
            .find(|o| normalize_label(&o.label) == key)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| CoreError::Format(format!("scene: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

fn normalize_label(s: &str) -> String {
    s.trim()
        .chars()
        .map(|c| match c {
            ' ' | '-' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

/// Endpoint-preservation profile for offsets that taper along arc length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    Uniform,
    FixStart,
    FixGoal,
    FixBoth,
}

impl BlendMode {
    pub const ALL: [BlendMode; 4] = [
        BlendMode::Uniform,
        BlendMode::FixStart,
        BlendMode::FixGoal,
        BlendMode::FixBoth,
    ];

    /// Offset weight at normalized arc-length `s`.
    pub fn weight(self, s: f64) -> f64 {
        match self {
            BlendMode::Uniform => 1.0,
            BlendMode::FixStart => s,
            BlendMode::FixGoal => 1.0 - s,
            BlendMode::FixBoth => 4.0 * s * (1.0 - s),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BlendMode::Uniform => "uniform",
            BlendMode::FixStart => "fix_start",
            BlendMode::FixGoal => "fix_goal",
            BlendMode::FixBoth => "fix_both",
        }
    }
}

impl fmt::Display for BlendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlendMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        BlendMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                CoreError::InvalidArgument(format!(
                    "unknown blend mode '{s}' (expected uniform, fix_start, fix_goal or fix_both)"
                ))
            })
    }
}
