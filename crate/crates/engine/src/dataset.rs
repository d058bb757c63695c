//! Instruction corpus, seeded trajectory generators and batch evaluation.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajedit_core::geometry::{self, Vec3};
use trajedit_core::verify::{self, CheckSpec, Report};
use trajedit_core::{Scene, Trajectory, Waypoint};

use crate::llm::Transport;
use crate::session::{Session, SessionConfig, SessionState, UserVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Cartesian,
    Speed,
    ObjectRelative,
    Numeric,
    Compound,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Cartesian,
        Category::Speed,
        Category::ObjectRelative,
        Category::Numeric,
        Category::Compound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Cartesian => "cartesian",
            Category::Speed => "speed",
            Category::ObjectRelative => "object_relative",
            Category::Numeric => "numeric",
            Category::Compound => "compound",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathShape {
    Line {
        start: Vec3,
        goal: Vec3,
        n: usize,
    },
    /// Bulges by `sag` at mid-path, sideways from the chord.
    Arc {
        start: Vec3,
        goal: Vec3,
        sag: f64,
        n: usize,
    },
    /// `periods` full sine waves of height `amplitude` along the chord.
    Zigzag {
        start: Vec3,
        goal: Vec3,
        amplitude: f64,
        periods: f64,
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajSpec {
    #[serde(flatten)]
    pub shape: PathShape,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    pub v0: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid trajectory spec: {0}")]
pub struct SpecError(pub String);

impl TrajSpec {
    pub fn line(start: Vec3, goal: Vec3, n: usize, v0: f64) -> Self {
        Self {
            shape: PathShape::Line { start, goal, n },
            noise_std: 0.0,
            seed: 0,
            v0,
        }
    }

    fn endpoints(&self) -> (Vec3, Vec3, usize) {
        match self.shape {
            PathShape::Line { start, goal, n }
            | PathShape::Arc { start, goal, n, .. }
            | PathShape::Zigzag { start, goal, n, .. } => (start, goal, n),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let (start, goal, n) = self.endpoints();
        if n < 2 {
            return Err(SpecError(format!("n must be at least 2, got {n}")));
        }
        if !geometry::is_finite(start) || !geometry::is_finite(goal) {
            return Err(SpecError("start and goal must be finite".into()));
        }
        if !(self.v0 >= 0.0 && self.v0.is_finite()) {
            return Err(SpecError(format!(
                "v0 must be non-negative, got {}",
                self.v0
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(SpecError(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            )));
        }
        let extra = match self.shape {
            PathShape::Line { .. } => vec![],
            PathShape::Arc { sag, .. } => vec![("sag", sag)],
            PathShape::Zigzag {
                amplitude, periods, ..
            } => vec![("amplitude", amplitude), ("periods", periods)],
        };
        for (name, v) in extra {
            if !v.is_finite() {
                return Err(SpecError(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Unit vector for sideways offsets: +Y with the chord component removed,
/// or +Z when the chord runs along Y (or has zero length).
fn lateral(start: Vec3, goal: Vec3) -> Vec3 {
    let up = [0.0, 1.0, 0.0];
    match geometry::normalize(geometry::sub(goal, start)) {
        None => up,
        Some(d) => {
            let ortho = geometry::sub(up, geometry::scale(d, geometry::dot(up, d)));
            if geometry::norm(ortho) < 1e-9 {
                [0.0, 0.0, 1.0]
            } else {
                geometry::normalize(ortho).unwrap()
            }
        }
    }
}

pub fn generate_trajectory(spec: &TrajSpec) -> Result<Trajectory, SpecError> {
    spec.validate()?;
    let (start, goal, n) = spec.endpoints();
    let side = lateral(start, goal);
    let offset = |s: f64| -> f64 {
        match spec.shape {
            PathShape::Line { .. } => 0.0,
            PathShape::Arc { sag, .. } => sag * (PI * s).sin(),
            PathShape::Zigzag {
                amplitude, periods, ..
            } => amplitude * (2.0 * PI * periods * s).sin(),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| SpecError(e.to_string()))?;
    let mut wps = Vec::with_capacity(n);
    for i in 0..n {
        let p = if i == 0 {
            start
        } else if i == n - 1 {
            goal
        } else {
            let s = i as f64 / (n - 1) as f64;
            let mut p = geometry::add(
                geometry::lerp(start, goal, s),
                geometry::scale(side, offset(s)),
            );
            if spec.noise_std > 0.0 {
                for c in &mut p {
                    *c += noise.sample(&mut rng);
                }
            }
            p
        };
        wps.push(Waypoint::from_position(p, spec.v0));
    }
    Trajectory::new(wps).map_err(|e| SpecError(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub instruction: String,
    pub scene: Scene,
    pub traj_spec: TrajSpec,
    pub checks: Vec<CheckSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_id: Option<String>,
    pub category: Category,
    /// Free-form remark, e.g. why a subjective instruction has only loose checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Sample {
    pub fn fixture_key(&self) -> &str {
        self.fixture_id.as_deref().unwrap_or(&self.id)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id: must not be empty".into());
        }
        if self.instruction.trim().is_empty() {
            return Err("instruction: must not be empty".into());
        }
        if self.checks.is_empty() {
            return Err("checks: must not be empty".into());
        }
        self.traj_spec
            .validate()
            .map_err(|e| format!("traj_spec: {}", e.0))?;
        verify::validate_checks(&self.scene, &self.checks).map_err(|e| format!("checks: {e}"))?;
        Ok(())
    }

    pub fn trajectory(&self) -> Result<Trajectory, SpecError> {
        generate_trajectory(&self.traj_spec)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("line {line}: duplicate id '{id}'")]
    DuplicateId { line: usize, id: String },
}

pub fn parse_corpus(text: &str) -> Result<Vec<Sample>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(raw);
        let sample: Sample = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = if path == "." {
                inner.to_string()
            } else {
                format!("{path}: {inner}")
            };
            CorpusError::Record { line, message }
        })?;
        sample
            .validate()
            .map_err(|message| CorpusError::Record { line, message })?;
        if !seen.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: sample.id,
            });
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Sample>, CorpusError> {
    parse_corpus(&std::fs::read_to_string(path)?)
}

/// One JSON record per line.
pub fn write_corpus(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub id: String,
    pub category: Category,
    pub instruction: String,
    pub passed: bool,
    pub checks_passed: usize,
    pub checks_total: usize,
    pub state: Option<SessionState>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub total: usize,
    pub passed: usize,
    pub success_rate: f64,
}

impl Tally {
    fn add(&mut self, passed: bool) {
        self.total += 1;
        self.passed += usize::from(passed);
        self.success_rate = self.passed as f64 / self.total as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<SampleResult>,
    pub categories: BTreeMap<Category, Tally>,
    pub overall: Tally,
    /// Excluded from [`EvalReport::same_results`].
    pub wall_clock_secs: f64,
}

impl EvalReport {
    /// Equality ignoring timing.
    pub fn same_results(&self, other: &EvalReport) -> bool {
        self.samples == other.samples
            && self.categories == other.categories
            && self.overall == other.overall
    }

    pub fn all_passed(&self) -> bool {
        self.overall.total > 0 && self.overall.passed == self.overall.total
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub session: SessionConfig,
    /// Worker threads; 0 means one per core.
    pub parallelism: usize,
}

/// Materializes the trajectory, runs a session, approves the first proposal
/// and scores the result.
pub fn eval_sample(
    sample: &Sample,
    cfg: &SessionConfig,
    transport: &dyn Transport,
) -> SampleResult {
    let mut result = SampleResult {
        id: sample.id.clone(),
        category: sample.category,
        instruction: sample.instruction.clone(),
        passed: false,
        checks_passed: 0,
        checks_total: sample.checks.len(),
        state: None,
        iterations: 0,
        error: None,
        report: None,
    };
    let original = match sample.trajectory() {
        Ok(t) => t,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    let session = Session::start(
        sample.id.clone(),
        sample.instruction.clone(),
        sample.scene.clone(),
        original.clone(),
        sample.fixture_key(),
        cfg.clone(),
        transport,
    )
    .and_then(|mut s| {
        if s.state == SessionState::Proposed {
            s.record_verdict(UserVerdict::Approve)?;
        }
        Ok(s)
    });
    let session = match session {
        Ok(s) => s,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    result.state = Some(session.state);
    result.iterations = session.iterations.len();
    let Some(adapted) = session.final_trajectory() else {
        result.error = session.latest_error();
        return result;
    };
    match verify::evaluate(&original, adapted, &sample.scene, &sample.checks) {
        Ok(report) => {
            result.checks_passed = report.passed_count();
            result.passed = report.passed;
            result.report = Some(report);
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

pub fn run_eval(samples: &[Sample], cfg: &EvalConfig, transport: &dyn Transport) -> EvalReport {
    let started = Instant::now();
    let run = || -> Vec<SampleResult> {
        samples
            .par_iter()
            .map(|s| eval_sample(s, &cfg.session, transport))
            .collect()
    };
    let results = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    let mut categories: BTreeMap<Category, Tally> = BTreeMap::new();
    let mut overall = Tally::default();
    for r in &results {
        categories.entry(r.category).or_default().add(r.passed);
        overall.add(r.passed);
    }
    EvalReport {
        samples: results,
        categories,
        overall,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line() {
        let t = generate_trajectory(&TrajSpec::line([0.0; 3], [2.0, 0.0, 0.0], 3, 1.5)).unwrap();
        assert_eq!(
            t.rows(),
            vec![
                [0.0, 0.0, 0.0, 1.5],
                [1.0, 0.0, 0.0, 1.5],
                [2.0, 0.0, 0.0, 1.5]
            ]
        );
    }

    #[test]
    fn arc_midpoint_sags_along_y() {
        let spec = TrajSpec {
            shape: PathShape::Arc {
                start: [0.0; 3],
                goal: [2.0, 0.0, 0.0],
                sag: 1.0,
                n: 3,
            },
            noise_std: 0.0,
            seed: 0,
            v0: 1.0,
        };
        let t = generate_trajectory(&spec).unwrap();
        let mid = t.waypoints()[1].position();
        assert!(geometry::dist(mid, [1.0, 1.0, 0.0]) < 1e-12);
    }

    #[test]
    fn lateral_direction_falls_back_to_z() {
        assert_eq!(lateral([0.0; 3], [0.0, 5.0, 0.0]), [0.0, 0.0, 1.0]);
        let l = lateral([0.0; 3], [1.0, 1.0, 0.0]);
        assert!(geometry::dot(l, [1.0, 1.0, 0.0]).abs() < 1e-12);
    }

    #[test]
    fn noise_is_seeded_and_spares_endpoints() {
        let spec = TrajSpec {
            shape: PathShape::Zigzag {
                start: [0.0; 3],
                goal: [10.0, 0.0, 0.0],
                amplitude: 1.0,
                periods: 2.0,
                n: 30,
            },
            noise_std: 0.2,
            seed: 7,
            v0: 1.0,
        };
        let a = generate_trajectory(&spec).unwrap();
        let b = generate_trajectory(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.first().position(), [0.0; 3]);
        assert_eq!(a.last().position(), [10.0, 0.0, 0.0]);
        let other = generate_trajectory(&TrajSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_trajectory(&TrajSpec::line([0.0; 3], [1.0; 3], 1, 1.0)).is_err());
        assert!(generate_trajectory(&TrajSpec::line([0.0; 3], [1.0; 3], 5, -1.0)).is_err());
        let mut s = TrajSpec::line([0.0; 3], [1.0; 3], 5, 1.0);
        s.noise_std = -0.1;
        assert!(generate_trajectory(&s).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let s: TrajSpec = serde_json::from_str(
            r#"{"kind": "arc", "start": [0, 0, 0], "goal": [2, 0, 0], "sag": 1, "n": 3, "v0": 1}"#,
        )
        .unwrap();
        assert!(matches!(s.shape, PathShape::Arc { n: 3, .. }));
        assert_eq!(s.seed, 0);
    }
}
