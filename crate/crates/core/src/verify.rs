//! Machine-checkable instruction compliance.
//!
//! Every corpus sample carries a list of [`CheckSpec`]s authored for its
//! instruction. [`evaluate`] measures each one against the original and
//! adapted trajectories and reports pass/fail with the measured value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Vec3};
use crate::metrics::{discrete_frechet, roughness};
use crate::model::{Scene, Trajectory};
use crate::transform::resample;

/// Resolution used before direction, smoothness and shape comparisons, so
/// the measurement does not depend on how many waypoints the adaptation kept.
pub const RESAMPLE_K: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    StartFixed {
        tol: f64,
    },
    GoalFixed {
        tol: f64,
    },
    GoalDisplaced {
        dir: Vec3,
        amount: f64,
        tol: f64,
    },
    DirectionalShift {
        dir: Vec3,
        min_amount: f64,
    },
    MinClearance {
        label: String,
        d: f64,
        tol: f64,
    },
    MaxSpeedWithin {
        label: String,
        radius: f64,
        vmax: f64,
    },
    MinSpeedWithin {
        label: String,
        radius: f64,
        vmin: f64,
    },
    SpeedReducedWithin {
        label: String,
        radius: f64,
    },
    SpeedIncreasedWithin {
        label: String,
        radius: f64,
    },
    StopsAtEnd {
        vtol: f64,
    },
    TruncatedNear {
        label: String,
        tol: f64,
    },
    Smoothness {
        max_roughness: f64,
    },
    ShapeSimilarity {
        eps_rel: f64,
    },
}

impl CheckSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CheckSpec::StartFixed { .. } => "start_fixed",
            CheckSpec::GoalFixed { .. } => "goal_fixed",
            CheckSpec::GoalDisplaced { .. } => "goal_displaced",
            CheckSpec::DirectionalShift { .. } => "directional_shift",
            CheckSpec::MinClearance { .. } => "min_clearance",
            CheckSpec::MaxSpeedWithin { .. } => "max_speed_within",
            CheckSpec::MinSpeedWithin { .. } => "min_speed_within",
            CheckSpec::SpeedReducedWithin { .. } => "speed_reduced_within",
            CheckSpec::SpeedIncreasedWithin { .. } => "speed_increased_within",
            CheckSpec::StopsAtEnd { .. } => "stops_at_end",
            CheckSpec::TruncatedNear { .. } => "truncated_near",
            CheckSpec::Smoothness { .. } => "smoothness",
            CheckSpec::ShapeSimilarity { .. } => "shape_similarity",
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            CheckSpec::MinClearance { label, .. }
            | CheckSpec::MaxSpeedWithin { label, .. }
            | CheckSpec::MinSpeedWithin { label, .. }
            | CheckSpec::SpeedReducedWithin { label, .. }
            | CheckSpec::SpeedIncreasedWithin { label, .. }
            | CheckSpec::TruncatedNear { label, .. } => Some(label),
            _ => None,
        }
    }

    /// Checks the numeric invariants: tolerances and radii non-negative,
    /// direction vectors nonzero, everything finite.
    pub fn validate(&self) -> Result<(), VerifyError> {
        let bad = |field: &str, why: &str| {
            Err(VerifyError::InvalidCheck {
                check: self.name().to_string(),
                message: format!("{field} {why}"),
            })
        };
        let nonneg = |field: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                bad(field, "must be a finite non-negative number")
            }
        };
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                bad(field, "must be a finite positive number")
            }
        };
        let direction = |dir: &Vec3| {
            if geometry::normalize(*dir).is_some() {
                Ok(())
            } else {
                bad("dir", "must be a finite nonzero vector")
            }
        };
        match self {
            CheckSpec::StartFixed { tol } | CheckSpec::GoalFixed { tol } => nonneg("tol", *tol),
            CheckSpec::GoalDisplaced { dir, amount, tol } => {
                direction(dir)?;
                nonneg("amount", *amount)?;
                nonneg("tol", *tol)
            }
            CheckSpec::DirectionalShift { dir, min_amount } => {
                direction(dir)?;
                if min_amount.is_finite() {
                    Ok(())
                } else {
                    bad("min_amount", "must be finite")
                }
            }
            CheckSpec::MinClearance { d, tol, .. } => {
                nonneg("d", *d)?;
                nonneg("tol", *tol)
            }
            CheckSpec::MaxSpeedWithin { radius, vmax, .. } => {
                positive("radius", *radius)?;
                nonneg("vmax", *vmax)
            }
            CheckSpec::MinSpeedWithin { radius, vmin, .. } => {
                positive("radius", *radius)?;
                nonneg("vmin", *vmin)
            }
            CheckSpec::SpeedReducedWithin { radius, .. }
            | CheckSpec::SpeedIncreasedWithin { radius, .. } => positive("radius", *radius),
            CheckSpec::StopsAtEnd { vtol } => nonneg("vtol", *vtol),
            CheckSpec::TruncatedNear { tol, .. } => nonneg("tol", *tol),
            CheckSpec::Smoothness { max_roughness } => nonneg("max_roughness", *max_roughness),
            CheckSpec::ShapeSimilarity { eps_rel } => nonneg("eps_rel", *eps_rel),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("unknown object label(s) in checks: {}", .0.join(", "))]
    UnknownLabels(Vec<String>),
    #[error("invalid {check} check: {message}")]
    InvalidCheck { check: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub spec: CheckSpec,
    pub passed: bool,
    /// The quantity compared against the threshold; `None` when the check
    /// had nothing to measure (e.g. no waypoint inside a speed region).
    pub measured: Option<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub results: Vec<CheckResult>,
    pub passed: bool,
}

impl Report {
    pub fn passed_count(&self) -> usize {
        self.results.iter().filter(|r| r.passed).count()
    }
}

/// Validate every check against the scene without measuring anything.
pub fn validate_checks(scene: &Scene, checks: &[CheckSpec]) -> Result<(), VerifyError> {
    for c in checks {
        c.validate()?;
    }
    let mut missing: Vec<String> = Vec::new();
    for label in checks.iter().filter_map(CheckSpec::label) {
        if scene.get(label).is_none() && !missing.iter().any(|m| m == label) {
            missing.push(label.to_string());
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(VerifyError::UnknownLabels(missing))
    }
}

pub fn evaluate(
    original: &Trajectory,
    adapted: &Trajectory,
    scene: &Scene,
    checks: &[CheckSpec],
) -> Result<Report, VerifyError> {
    validate_checks(scene, checks)?;
    let mut ctx = Ctx {
        original,
        adapted,
        scene,
        resampled: None,
    };
    let results: Vec<CheckResult> = checks.iter().map(|c| ctx.check(c)).collect();
    let passed = results.iter().all(|r| r.passed);
    Ok(Report { results, passed })
}

struct Ctx<'a> {
    original: &'a Trajectory,
    adapted: &'a Trajectory,
    scene: &'a Scene,
    resampled: Option<(Trajectory, Trajectory)>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn speeds_within(t: &Trajectory, center: Vec3, radius: f64) -> Vec<f64> {
    t.waypoints()
        .iter()
        .filter(|w| geometry::dist(w.position(), center) <= radius)
        .map(|w| w.v)
        .collect()
}

fn result(spec: &CheckSpec, measured: Option<f64>, threshold: f64, passed: bool) -> CheckResult {
    CheckResult {
        spec: spec.clone(),
        passed,
        measured,
        threshold,
    }
}

impl Ctx<'_> {
    fn center(&self, label: &str) -> Vec3 {
        self.scene
            .get(label)
            .expect("labels validated before evaluation")
            .position
    }

    fn resampled(&mut self) -> &(Trajectory, Trajectory) {
        self.resampled.get_or_insert_with(|| {
            (
                resample(self.original, RESAMPLE_K).expect("K >= 2"),
                resample(self.adapted, RESAMPLE_K).expect("K >= 2"),
            )
        })
    }

    fn check(&mut self, spec: &CheckSpec) -> CheckResult {
        let orig = self.original;
        let adapted = self.adapted;
        match spec {
            CheckSpec::StartFixed { tol } => {
                let m = geometry::dist(adapted.first().position(), orig.first().position());
                result(spec, Some(m), *tol, m <= *tol)
            }
            CheckSpec::GoalFixed { tol } => {
                let m = geometry::dist(adapted.last().position(), orig.last().position());
                result(spec, Some(m), *tol, m <= *tol)
            }
            CheckSpec::GoalDisplaced { dir, amount, tol } => {
                let unit = geometry::normalize(*dir).expect("validated");
                let target = geometry::add(orig.last().position(), geometry::scale(unit, *amount));
                let m = geometry::dist(adapted.last().position(), target);
                result(spec, Some(m), *tol, m <= *tol)
            }
            CheckSpec::DirectionalShift { dir, min_amount } => {
                let unit = geometry::normalize(*dir).expect("validated");
                let (ro, ra) = self.resampled();
                let proj = |t: &Trajectory| {
                    mean(
                        t.waypoints()
                            .iter()
                            .map(|w| geometry::dot(w.position(), unit)),
                    )
                    .expect("nonempty")
                };
                let m = proj(ra) - proj(ro);
                result(spec, Some(m), *min_amount, m >= *min_amount)
            }
            CheckSpec::MinClearance { label, d, tol } => {
                let c = self.center(label);
                let m = adapted
                    .waypoints()
                    .iter()
                    .map(|w| geometry::dist(w.position(), c))
                    .fold(f64::INFINITY, f64::min);
                result(spec, Some(m), d - tol, m >= d - tol)
            }
            CheckSpec::MaxSpeedWithin {
                label,
                radius,
                vmax,
            } => {
                let inside = speeds_within(adapted, self.center(label), *radius);
                let m = inside.iter().copied().reduce(f64::max);
                result(spec, m, *vmax, m.is_some_and(|v| v <= *vmax))
            }
            CheckSpec::MinSpeedWithin {
                label,
                radius,
                vmin,
            } => {
                let inside = speeds_within(adapted, self.center(label), *radius);
                let m = inside.iter().copied().reduce(f64::min);
                result(spec, m, *vmin, m.is_some_and(|v| v >= *vmin))
            }
            CheckSpec::SpeedReducedWithin { label, radius }
            | CheckSpec::SpeedIncreasedWithin { label, radius } => {
                let c = self.center(label);
                let before = mean(speeds_within(orig, c, *radius).into_iter());
                let after = mean(speeds_within(adapted, c, *radius).into_iter());
                let m = before.zip(after).map(|(b, a)| a - b);
                let reduce = matches!(spec, CheckSpec::SpeedReducedWithin { .. });
                let passed = m.is_some_and(|delta| if reduce { delta < 0.0 } else { delta > 0.0 });
                result(spec, m, 0.0, passed)
            }
            CheckSpec::StopsAtEnd { vtol } => {
                let m = adapted.last().v;
                result(spec, Some(m), *vtol, m <= *vtol)
            }
            CheckSpec::TruncatedNear { label, tol } => {
                let c = self.center(label);
                let closest = orig
                    .waypoints()
                    .iter()
                    .map(|w| geometry::dist(w.position(), c))
                    .fold(f64::INFINITY, f64::min);
                let m = geometry::dist(adapted.last().position(), c) - closest;
                result(spec, Some(m), *tol, m <= *tol)
            }
            CheckSpec::Smoothness { max_roughness } => {
                let (_, ra) = self.resampled();
                let m = roughness(ra).expect("K >= 3");
                result(spec, Some(m), *max_roughness, m <= *max_roughness)
            }
            CheckSpec::ShapeSimilarity { eps_rel } => {
                let limit = eps_rel * orig.bbox_diagonal();
                let (ro, ra) = self.resampled();
                let m = discrete_frechet(ro, ra);
                result(spec, Some(m), limit, m <= limit)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlendMode, SceneObject};
    use crate::transform::{enforce_min_distance, translate_blend, truncate_at_nearest};

    fn line() -> Trajectory {
        let rows: Vec<[f64; 4]> = (0..21).map(|i| [i as f64, 0.0, 0.0, 1.0]).collect();
        Trajectory::from_rows(&rows).unwrap()
    }

    fn scene() -> Scene {
        Scene::new(vec![SceneObject::new("box", [10.0, 3.0, 0.0])], None).unwrap()
    }

    #[test]
    fn identity_fails_goal_displacement() {
        let t = line();
        let checks = [CheckSpec::GoalDisplaced {
            dir: [1.0, 0.0, 0.0],
            amount: 20.0,
            tol: 0.5,
        }];
        let r = evaluate(&t, &t, &scene(), &checks).unwrap();
        assert!(!r.passed);
        assert_eq!(r.results[0].measured, Some(20.0));
    }

    #[test]
    fn uniform_translation_satisfies_displacement() {
        let t = line();
        let moved = translate_blend(&t, [20.0, 0.0, 0.0], BlendMode::Uniform).unwrap();
        let checks = [
            CheckSpec::GoalDisplaced {
                dir: [1.0, 0.0, 0.0],
                amount: 20.0,
                tol: 0.5,
            },
            CheckSpec::DirectionalShift {
                dir: [1.0, 0.0, 0.0],
                min_amount: 15.0,
            },
        ];
        let r = evaluate(&t, &moved, &scene(), &checks).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.results[1].measured.unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn clearance_after_enforcement() {
        let t = line();
        let adapted = enforce_min_distance(&t, [10.0, 3.0, 0.0], 10.0).unwrap();
        let checks = [CheckSpec::MinClearance {
            label: "box".into(),
            d: 10.0,
            tol: 1e-5,
        }];
        assert!(evaluate(&t, &adapted, &scene(), &checks).unwrap().passed);
        assert!(!evaluate(&t, &t, &scene(), &checks).unwrap().passed);
    }

    #[test]
    fn stops_at_end_after_truncation() {
        let t = line();
        let adapted = truncate_at_nearest(&t, [10.0, 3.0, 0.0], 3).unwrap();
        let checks = [
            CheckSpec::StopsAtEnd { vtol: 1e-9 },
            CheckSpec::TruncatedNear {
                label: "box".into(),
                tol: 1e-9,
            },
        ];
        let r = evaluate(&t, &adapted, &scene(), &checks).unwrap();
        assert!(r.passed);
        assert_eq!(r.results[0].measured, Some(0.0));
    }

    #[test]
    fn vacuous_speed_region_fails() {
        let t = line();
        let checks = [
            CheckSpec::MaxSpeedWithin {
                label: "box".into(),
                radius: 1.0,
                vmax: 10.0,
            },
            CheckSpec::SpeedReducedWithin {
                label: "box".into(),
                radius: 1.0,
            },
        ];
        let r = evaluate(&t, &t, &scene(), &checks).unwrap();
        assert!(r.results.iter().all(|c| !c.passed && c.measured.is_none()));
    }

    #[test]
    fn unknown_label_is_a_configuration_error() {
        let t = line();
        let checks = [
            CheckSpec::MinClearance {
                label: "sofa".into(),
                d: 1.0,
                tol: 0.0,
            },
            CheckSpec::TruncatedNear {
                label: "lamp".into(),
                tol: 0.0,
            },
        ];
        let err = evaluate(&t, &t, &scene(), &checks).unwrap_err();
        assert_eq!(
            err,
            VerifyError::UnknownLabels(vec!["sofa".into(), "lamp".into()])
        );
    }

    #[test]
    fn invalid_check_rejected() {
        let t = line();
        let checks = [CheckSpec::DirectionalShift {
            dir: [0.0; 3],
            min_amount: 1.0,
        }];
        assert!(matches!(
            evaluate(&t, &t, &scene(), &checks),
            Err(VerifyError::InvalidCheck { .. })
        ));
    }

    #[test]
    fn check_wire_format() {
        let c: CheckSpec = serde_json::from_str(
            r#"{"type": "min_clearance", "label": "box", "d": 10, "tol": 0.001}"#,
        )
        .unwrap();
        assert_eq!(
            c,
            CheckSpec::MinClearance {
                label: "box".into(),
                d: 10.0,
                tol: 0.001
            }
        );
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["type"], "min_clearance");
    }
}
