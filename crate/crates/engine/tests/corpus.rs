use std::collections::BTreeSet;
use std::path::PathBuf;

use trajedit_core::verify::{self, CheckSpec};
use trajedit_engine::dataset::{
    load_corpus, parse_corpus, run_eval, write_corpus, Category, CorpusError, EvalConfig, Sample,
};
use trajedit_engine::llm::{FixtureStore, MockTransport};
use trajedit_script::{run_source, SandboxLimits};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn corpus() -> Vec<Sample> {
    load_corpus(data_dir().join("corpus.jsonl")).unwrap()
}

fn fixtures() -> FixtureStore {
    FixtureStore::load(data_dir().join("fixtures")).unwrap()
}

fn describe(report: &verify::Report) -> String {
    serde_json::to_string(report).unwrap()
}

#[test]
fn shipped_corpus_coverage() {
    let samples = corpus();
    assert!(samples.len() >= 20, "{} samples", samples.len());
    let cats: BTreeSet<Category> = samples.iter().map(|s| s.category).collect();
    assert_eq!(cats.len(), Category::ALL.len());
    let instructions: Vec<&str> = samples.iter().map(|s| s.instruction.as_str()).collect();
    for want in [
        "Go left",
        "Go right",
        "Move to the top",
        "Go to the bottom",
        "Stay on the bottom",
        "Go faster in the middle of the trajectory",
        "Execute a spiral path when near the goal position",
        "Go further by a distance of 20 after reaching the goal",
        "Reach near the sofa and stop",
        "Walk at a larger distance from the person",
        "Go slower when near to the box",
        "Go faster in the vicinity of the person",
        "Walk at a distance of at least 20 from the person",
        "Traverse at a speed of 5 in the vicinity of the box",
        "Walk at a larger distance from the person, and go slower when near the box",
        "Go to the left by 10 at a speed of 2",
        "Shift the trajectory gradually to reach the red mug",
        "Go left by 20",
        "Keep at least 10 distance from the box",
        "Stop when you reach near the box",
        "Execute a spiral of max radius 2 after reaching the goal",
    ] {
        assert!(instructions.contains(&want), "missing {want:?}");
    }
}

#[test]
fn every_sample_has_a_fixture_and_reference() {
    let store = fixtures();
    for s in corpus() {
        assert!(store.get(s.fixture_key(), 0).is_some(), "{}", s.id);
        let r = data_dir().join(format!("fixtures/{}.reference.adapt", s.fixture_key()));
        assert!(r.exists(), "{}", r.display());
    }
}

#[test]
fn reference_scripts_satisfy_their_checks() {
    let mut failures = Vec::new();
    for s in corpus() {
        let src = std::fs::read_to_string(
            data_dir().join(format!("fixtures/{}.reference.adapt", s.fixture_key())),
        )
        .unwrap();
        let orig = s.trajectory().unwrap();
        let adapted =
            match run_source(&src, &s.scene, &orig, SandboxLimits::default()).into_result() {
                Ok(t) => t,
                Err(e) => {
                    failures.push(format!("{}: {e}", s.id));
                    continue;
                }
            };
        let report = verify::evaluate(&orig, &adapted, &s.scene, &s.checks).unwrap();
        if !report.passed {
            failures.push(format!("{}: {}", s.id, describe(&report)));
        }
        // The unmodified trajectory must not already comply.
        let identity = verify::evaluate(&orig, &orig, &s.scene, &s.checks).unwrap();
        if identity.passed {
            failures.push(format!("{}: identity passes {}", s.id, describe(&identity)));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn mock_eval_passes_everything_deterministically() {
    let samples = corpus();
    let transport = MockTransport::new(fixtures());
    let cfg = EvalConfig::default();
    let a = run_eval(&samples, &cfg, &transport);
    let failures: Vec<String> = a
        .samples
        .iter()
        .filter(|r| !r.passed)
        .map(|r| {
            format!(
                "{}: {:?} {}",
                r.id,
                r.error,
                serde_json::to_string(&r.report).unwrap()
            )
        })
        .collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
    assert!(a.all_passed());
    assert_eq!(a.overall.success_rate, 1.0);
    assert!(a.wall_clock_secs < 30.0);
    let ids: Vec<&str> = a.samples.iter().map(|r| r.id.as_str()).collect();
    let want: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, want);

    let b = run_eval(
        &samples,
        &EvalConfig {
            parallelism: 1,
            ..cfg
        },
        &transport,
    );
    assert!(a.same_results(&b));
    assert_eq!(
        serde_json::to_string(&a.samples).unwrap(),
        serde_json::to_string(&b.samples).unwrap()
    );
}

#[test]
fn identity_policy_fails_displacement_samples() {
    let samples = corpus();
    let mut store = FixtureStore::new();
    for s in &samples {
        store.insert(
            s.fixture_key(),
            0,
            r#"{"high_level_plan": "1) Change nothing.", "code": "modified_trajectory = get_trajectory()"}"#,
        );
    }
    let report = run_eval(&samples, &EvalConfig::default(), &MockTransport::new(store));
    let displaces = |s: &Sample| {
        s.checks.iter().any(|c| {
            matches!(
                c,
                CheckSpec::GoalDisplaced { .. } | CheckSpec::DirectionalShift { .. }
            )
        })
    };
    let mut expected_pass = 0;
    for (s, r) in samples.iter().zip(&report.samples) {
        let orig = s.trajectory().unwrap();
        let oracle = verify::evaluate(&orig, &orig, &s.scene, &s.checks).unwrap();
        assert_eq!(r.passed, oracle.passed, "{}", s.id);
        assert_eq!(r.checks_passed, oracle.passed_count(), "{}", s.id);
        if displaces(s) {
            assert!(!r.passed, "{}", s.id);
        }
        expected_pass += usize::from(oracle.passed);
    }
    assert_eq!(report.overall.passed, expected_pass);
    assert_eq!(report.overall.total, samples.len());
    let sum: usize = report.categories.values().map(|t| t.total).sum();
    assert_eq!(sum, samples.len());
}

#[test]
fn missing_fixture_only_fails_its_sample() {
    let samples = corpus();
    let mut store = FixtureStore::new();
    for (k, v, text) in fixtures().iter() {
        if k != samples[0].fixture_key() {
            store.insert(k, v, text);
        }
    }
    let report = run_eval(&samples, &EvalConfig::default(), &MockTransport::new(store));
    let first = &report.samples[0];
    assert!(!first.passed);
    assert!(
        first.error.as_deref().unwrap().contains("fixture"),
        "{first:?}"
    );
    assert!(report.samples[1..].iter().all(|r| r.passed));
    assert_eq!(report.overall.passed, samples.len() - 1);
}

#[test]
fn corpus_round_trips() {
    let samples = corpus();
    let text = write_corpus(&samples);
    let again = parse_corpus(&text).unwrap();
    assert_eq!(again, samples);
    assert_eq!(write_corpus(&again), text);
}

fn first_record() -> serde_json::Value {
    let text = std::fs::read_to_string(data_dir().join("corpus.jsonl")).unwrap();
    serde_json::from_str(text.lines().next().unwrap()).unwrap()
}

#[test]
fn missing_checks_names_the_line() {
    let good = first_record();
    let mut bad = good.clone();
    bad.as_object_mut().unwrap().remove("checks");
    let mut other = good.clone();
    other["id"] = "other".into();
    let text = format!("{other}\n\n{bad}\n");
    match parse_corpus(&text).unwrap_err() {
        CorpusError::Record { line, message } => {
            assert_eq!(line, 3);
            assert!(message.contains("checks"), "{message}");
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn empty_checks_rejected() {
    let mut bad = first_record();
    bad["checks"] = serde_json::json!([]);
    let e = parse_corpus(&bad.to_string()).unwrap_err().to_string();
    assert!(e.starts_with("line 1:") && e.contains("checks"), "{e}");
}

#[test]
fn bad_field_is_named() {
    let mut bad = first_record();
    bad["traj_spec"]["n"] = serde_json::json!("many");
    let e = parse_corpus(&bad.to_string()).unwrap_err().to_string();
    assert!(e.contains("line 1") && e.contains("traj_spec"), "{e}");

    let mut bad = first_record();
    bad["checks"][1]["type"] = "teleport".into();
    let e = parse_corpus(&bad.to_string()).unwrap_err().to_string();
    assert!(e.contains("checks[1]"), "{e}");
}

#[test]
fn unknown_label_rejected() {
    let mut bad = first_record();
    bad["checks"] =
        serde_json::json!([{"type": "min_clearance", "label": "unicorn", "d": 1, "tol": 0}]);
    let e = parse_corpus(&bad.to_string()).unwrap_err().to_string();
    assert!(e.contains("unicorn"), "{e}");
}

#[test]
fn duplicate_id_rejected() {
    let r = first_record();
    let e = parse_corpus(&format!("{r}\n{r}\n")).unwrap_err();
    assert!(
        matches!(&e, CorpusError::DuplicateId { line: 2, id } if id == "go_left"),
        "{e}"
    );
    assert!(e.to_string().contains("go_left"));
}
