use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use trajedit_core::{Scene, SceneObject, Trajectory};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn run(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_trajedit"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

struct Inputs {
    dir: tempfile::TempDir,
}

impl Inputs {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let traj = Trajectory::from_rows(&[
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 5.0, 0.0, 1.0],
            [0.0, 10.0, 0.0, 1.0],
        ])
        .unwrap();
        std::fs::write(dir.path().join("traj.json"), traj.to_json_string()).unwrap();
        let scene = Scene::new(vec![SceneObject::new("box", [3.0, 5.0, 0.0])], None).unwrap();
        std::fs::write(
            dir.path().join("scene.json"),
            serde_json::to_string(&scene).unwrap(),
        )
        .unwrap();
        Inputs { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }

    fn adapt(&self, extra: &[&str], stdin: &str) -> Output {
        let fixtures = data_dir().join("fixtures");
        let (scene, traj, out) = (
            self.path("scene.json"),
            self.path("traj.json"),
            self.path("out.json"),
        );
        let mut args = vec![
            "adapt",
            "--scene",
            &scene,
            "--traj",
            &traj,
            "--out",
            &out,
            "--fixtures",
            fixtures.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        run(&args, stdin)
    }
}

#[test]
fn eval_shipped_corpus_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let corpus = data_dir().join("corpus.jsonl");
    let fixtures = data_dir().join("fixtures");
    let o = run(
        &[
            "eval",
            "--corpus",
            corpus.to_str().unwrap(),
            "--llm",
            "mock",
            "--fixtures",
            fixtures.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(
        stdout.contains("overall") && stdout.contains("100.0%"),
        "{stdout}"
    );
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["overall"]["success_rate"], 1.0);
}

#[test]
fn eval_with_failures_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("fixtures");
    std::fs::create_dir(&empty).unwrap();
    let corpus = data_dir().join("corpus.jsonl");
    let o = run(
        &[
            "eval",
            "--corpus",
            corpus.to_str().unwrap(),
            "--fixtures",
            empty.to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(code(&o), 1);
    assert!(text(&o.stdout).contains("FAIL go_left"));
    assert!(text(&o.stderr).contains("samples failed"));
}

#[test]
fn eval_usage_errors_exit_two() {
    let o = run(&["eval", "--corpus", "/nonexistent/corpus.jsonl"], "");
    assert_eq!(code(&o), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": 1}\n").unwrap();
    let o = run(&["eval", "--corpus", bad.to_str().unwrap()], "");
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("line 1"), "{}", text(&o.stderr));
    assert_eq!(code(&run(&["eval", "--temperature", "9"], "")), 2);
    assert_eq!(code(&run(&["frobnicate"], "")), 2);
    assert_eq!(code(&run(&[], "")), 2);
}

#[test]
fn adapt_auto_approve_writes_trajectory() {
    let inputs = Inputs::new();
    // No --fixture-id: the key is the instruction slug, "go_left".
    let o = inputs.adapt(&["--instruction", "Go left", "--yes"], "");
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let out = Trajectory::load(inputs.path("out.json")).unwrap();
    assert_eq!(out.first().position(), [0.0, 0.0, 0.0]);
    assert!(out.last().x > 0.0);
    assert!(text(&o.stderr).contains("--- proposal 1 ---"));
}

#[test]
fn adapt_reads_feedback_from_stdin() {
    let inputs = Inputs::new();
    let export = inputs.path("session.json");
    let o = inputs.adapt(
        &[
            "--instruction",
            "Go left",
            "--fixture-id",
            "feedback_go_left",
            "--export",
            &export,
        ],
        "That went right.\ny\n",
    );
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&export).unwrap()).unwrap();
    assert_eq!(s["state"], "approved");
    assert_eq!(s["iterations"].as_array().unwrap().len(), 2);
    assert!(s["iterations"][1]["prompt"]
        .as_str()
        .unwrap()
        .contains("That went right."));
    assert!(Trajectory::load(inputs.path("out.json")).unwrap().last().x > 0.0);
}

#[test]
fn adapt_without_approval_exits_one() {
    let inputs = Inputs::new();
    let o = inputs.adapt(&["--instruction", "Go left"], "");
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("not approved"));
    assert!(!Path::new(&inputs.path("out.json")).exists());
}

#[test]
fn adapt_failure_exits_one() {
    let inputs = Inputs::new();
    let o = inputs.adapt(&["--instruction", "Do a backflip", "--yes"], "");
    assert_eq!(code(&o), 1);
    assert!(
        text(&o.stderr).contains("do_a_backflip.0.resp.txt"),
        "{}",
        text(&o.stderr)
    );
}

#[test]
fn adapt_usage_errors_exit_two() {
    let inputs = Inputs::new();
    std::fs::write(inputs.path("traj.json"), r#"{"waypoints": [[0, 0, 0, 1]]}"#).unwrap();
    let o = inputs.adapt(&["--instruction", "Go left", "--yes"], "");
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("traj.json"));
    let o = run(&["adapt", "--instruction", "Go left"], "");
    assert_eq!(code(&o), 2);
}

#[test]
fn render_identity_has_coincident_polylines() {
    let inputs = Inputs::new();
    let svg_path = inputs.path("plot.svg");
    let (traj, scene) = (inputs.path("traj.json"), inputs.path("scene.json"));
    let o = run(
        &[
            "render",
            "--orig",
            &traj,
            "--adapted",
            &traj,
            "--scene",
            &scene,
            "--out",
            &svg_path,
        ],
        "",
    );
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    let points = |class: &str| {
        let tag = format!(r#"class="{class}" points=""#);
        let i = svg.find(&tag).unwrap() + tag.len();
        svg[i..i + svg[i..].find('"').unwrap()].to_string()
    };
    assert_eq!(points("original"), points("adapted"));
    assert!(svg.contains(">box</text>"));
    assert_eq!(
        code(&run(
            &["render", "--orig", &traj, "--out", &svg_path, "--plane", "ab"],
            ""
        )),
        2
    );
}
