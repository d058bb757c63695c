//! Command-line entry points. Exit codes: 0 success, 1 adaptation or
//! evaluation failure, 2 usage or input error.

use std::io::{self, BufRead, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use trajedit_core::{Scene, Trajectory};
use trajedit_engine::dataset::{load_corpus, run_eval, EvalConfig, EvalReport};
use trajedit_engine::llm::{transport_for, LlmConfig, Transport, TransportKind};
use trajedit_engine::session::{Session, SessionConfig, SessionState, UserVerdict};

use crate::api::{self, AppState, ServiceConfig};
use crate::fixture_slug;
use crate::render::{render_svg, Plane};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "trajedit",
    version,
    about = "Adapt robot trajectories from natural-language instructions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct LlmArgs {
    /// Where proposals come from.
    #[arg(long, default_value = "mock")]
    pub llm: TransportKind,
    /// Directory of `<id>.<iteration>.resp.txt` files for the mock transport.
    #[arg(long, default_value = "data/fixtures")]
    pub fixtures: PathBuf,
    #[arg(long, default_value = "gpt-4o")]
    pub model: String,
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    /// OpenAI-compatible base URL; defaults to TRAJEDIT_BASE_URL.
    #[arg(long, default_value = "")]
    pub endpoint: String,
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
    /// Automatic retries after a parse or script error.
    #[arg(long, default_value_t = 1)]
    pub auto_repair: u32,
    #[arg(long, default_value_t = 8)]
    pub max_iterations: usize,
}

impl LlmArgs {
    fn llm_config(&self) -> LlmConfig {
        LlmConfig {
            transport: self.llm,
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            temperature: self.temperature,
            timeout_secs: self.timeout,
            max_retries: self.retries,
        }
    }

    fn session_config(&self) -> SessionConfig {
        SessionConfig {
            llm: self.llm_config(),
            auto_repair_budget: self.auto_repair,
            max_iterations: self.max_iterations,
            ..SessionConfig::default()
        }
    }

    fn transport(&self) -> Result<Arc<dyn Transport>, String> {
        if self.max_iterations == 0 {
            return Err("--max-iterations must be at least 1".into());
        }
        transport_for(&self.llm_config(), Some(&self.fixtures)).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Adapt one trajectory, asking for approval on the terminal.
    Adapt {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        instruction: String,
        /// Fixture key for the mock transport; defaults to the instruction slug.
        #[arg(long)]
        fixture_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Approve the first proposal without asking.
        #[arg(long)]
        yes: bool,
        /// Also write the full session record here.
        #[arg(long)]
        export: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Run every corpus sample and score it.
    Eval {
        #[arg(long, default_value = "data/corpus.jsonl")]
        corpus: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Start the HTTP review service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "data/corpus.jsonl")]
        corpus: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Draw original (blue) and adapted (red) paths as SVG.
    Render {
        #[arg(long)]
        orig: PathBuf,
        #[arg(long)]
        adapted: Option<PathBuf>,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "xy")]
        plane: Plane,
    },
}

/// An error plus the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn failed(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_FAILED,
        message: message.into(),
    }
}

fn read_trajectory(path: &Path) -> Result<Trajectory, Failure> {
    Trajectory::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_scene(path: &Path) -> Result<Scene, Failure> {
    Scene::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| failed(format!("cannot write {}: {e}", path.display())))
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Adapt {
            scene,
            traj,
            instruction,
            fixture_id,
            out,
            yes,
            export,
            llm,
        } => {
            let scene = read_scene(&scene)?;
            let original = read_trajectory(&traj)?;
            let transport = llm.transport().map_err(usage)?;
            let fixture_id = fixture_id.unwrap_or_else(|| fixture_slug(&instruction));
            let stdin = io::stdin();
            let interactive = stdin.is_terminal();
            let mut input = stdin.lock();
            let session = adapt(
                AdaptRequest {
                    instruction,
                    scene,
                    original,
                    fixture_id,
                    config: llm.session_config(),
                    auto_approve: yes,
                    interactive,
                },
                transport.as_ref(),
                &mut input,
                &mut io::stderr(),
            )?;
            if let Some(path) = export {
                write_file(&path, &session.export_json())?;
            }
            match session.final_trajectory() {
                Some(t) => {
                    write_file(&out, &(t.to_json_string() + "\n"))?;
                    println!(
                        "approved after {} iteration(s); wrote {}",
                        session.iterations.len(),
                        out.display()
                    );
                    Ok(())
                }
                None if session.state == SessionState::Failed => Err(failed(format!(
                    "adaptation failed: {}",
                    session
                        .latest_error()
                        .unwrap_or_else(|| "unknown error".into())
                ))),
                None => Err(failed("proposal not approved")),
            }
        }
        Command::Eval {
            corpus,
            report,
            parallelism,
            llm,
        } => {
            let samples =
                load_corpus(&corpus).map_err(|e| usage(format!("{}: {e}", corpus.display())))?;
            let transport = llm.transport().map_err(usage)?;
            let cfg = EvalConfig {
                session: llm.session_config(),
                parallelism,
            };
            let result = run_eval(&samples, &cfg, transport.as_ref());
            print!("{}", summary(&result));
            if let Some(path) = report {
                let text = serde_json::to_string_pretty(&result).expect("report serializes");
                write_file(&path, &(text + "\n"))?;
            }
            if result.all_passed() {
                Ok(())
            } else {
                Err(failed(format!(
                    "{} of {} samples failed",
                    result.overall.total - result.overall.passed,
                    result.overall.total
                )))
            }
        }
        Command::Serve {
            host,
            port,
            corpus,
            llm,
        } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| usage(format!("bad address {host}:{port}: {e}")))?;
            let samples = if corpus.exists() {
                load_corpus(&corpus).map_err(|e| usage(format!("{}: {e}", corpus.display())))?
            } else {
                eprintln!(
                    "warning: {} not found, serving an empty corpus",
                    corpus.display()
                );
                Vec::new()
            };
            let transport = llm.transport().map_err(usage)?;
            let state = AppState::new(ServiceConfig {
                transport,
                session: llm.session_config(),
                corpus: samples,
            });
            let rt = tokio::runtime::Runtime::new().map_err(|e| failed(e.to_string()))?;
            rt.block_on(api::serve(state, addr))
                .map_err(|e| failed(format!("server error: {e}")))
        }
        Command::Render {
            orig,
            adapted,
            scene,
            out,
            plane,
        } => {
            let original = read_trajectory(&orig)?;
            let adapted = adapted.as_deref().map(read_trajectory).transpose()?;
            let scene = match scene {
                Some(p) => read_scene(&p)?,
                None => Scene::empty(),
            };
            write_file(
                &out,
                &render_svg(&original, adapted.as_ref(), &scene, plane),
            )
        }
    }
}

pub struct AdaptRequest {
    pub instruction: String,
    pub scene: Scene,
    pub original: Trajectory,
    pub fixture_id: String,
    pub config: SessionConfig,
    pub auto_approve: bool,
    /// Only changes the prompt text.
    pub interactive: bool,
}

/// Runs a session to approval, failure, or until the reviewer gives up.
///
/// Each proposal is shown on `log`; a reply of `y`/`yes` approves, an empty
/// line or end of input stops, anything else is sent back as feedback.
pub fn adapt(
    req: AdaptRequest,
    transport: &dyn Transport,
    input: &mut dyn BufRead,
    log: &mut dyn Write,
) -> Result<Session, Failure> {
    let mut session = Session::start(
        "cli",
        req.instruction,
        req.scene,
        req.original,
        req.fixture_id,
        req.config,
        transport,
    )
    .map_err(|e| usage(e.to_string()))?;
    while session.state == SessionState::Proposed {
        let it = session.latest().expect("proposed session has an iteration");
        let p = it.proposal.as_ref().expect("proposed iteration parsed");
        let _ = writeln!(log, "--- proposal {} ---", session.iterations.len());
        let _ = writeln!(log, "{}", p.high_level_plan);
        let _ = writeln!(log, "--- code ---\n{}", p.code.trim_end());
        if req.auto_approve {
            session
                .record_verdict(UserVerdict::Approve)
                .map_err(|e| failed(e.to_string()))?;
            break;
        }
        if req.interactive {
            let _ = write!(
                log,
                "approve? [y = approve, text = feedback, empty = quit] "
            );
        }
        let _ = log.flush();
        let mut line = String::new();
        let n = input
            .read_line(&mut line)
            .map_err(|e| failed(e.to_string()))?;
        let reply = line.trim();
        if n == 0 || reply.is_empty() {
            break;
        }
        let verdict = if matches!(reply.to_ascii_lowercase().as_str(), "y" | "yes") {
            UserVerdict::Approve
        } else {
            UserVerdict::Feedback(reply.to_string())
        };
        session
            .submit_verdict(verdict, transport)
            .map_err(|e| failed(e.to_string()))?;
    }
    if session.state == SessionState::Failed {
        let _ = writeln!(
            log,
            "session failed: {}",
            session.latest_error().unwrap_or_default()
        );
    }
    Ok(session)
}

pub fn summary(report: &EvalReport) -> String {
    let mut out = String::new();
    for r in &report.samples {
        let status = if r.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!(
            "{status} {:<32} {}/{} checks",
            r.id, r.checks_passed, r.checks_total
        ));
        if let Some(e) = &r.error {
            out.push_str(&format!("  ({e})"));
        }
        out.push('\n');
    }
    for (cat, t) in &report.categories {
        out.push_str(&format!(
            "{:<16} {:>3}/{:<3} {:>6.1}%\n",
            cat.as_str(),
            t.passed,
            t.total,
            100.0 * t.success_rate
        ));
    }
    out.push_str(&format!(
        "{:<16} {:>3}/{:<3} {:>6.1}%  in {:.2}s\n",
        "overall",
        report.overall.passed,
        report.overall.total,
        100.0 * report.overall.success_rate,
        report.wall_clock_secs
    ));
    out
}
