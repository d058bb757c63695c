//! AdaptScript: a small indentation-delimited language for trajectory
//! adaptation policies, run in a step-budgeted sandbox.
//!
//! ```
//! use trajedit_core::{Scene, Trajectory};
//! use trajedit_script::{run_source, SandboxLimits};
//!
//! let t = Trajectory::from_rows(&[[0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 1.0]]).unwrap();
//! let src = "t = get_trajectory()\nfor i in range(len(t)):\n    t[i][2] += 1\nmodified_trajectory = t\n";
//! let out = run_source(src, &Scene::empty(), &t, SandboxLimits::default());
//! assert_eq!(out.modified().unwrap().last().z, 1.0);
//! ```

pub mod ast;
pub mod builtins;
pub mod error;
pub mod interp;
pub mod lexer;
pub mod parser;

pub use ast::Program;
pub use builtins::{Builtin, BUILTINS};
pub use error::{ErrorKind, ScriptError};
pub use interp::{execute, ExecOutcome, SandboxLimits, OUTPUT_VARIABLE};
pub use lexer::tokenize;
pub use parser::parse;

use trajedit_core::{Scene, Trajectory};

/// Tokenizes and parses `source`.
pub fn compile(source: &str) -> Result<Program, ScriptError> {
    parse(&tokenize(source)?)
}

/// Compiles and executes `source`; compile errors are reported as outcomes.
pub fn run_source(
    source: &str,
    scene: &Scene,
    traj: &Trajectory,
    limits: SandboxLimits,
) -> ExecOutcome {
    match compile(source) {
        Ok(p) => execute(&p, scene, traj, limits),
        Err(e) => ExecOutcome::Error(e),
    }
}
