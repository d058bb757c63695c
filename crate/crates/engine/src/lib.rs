//! Everything between an instruction and an approved trajectory: prompt
//! construction, model transports, the review session, and corpus evaluation.

pub mod dataset;
pub mod llm;
pub mod prompt;
pub mod session;

pub use dataset::{
    generate_trajectory, load_corpus, run_eval, Category, EvalConfig, EvalReport, Sample, TrajSpec,
};
pub use llm::{FixtureStore, LlmConfig, LlmError, MockTransport, Transport, TransportKind};
pub use prompt::{build_prompt, parse_response, PromptRequest, ProposalText};
pub use session::{Session, SessionConfig, SessionError, SessionState, UserVerdict, Verdict};
