//! The review loop: prompt, generate, preview, then approve or give feedback.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajedit_core::{Scene, Trajectory};
use trajedit_script::{run_source, ExecOutcome, SandboxLimits};

use crate::llm::{LlmConfig, RequestContext, Transport};
use crate::prompt::{
    build_prompt, parse_response, ParseFailure, PromptOverrides, PromptRequest, ProposalText,
};

pub const REPAIR_PREFIX: &str = "EXECUTION ERROR:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitingLlm,
    Proposed,
    Approved,
    Failed,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::AwaitingLlm => "awaiting_llm",
            SessionState::Proposed => "proposed",
            SessionState::Approved => "approved",
            SessionState::Failed => "failed",
        }
    }

    pub fn can_become(self, next: SessionState) -> bool {
        use SessionState::*;
        matches!(
            (self, next),
            (AwaitingLlm, Proposed)
                | (AwaitingLlm, Failed)
                | (Proposed, Approved)
                | (Proposed, AwaitingLlm)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Approved | SessionState::Failed)
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum Verdict {
    Pending,
    Approved,
    Feedback(String),
    AutoRepair(String),
}

/// What a reviewer can say about a proposal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserVerdict {
    Approve,
    Feedback(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub prompt: String,
    /// Raw model output; absent when the transport failed.
    pub response: Option<String>,
    pub proposal: Option<ProposalText>,
    pub parse_error: Option<ParseFailure>,
    pub transport_error: Option<String>,
    /// Present iff the response parsed.
    pub outcome: Option<ExecOutcome>,
    pub verdict: Verdict,
}

impl Iteration {
    pub fn adapted(&self) -> Option<&Trajectory> {
        self.outcome.as_ref().and_then(ExecOutcome::modified)
    }

    /// One-line description of what went wrong, if anything.
    pub fn error_text(&self) -> Option<String> {
        if let Some(e) = &self.transport_error {
            return Some(e.clone());
        }
        if let Some(e) = &self.parse_error {
            return Some(e.to_string());
        }
        self.outcome
            .as_ref()
            .and_then(ExecOutcome::error)
            .map(ToString::to_string)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub llm: LlmConfig,
    pub auto_repair_budget: u32,
    pub max_iterations: usize,
    pub limits: SandboxLimits,
    pub overrides: PromptOverrides,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            llm: LlmConfig::default(),
            auto_repair_budget: 1,
            max_iterations: 8,
            limits: SandboxLimits::default(),
            overrides: PromptOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: SessionState,
    pub to: SessionState,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("invalid state: cannot {action} a session that is {state}")]
    InvalidState {
        state: SessionState,
        action: &'static str,
    },
    #[error("feedback must not be empty")]
    EmptyFeedback,
    #[error("instruction must not be empty")]
    EmptyInstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub instruction: String,
    pub scene: Scene,
    pub original: Trajectory,
    /// Key under which mock fixtures for this session are stored.
    pub fixture_id: String,
    pub config: SessionConfig,
    pub iterations: Vec<Iteration>,
    pub state: SessionState,
    pub transitions: Vec<Transition>,
    /// Why the session failed, when it did.
    pub error: Option<String>,
}

impl Session {
    /// A session waiting for its first generation.
    pub fn new(
        id: impl Into<String>,
        instruction: impl Into<String>,
        scene: Scene,
        original: Trajectory,
        fixture_id: impl Into<String>,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        let instruction = instruction.into();
        if instruction.trim().is_empty() {
            return Err(SessionError::EmptyInstruction);
        }
        Ok(Self {
            id: id.into(),
            instruction,
            scene,
            original,
            fixture_id: fixture_id.into(),
            config,
            iterations: Vec::new(),
            state: SessionState::AwaitingLlm,
            transitions: Vec::new(),
            error: None,
        })
    }

    /// Creates the session and runs the first generation.
    pub fn start(
        id: impl Into<String>,
        instruction: impl Into<String>,
        scene: Scene,
        original: Trajectory,
        fixture_id: impl Into<String>,
        config: SessionConfig,
        transport: &dyn Transport,
    ) -> Result<Self, SessionError> {
        let mut s = Self::new(id, instruction, scene, original, fixture_id, config)?;
        s.generate_proposal(transport)?;
        Ok(s)
    }

    fn set_state(&mut self, to: SessionState) {
        assert!(
            self.state.can_become(to),
            "illegal transition {} -> {}",
            self.state,
            to
        );
        self.transitions.push(Transition {
            from: self.state,
            to,
        });
        self.state = to;
    }

    fn fail(&mut self, reason: String) {
        self.error = Some(reason);
        self.set_state(SessionState::Failed);
    }

    /// Human feedback and repair messages, in order.
    pub fn feedback_history(&self) -> Vec<String> {
        self.iterations
            .iter()
            .filter_map(|it| match &it.verdict {
                Verdict::Feedback(s) | Verdict::AutoRepair(s) => Some(s.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn prompt_request(&self) -> PromptRequest {
        PromptRequest {
            instruction: self.instruction.clone(),
            scene: self.scene.clone(),
            feedback_history: self.feedback_history(),
            overrides: self.config.overrides.clone(),
        }
    }

    /// Runs prompt → model → parse → sandbox until a proposal executes, the
    /// repair budget runs out, or the iteration cap is hit.
    pub fn generate_proposal(&mut self, transport: &dyn Transport) -> Result<(), SessionError> {
        if self.state != SessionState::AwaitingLlm {
            return Err(SessionError::InvalidState {
                state: self.state,
                action: "generate a proposal for",
            });
        }
        let mut repairs_left = self.config.auto_repair_budget;
        loop {
            if self.iterations.len() >= self.config.max_iterations {
                self.fail(format!(
                    "iteration cap of {} reached",
                    self.config.max_iterations
                ));
                return Ok(());
            }
            let prompt = build_prompt(&self.prompt_request());
            let ctx = RequestContext {
                sample_id: self.fixture_id.clone(),
                iteration: self.iterations.len(),
            };
            let mut it = Iteration {
                prompt,
                response: None,
                proposal: None,
                parse_error: None,
                transport_error: None,
                outcome: None,
                verdict: Verdict::Pending,
            };
            let text = match transport.complete(&it.prompt, &ctx) {
                Ok(t) => t,
                Err(e) => {
                    let msg = e.to_string();
                    it.transport_error = Some(msg.clone());
                    self.iterations.push(it);
                    self.fail(msg);
                    return Ok(());
                }
            };
            it.response = Some(text.clone());
            let repair_msg = match parse_response(&text) {
                Err(pf) => {
                    let msg = format!(
                        "{REPAIR_PREFIX} {}. Respond with a single JSON object with keys \"high_level_plan\" and \"code\".",
                        pf.message
                    );
                    it.parse_error = Some(pf);
                    msg
                }
                Ok(proposal) => {
                    let outcome = run_source(
                        &proposal.code,
                        &self.scene,
                        &self.original,
                        self.config.limits,
                    );
                    it.proposal = Some(proposal);
                    match &outcome {
                        ExecOutcome::Modified(_) => {
                            it.outcome = Some(outcome);
                            self.iterations.push(it);
                            self.error = None;
                            self.set_state(SessionState::Proposed);
                            return Ok(());
                        }
                        ExecOutcome::Error(e) => {
                            let msg = format!("{REPAIR_PREFIX} {e}");
                            it.outcome = Some(outcome);
                            msg
                        }
                    }
                }
            };
            if repairs_left == 0 {
                let reason = it.error_text().unwrap_or_else(|| repair_msg.clone());
                self.iterations.push(it);
                self.fail(reason);
                return Ok(());
            }
            repairs_left -= 1;
            it.verdict = Verdict::AutoRepair(repair_msg);
            self.iterations.push(it);
        }
    }

    /// Records the reviewer's verdict. Feedback moves the session back to
    /// `awaiting_llm`; the caller then runs [`Session::generate_proposal`].
    pub fn record_verdict(&mut self, verdict: UserVerdict) -> Result<(), SessionError> {
        if self.state != SessionState::Proposed {
            return Err(SessionError::InvalidState {
                state: self.state,
                action: "submit a verdict on",
            });
        }
        if let UserVerdict::Feedback(f) = &verdict {
            if f.trim().is_empty() {
                return Err(SessionError::EmptyFeedback);
            }
        }
        let last = self
            .iterations
            .last_mut()
            .expect("a proposed session has an iteration");
        match verdict {
            UserVerdict::Approve => {
                last.verdict = Verdict::Approved;
                self.set_state(SessionState::Approved);
            }
            UserVerdict::Feedback(f) => {
                last.verdict = Verdict::Feedback(f.trim().to_string());
                self.set_state(SessionState::AwaitingLlm);
            }
        }
        Ok(())
    }

    /// [`Session::record_verdict`] followed by regeneration when needed.
    pub fn submit_verdict(
        &mut self,
        verdict: UserVerdict,
        transport: &dyn Transport,
    ) -> Result<(), SessionError> {
        self.record_verdict(verdict)?;
        if self.state == SessionState::AwaitingLlm {
            self.generate_proposal(transport)?;
        }
        Ok(())
    }

    pub fn latest(&self) -> Option<&Iteration> {
        self.iterations.last()
    }

    /// The preview on the last iteration, if it executed.
    pub fn latest_adapted(&self) -> Option<&Trajectory> {
        self.latest().and_then(Iteration::adapted)
    }

    /// The approved trajectory.
    pub fn final_trajectory(&self) -> Option<&Trajectory> {
        if self.state == SessionState::Approved {
            self.latest_adapted()
        } else {
            None
        }
    }

    pub fn latest_error(&self) -> Option<String> {
        if let Some(e) = &self.error {
            return Some(e.clone());
        }
        self.latest().and_then(Iteration::error_text)
    }

    pub fn export_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_export(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Re-runs this session's inputs and human verdicts against `transport`.
    pub fn replay(&self, transport: &dyn Transport) -> Result<Session, SessionError> {
        let mut s = Session::start(
            self.id.clone(),
            self.instruction.clone(),
            self.scene.clone(),
            self.original.clone(),
            self.fixture_id.clone(),
            self.config.clone(),
            transport,
        )?;
        for it in &self.iterations {
            let v = match &it.verdict {
                Verdict::Approved => UserVerdict::Approve,
                Verdict::Feedback(f) => UserVerdict::Feedback(f.clone()),
                _ => continue,
            };
            s.submit_verdict(v, transport)?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FixtureStore, MockTransport};

    const GOOD: &str = r#"{"high_level_plan": "1) keep everything", "code": "modified_trajectory = get_trajectory()"}"#;

    fn traj() -> Trajectory {
        Trajectory::from_rows(&[[0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 1.0]]).unwrap()
    }

    fn mock(responses: &[&str]) -> MockTransport {
        let mut store = FixtureStore::new();
        for (i, r) in responses.iter().enumerate() {
            store.insert("s", i, *r);
        }
        MockTransport::new(store)
    }

    fn start(responses: &[&str], budget: u32) -> Session {
        let cfg = SessionConfig {
            auto_repair_budget: budget,
            ..SessionConfig::default()
        };
        Session::start(
            "1",
            "Go left",
            Scene::empty(),
            traj(),
            "s",
            cfg,
            &mock(responses),
        )
        .unwrap()
    }

    #[test]
    fn valid_fixture_proposes() {
        let s = start(&[GOOD], 1);
        assert_eq!(s.state, SessionState::Proposed);
        assert_eq!(s.iterations.len(), 1);
        assert_eq!(s.latest_adapted(), Some(&traj()));
        assert_eq!(
            s.latest()
                .unwrap()
                .proposal
                .as_ref()
                .unwrap()
                .high_level_plan,
            "1) keep everything"
        );
    }

    #[test]
    fn malformed_without_budget_fails() {
        let s = start(&["Sure! Here is the plan."], 0);
        assert_eq!(s.state, SessionState::Failed);
        assert_eq!(s.iterations.len(), 1);
        assert!(s.error.as_deref().unwrap().contains("no JSON object"));
    }

    #[test]
    fn empty_instruction_rejected() {
        let e = Session::new(
            "1",
            "  ",
            Scene::empty(),
            traj(),
            "s",
            SessionConfig::default(),
        )
        .unwrap_err();
        assert_eq!(e, SessionError::EmptyInstruction);
    }

    #[test]
    fn transport_failure_is_recorded() {
        let s = start(&[], 1);
        assert_eq!(s.state, SessionState::Failed);
        assert!(s.error.as_deref().unwrap().contains("s.0.resp.txt"));
        assert!(s.iterations[0].transport_error.is_some());
    }

    #[test]
    fn iteration_cap_fails_the_session() {
        let cfg = SessionConfig {
            auto_repair_budget: 10,
            max_iterations: 3,
            ..SessionConfig::default()
        };
        let bad = "no json";
        let s = Session::start(
            "1",
            "Go left",
            Scene::empty(),
            traj(),
            "s",
            cfg,
            &mock(&[bad, bad, bad, bad]),
        )
        .unwrap();
        assert_eq!(s.state, SessionState::Failed);
        assert_eq!(s.iterations.len(), 3);
        assert!(s.error.as_deref().unwrap().contains("iteration cap"));
    }
}
