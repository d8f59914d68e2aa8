//! The institutional agent network.
//!
//! Agents act once per round in schedule order. Each sees only the current
//! phase's messages of its in-neighbours in the visibility graph; the
//! research supplier alone receives the environment data digest. The round
//! ends with the high-level institution's structured decision.

mod decision;
mod network;
mod prompt;
mod round;

pub use decision::{
    decision_format_hint, parse_decision, render_decision, DecisionError, PolicyDecision,
    SHARE_SUM_TOLERANCE,
};
pub use network::{
    audience, default_network, ActivationSchedule, AgentId, AgentProfile, Edge, Network,
    NetworkSpec, RoleName, VisibilityGraph,
};
pub use prompt::{build_prompt, AgentPrompt};
pub use round::{activate_round, Round, RoundConfig, RoundError, RoundProgress, RoundResult};

pub(crate) use network::DEFAULT_SCENARIO;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("invalid network: {0}")]
    Invalid(String),
}

/// One agent output, as exported to the transcript (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub agent: AgentId,
    pub phase: u32,
    pub tick: u64,
    pub text: String,
    /// Parsed decision; only on the high-level agent's message when parsing succeeded.
    pub decision: Option<PolicyDecision>,
    /// Previous decision re-applied because this message could not be parsed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carried_decision: Option<PolicyDecision>,
    pub authored_by_human: bool,
}

impl AgentMessage {
    /// The decision this message puts into force, if any.
    pub fn applied_decision(&self) -> Option<PolicyDecision> {
        self.decision.or(self.carried_decision)
    }
}
