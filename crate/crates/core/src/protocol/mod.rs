//! The perspective-shifting protocol: a six-state machine driven by user
//! events, plus the reflective companion that talks to the user between
//! simulations.

mod companion;

pub use companion::{
    companion_open, companion_prompt, export_markdown, reflect_turn, ReflectionExport,
    COMPANION_TAG, SUMMARY_TAG,
};

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolPhase {
    Contextualization,
    PerspectiveTaking,
    Reflection,
    Transition,
    Integration,
    Completion,
}

impl ProtocolPhase {
    pub const ALL: [ProtocolPhase; 6] = [
        ProtocolPhase::Contextualization,
        ProtocolPhase::PerspectiveTaking,
        ProtocolPhase::Reflection,
        ProtocolPhase::Transition,
        ProtocolPhase::Integration,
        ProtocolPhase::Completion,
    ];

    pub fn title(self) -> &'static str {
        match self {
            ProtocolPhase::Contextualization => "Contextualization",
            ProtocolPhase::PerspectiveTaking => "Perspective Taking",
            ProtocolPhase::Reflection => "Perspective Reflection",
            ProtocolPhase::Transition => "Perspective Transition",
            ProtocolPhase::Integration => "Perspective Integration",
            ProtocolPhase::Completion => "Completion",
        }
    }

    /// Phases in which the companion converses with the user.
    pub fn has_companion(self) -> bool {
        matches!(
            self,
            ProtocolPhase::Reflection | ProtocolPhase::Transition | ProtocolPhase::Integration
        )
    }
}

impl fmt::Display for ProtocolPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

/// What follows a finished reflection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "role", rename_all = "snake_case")]
pub enum NextStep {
    ReplaySame,
    NewRole(String),
    Integrate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ProtocolEvent {
    BeginSimulation { role: String },
    SimulationEnded,
    CompleteReflection { next: NextStep },
    UserMessage { text: String },
    CompleteIntegration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    BeginSimulation,
    SimulationEnded,
    CompleteReflection,
    UserMessage,
    CompleteIntegration,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::BeginSimulation,
        EventKind::SimulationEnded,
        EventKind::CompleteReflection,
        EventKind::UserMessage,
        EventKind::CompleteIntegration,
    ];
}

impl ProtocolEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            ProtocolEvent::BeginSimulation { .. } => EventKind::BeginSimulation,
            ProtocolEvent::SimulationEnded => EventKind::SimulationEnded,
            ProtocolEvent::CompleteReflection { .. } => EventKind::CompleteReflection,
            ProtocolEvent::UserMessage { .. } => EventKind::UserMessage,
            ProtocolEvent::CompleteIntegration => EventKind::CompleteIntegration,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("{event:?} is not allowed in phase {phase}")]
    IllegalTransition {
        phase: ProtocolPhase,
        event: EventKind,
    },
    #[error("the companion is not active in phase {0}")]
    NoCompanion(ProtocolPhase),
    #[error("export is only available after completion (phase is {0})")]
    NotComplete(ProtocolPhase),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Companion,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::User => "User",
            Speaker::Companion => "Companion",
        })
    }
}

/// One line of the reflection log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionEntry {
    pub phase: ProtocolPhase,
    pub role: String,
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolState {
    pub phase: ProtocolPhase,
    /// Empty until the first simulation begins.
    pub current_role: String,
    /// One entry per perspective-taking episode.
    pub roles_played: Vec<String>,
    /// Role chosen at the end of the last reflection, if any.
    pub next_role: Option<String>,
    pub responses: Vec<ReflectionEntry>,
    pub planned_roles: Option<u32>,
    /// Companion calls so far; numbers the gateway slot of the next one.
    pub companion_calls: u32,
}

impl Default for ProtocolState {
    fn default() -> Self {
        Self::new(None)
    }
}

impl ProtocolState {
    pub fn new(planned_roles: Option<u32>) -> Self {
        Self {
            phase: ProtocolPhase::Contextualization,
            current_role: String::new(),
            roles_played: Vec::new(),
            next_role: None,
            responses: Vec::new(),
            planned_roles,
            companion_calls: 0,
        }
    }

    /// Whether `kind` has an edge out of the current phase.
    pub fn accepts(&self, kind: EventKind) -> bool {
        is_legal(self.phase, kind)
    }

    /// Applies one user-initiated event.
    pub fn advance(&mut self, event: ProtocolEvent) -> Result<(), ProtocolError> {
        use ProtocolPhase as P;
        let illegal = ProtocolError::IllegalTransition {
            phase: self.phase,
            event: event.kind(),
        };
        match (self.phase, event) {
            (P::Contextualization | P::Transition, ProtocolEvent::BeginSimulation { role }) => {
                let role = role.trim();
                if role.is_empty() {
                    return Err(ProtocolError::Empty("role"));
                }
                self.begin(role.to_string());
            }
            (P::PerspectiveTaking, ProtocolEvent::SimulationEnded) => self.phase = P::Reflection,
            (P::Reflection, ProtocolEvent::CompleteReflection { next }) => match next {
                NextStep::ReplaySame => {
                    let role = self.current_role.clone();
                    self.begin(role);
                }
                NextStep::NewRole(role) => {
                    let role = role.trim();
                    if role.is_empty() {
                        return Err(ProtocolError::Empty("role"));
                    }
                    self.next_role = Some(role.to_string());
                    self.phase = P::Transition;
                }
                NextStep::Integrate => self.phase = P::Integration,
            },
            (
                P::Reflection | P::Transition | P::Integration,
                ProtocolEvent::UserMessage { text },
            ) => {
                if text.trim().is_empty() {
                    return Err(ProtocolError::Empty("message"));
                }
                self.log(Speaker::User, text);
            }
            (P::Integration, ProtocolEvent::CompleteIntegration) => self.phase = P::Completion,
            _ => return Err(illegal),
        }
        Ok(())
    }

    fn begin(&mut self, role: String) {
        self.roles_played.push(role.clone());
        self.current_role = role;
        self.next_role = None;
        self.phase = ProtocolPhase::PerspectiveTaking;
    }

    fn log(&mut self, speaker: Speaker, text: String) {
        self.responses.push(ReflectionEntry {
            phase: self.phase,
            role: self.current_role.clone(),
            speaker,
            text,
        });
    }

    /// Writes the reflection log as JSON lines.
    pub fn write_log(&self, out: &mut impl Write) -> std::io::Result<()> {
        for entry in &self.responses {
            let line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// The transition table: exactly these (phase, event kind) pairs are legal.
pub fn is_legal(phase: ProtocolPhase, kind: EventKind) -> bool {
    use EventKind as E;
    use ProtocolPhase as P;
    matches!(
        (phase, kind),
        (P::Contextualization, E::BeginSimulation)
            | (P::PerspectiveTaking, E::SimulationEnded)
            | (P::Reflection, E::CompleteReflection)
            | (
                P::Reflection | P::Transition | P::Integration,
                E::UserMessage
            )
            | (P::Transition, E::BeginSimulation)
            | (P::Integration, E::CompleteIntegration)
    )
}
