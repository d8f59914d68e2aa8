//! A pausable simulation session: the land model, the institutional network,
//! the gateway, the protocol and the assistants behind one driver.
//!
//! Each protocol Begin starts a fresh run from the configured seed. A run
//! advances the environment tick by tick and, at the start of phases
//! `1..phases`, runs an activation round whose decision governs that phase.
//! When the human's agent is due, the run suspends until their text arrives.

mod config;
mod events;
mod record;
mod replay;

pub use config::{BackendKind, Scenario, SessionConfig};
pub use events::{EventBody, EventLog, SessionEvent};
pub use record::{env_digest, series_csv, TickRecord, CSV_HEADER};
pub use replay::{replay, RunManifest};

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assistants::{
    AssistantError, Assistants, DataCatalog, DecisionDraft, FocusSet, SaaOutput, VaaReply,
};
use crate::gateway::{ChatBackend, Gateway, GatewayError, UsageLedger};
use crate::institution::{
    build_prompt, AgentId, AgentMessage, AgentPrompt, Network, NetworkError, PolicyDecision,
    RoleName, Round, RoundProgress, RoundResult,
};
use crate::land::{step, Accounts, LandError, LandState, PolicyLevers};
use crate::protocol::{
    companion_open, export_markdown, reflect_turn, NextStep, ProtocolError, ProtocolEvent,
    ProtocolPhase, ProtocolState, ReflectionExport,
};

/// Role name for a run in which the human does not act.
pub const OBSERVER: &str = "observer";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("config: {0}")]
    Config(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Land(#[from] LandError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Assistant(#[from] AssistantError),
    #[error("no simulation has begun; send a Begin event first")]
    NotBegun,
    #[error("operation needs status {expected}, session is {actual:?}")]
    WrongStatus {
        expected: &'static str,
        actual: RunStatus,
    },
    #[error("unknown role {0}; use observer or an agent id")]
    UnknownRole(String),
    #[error("empty text")]
    EmptyText,
    #[error("replay: {0}")]
    Replay(String),
}

impl From<std::io::Error> for SessionError {
    fn from(e: std::io::Error) -> Self {
        SessionError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    AwaitingHuman {
        agent: AgentId,
    },
    /// The protocol is in a companion phase; no simulation can advance.
    AwaitingReflection,
    Completed,
    Failed {
        reason: String,
    },
}

impl RunStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, RunStatus::Completed | RunStatus::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedDecision {
    pub phase: u32,
    pub tick: u64,
    pub decision: PolicyDecision,
    pub carried_over: bool,
}

/// One agent's outputs in the current run, for collapsible UI panels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPanel {
    pub agent: AgentId,
    pub name: String,
    pub role: RoleName,
    pub is_human: bool,
    /// Whether the human's agent could see this output; always true for observers.
    pub visible_to_human: bool,
    pub messages: Vec<AgentMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridView {
    pub width: usize,
    pub height: usize,
    pub aft: Vec<u16>,
    pub protected: Vec<bool>,
    /// One row-major layer per capital.
    pub capitals: Vec<Vec<f64>>,
    pub capital_names: Vec<String>,
    pub aft_names: Vec<String>,
}

/// Read model of a session at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub run: u32,
    pub role: String,
    pub tick: u64,
    pub phase: u32,
    pub total_ticks: u64,
    pub status: RunStatus,
    pub protocol: ProtocolState,
    pub decision: PolicyDecision,
    pub decisions: Vec<AppliedDecision>,
    pub goal_meat: f64,
    pub goal_pa: f64,
    pub accounts: Accounts,
    pub panels: Vec<AgentPanel>,
    pub suspended_agent: Option<AgentId>,
    /// What the suspended agent would have been prompted with.
    pub human_prompt: Option<AgentPrompt>,
    pub series_tail: Vec<TickRecord>,
    pub grid: GridView,
    pub backend: String,
    pub usage: UsageLedger,
    pub draft: DecisionDraft,
    pub events: u64,
}

struct PendingRound {
    round: Round,
    emitted: usize,
}

struct RunFiles {
    dir: PathBuf,
    series: BufWriter<File>,
    transcript: BufWriter<File>,
}

/// State of the current (or, before any Begin, the initial) run.
struct RunState {
    index: u32,
    role: String,
    land: LandState,
    levers: PolicyLevers,
    accounts: Accounts,
    decision: PolicyDecision,
    records: Vec<TickRecord>,
    messages: Vec<AgentMessage>,
    decisions: Vec<AppliedDecision>,
    pending: Option<PendingRound>,
    last_round_phase: u32,
    digest: String,
    files: Option<RunFiles>,
}

pub struct Session {
    id: String,
    config: SessionConfig,
    scenario: Scenario,
    base_network: Network,
    network: Network,
    gateway: Gateway,
    protocol: ProtocolState,
    assistants: Assistants,
    events: EventLog,
    run: RunState,
    status: RunStatus,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("run", &self.run.index)
            .field("tick", &self.run.land.tick)
            .field("status", &self.status)
            .finish()
    }
}

impl Session {
    /// Builds a session from its config: scenario, backend and initial world.
    pub fn create(id: impl Into<String>, config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let scenario = config.load_scenario()?;
        let backend = config.backend()?;
        Self::with_backend(id, config, scenario, backend)
    }

    /// Like [`Session::create`] with an explicit scenario and backend.
    pub fn with_backend(
        id: impl Into<String>,
        config: SessionConfig,
        scenario: Scenario,
        backend: Box<dyn ChatBackend>,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        scenario.validate()?;
        let network = scenario.network()?;
        let run = fresh_run(&config, &scenario, 0, String::new())?;
        let session = Session {
            id: id.into(),
            protocol: ProtocolState::new(config.planned_roles),
            config,
            scenario,
            base_network: network.clone(),
            network,
            gateway: Gateway::new(backend),
            assistants: Assistants::new(),
            events: EventLog::default(),
            run,
            status: RunStatus::Running,
        };
        if let Some(role) = &session.config.human_role {
            session.human_for(role)?;
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn status(&self) -> &RunStatus {
        &self.status
    }

    pub fn protocol(&self) -> &ProtocolState {
        &self.protocol
    }

    pub fn events(&self) -> EventLog {
        self.events.clone()
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn tick(&self) -> u64 {
        self.run.land.tick
    }

    pub fn land(&self) -> &LandState {
        &self.run.land
    }

    pub fn records(&self) -> &[TickRecord] {
        &self.run.records
    }

    pub fn messages(&self) -> &[AgentMessage] {
        &self.run.messages
    }

    pub fn decisions(&self) -> &[AppliedDecision] {
        &self.run.decisions
    }

    pub fn run_index(&self) -> u32 {
        self.run.index
    }

    /// Directory of the current run, when persisting.
    pub fn run_dir(&self) -> Option<&Path> {
        self.run.files.as_ref().map(|f| f.dir.as_path())
    }

    pub fn series_csv(&self) -> String {
        series_csv(&self.run.records)
    }

    /// The current run's transcript, one JSON object per line.
    pub fn transcript_jsonl(&self) -> String {
        self.run.messages.iter().map(jsonl_line).collect()
    }

    pub fn catalog(&self) -> DataCatalog {
        DataCatalog::from_csv(self.series_csv().as_bytes()).expect("own CSV parses")
    }

    fn phase_now(&self) -> u32 {
        if let Some(p) = &self.run.pending {
            return p.round.phase;
        }
        let lag = u64::from(self.config.lag);
        (self.run.land.tick / lag).min(u64::from(self.config.phases - 1)) as u32
    }

    fn human_for(&self, role: &str) -> Result<Option<AgentId>, SessionError> {
        if role == OBSERVER {
            return Ok(None);
        }
        let id = AgentId::from(role);
        self.base_network
            .profile(&id)
            .map_err(|_| SessionError::UnknownRole(role.to_string()))?;
        Ok(Some(id))
    }

    // ---- protocol events ----

    /// Begins a perspective-taking simulation as `role`. When `None`, the
    /// role chosen in the last reflection, else the configured default, else
    /// observer. Starts a fresh run.
    pub fn begin(&mut self, role: Option<&str>) -> Result<(), SessionError> {
        let role = role
            .map(str::to_string)
            .or_else(|| self.protocol.next_role.clone())
            .or_else(|| self.config.human_role.clone())
            .unwrap_or_else(|| OBSERVER.to_string());
        let mut protocol = self.protocol.clone();
        protocol.advance(ProtocolEvent::BeginSimulation { role: role.clone() })?;
        self.start_run(role, protocol)
    }

    /// Ends a reflection. Replaying the same role starts a fresh run at once.
    pub fn complete_reflection(&mut self, next: NextStep) -> Result<(), SessionError> {
        let replay_same = next == NextStep::ReplaySame;
        let mut protocol = self.protocol.clone();
        protocol.advance(ProtocolEvent::CompleteReflection { next })?;
        if replay_same {
            return self.start_run(self.run.role.clone(), protocol);
        }
        self.protocol = protocol;
        self.persist_reflections()
    }

    /// Commits `protocol` and replaces the run with a fresh one played as `role`.
    fn start_run(&mut self, role: String, protocol: ProtocolState) -> Result<(), SessionError> {
        let human = self.human_for(&role)?;
        let network = self.base_network.clone().with_human(human)?;
        let mut run = fresh_run(&self.config, &self.scenario, self.run.index + 1, role)?;
        if let Some(out) = &self.config.out_dir {
            let dir = out.join(format!("run-{}", run.index));
            run.files = Some(self.open_run_files(&dir, &run)?);
            self.gateway
                .set_log_file(Some(&dir.join("gateway.jsonl")))?;
        }
        self.protocol = protocol;
        self.network = network;
        self.run = run;
        self.status = RunStatus::Running;
        self.assistants.dialogue.clear();
        self.assistants.draft = DecisionDraft::default();
        self.persist_reflections()?;
        Ok(())
    }

    pub fn complete_integration(&mut self) -> Result<(), SessionError> {
        self.protocol.advance(ProtocolEvent::CompleteIntegration)?;
        self.persist_reflections()
    }

    /// One user turn with the reflective companion.
    pub fn reflection_message(&mut self, text: &str) -> Result<String, SessionError> {
        let reply = reflect_turn(
            &mut self.protocol,
            text,
            &mut self.gateway,
            &self.config.assistant_retry,
        )?;
        self.persist_reflections()?;
        Ok(reply)
    }

    /// Lets the companion open the current phase.
    pub fn reflection_open(&mut self) -> Result<String, SessionError> {
        let reply = companion_open(
            &mut self.protocol,
            &mut self.gateway,
            &self.config.assistant_retry,
        )?;
        self.persist_reflections()?;
        Ok(reply)
    }

    /// The Markdown export; also written to the output directory.
    pub fn export(&mut self) -> Result<ReflectionExport, SessionError> {
        let export = export_markdown(
            &self.protocol,
            &mut self.gateway,
            &self.config.assistant_retry,
        )?;
        if let Some(out) = &self.config.out_dir {
            fs::write(out.join("reflection.md"), &export.markdown)?;
        }
        Ok(export)
    }

    // ---- running ----

    /// Advances until the human is due, the run ends, or it fails.
    pub fn run_until_pause(&mut self) -> Result<RunStatus, SessionError> {
        if self.protocol.phase == ProtocolPhase::Contextualization {
            return Err(SessionError::NotBegun);
        }
        match &self.status {
            RunStatus::Running => self.drive(),
            RunStatus::AwaitingHuman { .. } => Ok(self.status.clone()),
            _ if self.protocol.phase.has_companion() => Ok(RunStatus::AwaitingReflection),
            other => Ok(other.clone()),
        }
    }

    /// Injects the human's text verbatim and resumes the run.
    pub fn submit_human_decision(&mut self, text: &str) -> Result<RunStatus, SessionError> {
        self.expect_awaiting_human()?;
        if text.trim().is_empty() {
            return Err(SessionError::EmptyText);
        }
        self.resume(text.to_string())
    }

    /// Resumes with an empty message, as when a human input timeout expires.
    pub fn expire_human(&mut self) -> Result<RunStatus, SessionError> {
        self.expect_awaiting_human()?;
        self.resume(String::new())
    }

    fn expect_awaiting_human(&self) -> Result<AgentId, SessionError> {
        match &self.status {
            RunStatus::AwaitingHuman { agent } => Ok(agent.clone()),
            other => Err(SessionError::WrongStatus {
                expected: "awaiting_human",
                actual: other.clone(),
            }),
        }
    }

    fn resume(&mut self, text: String) -> Result<RunStatus, SessionError> {
        self.set_status(RunStatus::Running);
        self.assistants.dialogue.clear();
        self.assistants.draft = DecisionDraft::default();
        if self.advance_round(Some(text))? {
            self.drive()
        } else {
            Ok(self.status.clone())
        }
    }

    fn drive(&mut self) -> Result<RunStatus, SessionError> {
        let lag = u64::from(self.config.lag);
        let total = self.config.total_ticks();
        loop {
            let tick = self.run.land.tick;
            if tick >= total {
                self.set_status(RunStatus::Completed);
                self.end_run()?;
                return Ok(self.status.clone());
            }
            let phase = (tick / lag) as u32;
            if tick > 0 && tick.is_multiple_of(lag) && self.run.last_round_phase < phase {
                let run = &self.run;
                let digest = env_digest(
                    phase,
                    &run.land,
                    &run.levers,
                    &run.accounts,
                    &run.records,
                    self.config.lag,
                );
                self.run.digest = digest;
                self.run.pending = Some(PendingRound {
                    round: Round::new(phase, tick),
                    emitted: 0,
                });
                if !self.advance_round(None)? {
                    return Ok(self.status.clone());
                }
            }
            self.step_once()?;
        }
    }

    /// Runs the pending round. Returns true when it completed and the run
    /// can continue.
    fn advance_round(&mut self, input: Option<String>) -> Result<bool, SessionError> {
        let mut pending = self.run.pending.take().expect("a round is pending");
        let result = pending.round.advance(
            &self.network,
            &mut self.gateway,
            &self.run.digest,
            self.run.decision,
            input,
            &self.config.round,
        );
        let (messages, outcome) = match result {
            Ok(progress) => (
                pending.round.messages()[pending.emitted..].to_vec(),
                Ok(progress),
            ),
            Err(e) => (
                e.partial
                    .get(pending.emitted..)
                    .map(<[_]>::to_vec)
                    .unwrap_or_default(),
                Err(e),
            ),
        };
        pending.emitted += messages.len();
        for m in messages {
            self.emit_message(m)?;
        }
        match outcome {
            Ok(RoundProgress::Suspended { agent }) => {
                self.run.pending = Some(pending);
                self.set_status(RunStatus::AwaitingHuman { agent });
                Ok(false)
            }
            Ok(RoundProgress::Completed(result)) => {
                self.apply_decision(pending.round.phase, pending.round.tick, result);
                self.run.last_round_phase = pending.round.phase;
                Ok(true)
            }
            Err(e) => {
                tracing::error!(session = %self.id, error = %e, "activation round failed");
                self.set_status(RunStatus::Failed {
                    reason: e.to_string(),
                });
                self.end_run()?;
                Ok(false)
            }
        }
    }

    fn apply_decision(&mut self, phase: u32, tick: u64, result: RoundResult) {
        let d = result.decision;
        let rate = self.scenario.world.params.budget_rate;
        let run = &mut self.run;
        run.accounts.set_shares(d.share_agri, d.share_env, rate);
        run.levers.goal_meat = (run.levers.goal_meat * (1.0 + d.adj_meat)).max(0.0);
        run.levers.goal_pa = (run.levers.goal_pa * (1.0 + d.adj_pa)).clamp(0.0, 1.0);
        run.decision = d;
        let applied = AppliedDecision {
            phase,
            tick,
            decision: d,
            carried_over: result.carried_over,
        };
        run.decisions.push(applied);
        self.events.push(
            run.index,
            EventBody::DecisionApplied {
                phase,
                tick,
                decision: d,
                carried_over: result.carried_over,
            },
        );
    }

    fn step_once(&mut self) -> Result<(), SessionError> {
        let world = &self.scenario.world;
        let run = &mut self.run;
        let (land, accounts, report) = step(
            &run.land,
            &run.levers,
            &run.accounts,
            &world.prices,
            &world.params,
            &world.afts,
        );
        run.land = land;
        run.accounts = accounts;
        let phase = ((run.land.tick - 1) / u64::from(self.config.lag)) as u32;
        let record = TickRecord::new(phase, &run.land, &run.levers, &run.accounts, &report);
        if let Some(files) = run.files.as_mut() {
            writeln!(files.series, "{}", record.csv_row())?;
            files.series.flush()?;
        }
        let tick = record.tick;
        run.records.push(record);
        self.events
            .push(run.index, EventBody::TickAdvanced { tick, phase });
        Ok(())
    }

    fn emit_message(&mut self, message: AgentMessage) -> Result<(), SessionError> {
        if let Some(files) = self.run.files.as_mut() {
            files
                .transcript
                .write_all(jsonl_line(&message).as_bytes())?;
            files.transcript.flush()?;
        }
        self.run.messages.push(message.clone());
        self.events
            .push(self.run.index, EventBody::MessageEmitted { message });
        Ok(())
    }

    fn set_status(&mut self, status: RunStatus) {
        if self.status != status {
            self.status = status.clone();
            self.events
                .push(self.run.index, EventBody::StatusChanged { status });
        }
    }

    fn end_run(&mut self) -> Result<(), SessionError> {
        if self.protocol.phase == ProtocolPhase::PerspectiveTaking {
            self.protocol.advance(ProtocolEvent::SimulationEnded)?;
        }
        if let Some(files) = self.run.files.as_mut() {
            files.series.flush()?;
            files.transcript.flush()?;
        }
        self.persist_reflections()
    }

    fn open_run_files(&self, dir: &Path, run: &RunState) -> Result<RunFiles, SessionError> {
        fs::create_dir_all(dir)?;
        let manifest = RunManifest {
            run: run.index,
            role: run.role.clone(),
            config: self.config.clone(),
        };
        fs::write(dir.join("run.toml"), manifest.to_toml_string())?;
        fs::write(dir.join("scenario.toml"), self.scenario.to_toml_string())?;
        let mut series = BufWriter::new(File::create(dir.join("series.csv"))?);
        writeln!(series, "{CSV_HEADER}")?;
        series.flush()?;
        let transcript = BufWriter::new(File::create(dir.join("transcript.jsonl"))?);
        Ok(RunFiles {
            dir: dir.to_path_buf(),
            series,
            transcript,
        })
    }

    fn persist_reflections(&self) -> Result<(), SessionError> {
        if let Some(out) = &self.config.out_dir {
            fs::create_dir_all(out)?;
            let mut file = BufWriter::new(File::create(out.join("reflections.jsonl"))?);
            self.protocol.write_log(&mut file)?;
            file.flush()?;
        }
        Ok(())
    }

    // ---- assistants (only during the human's turn) ----

    /// Sets the focused columns and returns the automatic analysis.
    pub fn focus(&mut self, columns: &[String]) -> Result<Option<SaaOutput>, SessionError> {
        self.expect_awaiting_human()?;
        let catalog = self.catalog();
        let focus = FocusSet::new(columns, &catalog)?;
        Ok(self.assistants.on_focus_change(
            &focus,
            &catalog,
            &mut self.gateway,
            &self.config.assistant_retry,
        )?)
    }

    pub fn assistant_message(&mut self, text: &str) -> Result<VaaReply, SessionError> {
        self.expect_awaiting_human()?;
        let catalog = self.catalog();
        Ok(self.assistants.vaa_turn(
            text,
            &catalog,
            &mut self.gateway,
            &self.config.assistant_retry,
        )?)
    }

    pub fn generate_report(&mut self) -> Result<String, SessionError> {
        self.expect_awaiting_human()?;
        Ok(self
            .assistants
            .generate_report(&mut self.gateway, &self.config.assistant_retry)?)
    }

    pub fn edit_draft(&mut self, text: &str) -> Result<DecisionDraft, SessionError> {
        self.expect_awaiting_human()?;
        self.assistants.draft.edit(text);
        Ok(self.assistants.draft.clone())
    }

    // ---- read model ----

    pub fn snapshot(&self) -> SessionSnapshot {
        let run = &self.run;
        let human = self.network.schedule.human_role.as_ref();
        let panels = self
            .network
            .schedule
            .order
            .iter()
            .map(|id| {
                let profile = self.network.profile(id).expect("schedule validated");
                AgentPanel {
                    agent: id.clone(),
                    name: profile.name.clone(),
                    role: profile.role,
                    is_human: human == Some(id),
                    visible_to_human: human
                        .is_none_or(|h| h == id || self.network.edges.sees(h, id)),
                    messages: run
                        .messages
                        .iter()
                        .filter(|m| &m.agent == id)
                        .cloned()
                        .collect(),
                }
            })
            .collect();
        let suspended_agent = match &self.status {
            RunStatus::AwaitingHuman { agent } => Some(agent.clone()),
            _ => None,
        };
        let human_prompt = match (&suspended_agent, &run.pending) {
            (Some(agent), Some(p)) => build_prompt(
                &self.network,
                agent,
                p.round.messages(),
                p.round.phase,
                &run.digest,
            )
            .ok(),
            _ => None,
        };
        let world = &self.scenario.world;
        let grid = GridView {
            width: run.land.width,
            height: run.land.height,
            aft: run.land.cells.iter().map(|c| c.aft.0).collect(),
            protected: run.land.cells.iter().map(|c| c.protected).collect(),
            capitals: (0..world.capitals.len())
                .map(|k| run.land.cells.iter().map(|c| c.capitals[k]).collect())
                .collect(),
            capital_names: world.capitals.clone(),
            aft_names: world.afts.iter().map(|a| a.name.clone()).collect(),
        };
        let tail_from = run.records.len().saturating_sub(self.config.lag as usize);
        SessionSnapshot {
            id: self.id.clone(),
            run: run.index,
            role: run.role.clone(),
            tick: run.land.tick,
            phase: self.phase_now(),
            total_ticks: self.config.total_ticks(),
            status: self.status.clone(),
            protocol: self.protocol.clone(),
            decision: run.decision,
            decisions: run.decisions.clone(),
            goal_meat: run.levers.goal_meat,
            goal_pa: run.levers.goal_pa,
            accounts: run.accounts,
            panels,
            suspended_agent,
            human_prompt,
            series_tail: run.records[tail_from..].to_vec(),
            grid,
            backend: self.gateway.backend_name(),
            usage: self.gateway.ledger().clone(),
            draft: self.assistants.draft.clone(),
            events: self.events.len() as u64,
        }
    }
}

fn jsonl_line<T: Serialize>(value: &T) -> String {
    let mut line = serde_json::to_string(value).expect("serializable");
    line.push('\n');
    line
}

fn fresh_run(
    config: &SessionConfig,
    scenario: &Scenario,
    index: u32,
    role: String,
) -> Result<RunState, SessionError> {
    let (land, levers) = scenario.world.initialize(config.seed)?;
    Ok(RunState {
        index,
        role,
        land,
        levers,
        accounts: Accounts::even(scenario.world.params.budget_rate),
        decision: PolicyDecision::NEUTRAL,
        records: Vec::new(),
        messages: Vec::new(),
        decisions: Vec::new(),
        pending: None,
        last_round_phase: 0,
        digest: String::new(),
        files: None,
    })
}
