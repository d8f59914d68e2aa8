use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RunStatus, Scenario, Session, SessionConfig, SessionError};
use crate::gateway::RecordedBackend;
use crate::institution::AgentMessage;

/// `run.toml` in a run directory: what is needed to re-execute the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run: u32,
    pub role: String,
    pub config: SessionConfig,
}

impl RunManifest {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

fn read(path: &Path) -> Result<String, SessionError> {
    std::fs::read_to_string(path)
        .map_err(|e| SessionError::Replay(format!("{}: {e}", path.display())))
}

/// Human messages of a transcript, keyed by phase.
fn human_inputs(transcript: &str) -> Result<BTreeMap<u32, String>, SessionError> {
    let mut inputs = BTreeMap::new();
    for (n, line) in transcript
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let m: AgentMessage = serde_json::from_str(line)
            .map_err(|e| SessionError::Replay(format!("transcript.jsonl line {}: {e}", n + 1)))?;
        if m.authored_by_human {
            inputs.insert(m.phase, m.text);
        }
    }
    Ok(inputs)
}

/// Re-executes a recorded run with every model call answered from its
/// gateway log and every human turn from its transcript. The returned
/// session holds the replayed state; with `out_dir` it is persisted there.
pub fn replay(run_dir: &Path, out_dir: Option<PathBuf>) -> Result<Session, SessionError> {
    let manifest: RunManifest = toml::from_str(&read(&run_dir.join("run.toml"))?)
        .map_err(|e| SessionError::Replay(format!("run.toml: {e}")))?;
    let scenario = Scenario::from_toml_str(&read(&run_dir.join("scenario.toml"))?)?;
    let backend = RecordedBackend::load(&run_dir.join("gateway.jsonl"))?;
    let inputs = human_inputs(&read(&run_dir.join("transcript.jsonl"))?)?;

    let config = SessionConfig {
        out_dir,
        scenario: None,
        script: None,
        ..manifest.config
    };
    let mut session = Session::with_backend("replay", config, scenario, Box::new(backend))?;
    session.begin(Some(&manifest.role))?;
    let mut status = session.run_until_pause()?;
    while let RunStatus::AwaitingHuman { agent } = &status {
        let phase = session.phase_now();
        let text = inputs.get(&phase).ok_or_else(|| {
            SessionError::Replay(format!(
                "no recorded human input for {agent} in phase {phase}"
            ))
        })?;
        status = session.resume(text.clone())?;
    }
    match status {
        RunStatus::Completed => Ok(session),
        RunStatus::Failed { reason } => Err(SessionError::Replay(reason)),
        other => Err(SessionError::Replay(format!(
            "replay stopped in status {other:?}"
        ))),
    }
}
