use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::gateway::{
    ChatBackend, RemoteBackend, RemoteConfig, RetryPolicy, ScriptBook, ScriptedBackend,
};
use crate::institution::{Network, NetworkSpec, RoundConfig, DEFAULT_SCENARIO};
use crate::land::WorldConfig;

const DEFAULT_SCRIPT: &str = include_str!("../../data/default_script.toml");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Stub,
    Remote,
}

/// Settings of one session. Every field has a default, so an empty TOML
/// document is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Scenario file; the bundled scenario when absent.
    pub scenario: Option<PathBuf>,
    /// Role used by a Begin event that names none. `observer` or an agent id.
    pub human_role: Option<String>,
    pub phases: u32,
    /// Ticks per phase.
    pub lag: u32,
    pub seed: u64,
    pub backend: BackendKind,
    /// Script book for the stub; the bundled one when absent.
    pub script: Option<PathBuf>,
    /// Overrides the scenario's budget rate.
    pub budget_rate: Option<f64>,
    /// Run directories are created here; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    pub round: RoundConfig,
    /// Retry policy for companion and assistant calls.
    pub assistant_retry: RetryPolicy,
    pub planned_roles: Option<u32>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            human_role: None,
            phases: 5,
            lag: 15,
            seed: 1,
            backend: BackendKind::Stub,
            script: None,
            budget_rate: None,
            out_dir: None,
            round: RoundConfig::default(),
            assistant_retry: RetryPolicy::default(),
            planned_roles: None,
        }
    }
}

impl SessionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SessionError> {
        toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SessionError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.phases < 1 {
            return Err(SessionError::Config("phases must be at least 1".into()));
        }
        if self.lag < 1 {
            return Err(SessionError::Config("lag must be at least 1".into()));
        }
        if let Some(rate) = self.budget_rate {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(SessionError::Config(
                    "budget_rate must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn total_ticks(&self) -> u64 {
        u64::from(self.phases) * u64::from(self.lag)
    }

    /// Loads the scenario and applies the config's overrides.
    pub fn load_scenario(&self) -> Result<Scenario, SessionError> {
        let mut scenario = match &self.scenario {
            Some(path) => Scenario::load(path)?,
            None => Scenario::bundled(),
        };
        if let Some(rate) = self.budget_rate {
            scenario.world.params.budget_rate = rate;
        }
        Ok(scenario)
    }

    /// Builds the configured backend.
    pub fn backend(&self) -> Result<Box<dyn ChatBackend>, SessionError> {
        match self.backend {
            BackendKind::Stub => {
                let book = match &self.script {
                    Some(path) => ScriptBook::load(path)?,
                    None => ScriptBook::from_toml_str(DEFAULT_SCRIPT)?,
                };
                Ok(Box::new(ScriptedBackend::new(book)))
            }
            BackendKind::Remote => Ok(Box::new(RemoteBackend::new(RemoteConfig::from_env()?)?)),
        }
    }
}

/// World parameters and institutional network, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub world: WorldConfig,
    pub network: NetworkSpec,
}

impl Scenario {
    pub fn bundled() -> Self {
        Self::from_toml_str(DEFAULT_SCENARIO).expect("bundled scenario parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SessionError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| SessionError::Scenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SessionError::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.world.validate()?;
        self.network()?;
        Ok(())
    }

    /// The validated network, with no human role.
    pub fn network(&self) -> Result<Network, SessionError> {
        let net = Network::from(self.network.clone()).with_human(None)?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = SessionConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, SessionConfig::default());
        assert_eq!(cfg.total_ticks(), 75);
    }

    #[test]
    fn config_round_trips() {
        let cfg = SessionConfig {
            phases: 2,
            lag: 1,
            human_role: Some("research_supplier".into()),
            ..Default::default()
        };
        assert_eq!(
            SessionConfig::from_toml_str(&cfg.to_toml_string()).unwrap(),
            cfg
        );
    }

    #[test]
    fn rejects_zero_lag() {
        assert!(SessionConfig {
            lag: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SessionConfig {
            phases: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn scenario_round_trips() {
        let s = Scenario::bundled();
        assert_eq!(
            s.world,
            WorldConfig {
                goal_meat_ratio: 2.5,
                goal_pa: 0.1,
                ..Default::default()
            }
        );
        assert_eq!(Scenario::from_toml_str(&s.to_toml_string()).unwrap(), s);
    }

    #[test]
    fn bundled_script_covers_default_run() {
        let book = ScriptBook::from_toml_str(DEFAULT_SCRIPT).unwrap();
        let net = Scenario::bundled().network().unwrap();
        for phase in 1..=4 {
            for a in &net.agents {
                assert!(
                    book.get(a.id.as_str(), phase, 1).is_some(),
                    "{}/{phase}",
                    a.id
                );
            }
        }
    }

    #[test]
    fn missing_scenario_file() {
        let cfg = SessionConfig {
            scenario: Some("/nonexistent/scenario.toml".into()),
            ..Default::default()
        };
        assert!(matches!(
            cfg.load_scenario(),
            Err(SessionError::Scenario(_))
        ));
    }
}
