use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::NetworkError;

/// Institutional roles of the default scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleName {
    ResearchSupplier,
    EnvNgo,
    LandUserAssoc,
    AgriInstitution,
    EnvInstitution,
    LawConsultant,
    HighLevel,
}

impl RoleName {
    pub fn as_str(self) -> &'static str {
        match self {
            RoleName::ResearchSupplier => "research_supplier",
            RoleName::EnvNgo => "env_ngo",
            RoleName::LandUserAssoc => "land_user_assoc",
            RoleName::AgriInstitution => "agri_institution",
            RoleName::EnvInstitution => "env_institution",
            RoleName::LawConsultant => "law_consultant",
            RoleName::HighLevel => "high_level",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub id: AgentId,
    pub role: RoleName,
    /// Display name.
    pub name: String,
    /// System prompt: behaviour, decision guidelines, expected inputs and outputs.
    pub persona: String,
}

impl AgentProfile {
    pub fn produces_decision(&self) -> bool {
        self.role == RoleName::HighLevel
    }

    pub fn is_data_gatekeeper(&self) -> bool {
        self.role == RoleName::ResearchSupplier
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: AgentId,
    pub to: AgentId,
}

/// `from -> to` means `from`'s outputs appear in `to`'s prompt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VisibilityGraph {
    edges: BTreeSet<Edge>,
}

impl VisibilityGraph {
    pub fn new(edges: impl IntoIterator<Item = Edge>) -> Self {
        Self {
            edges: edges.into_iter().collect(),
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn sees(&self, viewer: &AgentId, author: &AgentId) -> bool {
        self.edges.contains(&Edge {
            from: author.clone(),
            to: viewer.clone(),
        })
    }

    pub fn in_neighbours<'a>(
        &'a self,
        agent: &'a AgentId,
    ) -> impl Iterator<Item = &'a AgentId> + 'a {
        self.edges
            .iter()
            .filter(move |e| &e.to == agent)
            .map(|e| &e.from)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationSchedule {
    pub order: Vec<AgentId>,
    /// Agent the human controls; `None` means observer.
    #[serde(default)]
    pub human_role: Option<AgentId>,
}

/// Profiles, visibility and activation order of one institutional network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub agents: Vec<AgentProfile>,
    pub edges: VisibilityGraph,
    pub schedule: ActivationSchedule,
}

impl Network {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if !ids.insert(&a.id) {
                return Err(NetworkError::Invalid(format!(
                    "duplicate agent id {}",
                    a.id
                )));
            }
        }
        let high: Vec<_> = self
            .agents
            .iter()
            .filter(|a| a.produces_decision())
            .collect();
        if high.len() != 1 {
            return Err(NetworkError::Invalid(format!(
                "expected exactly one high_level agent, found {}",
                high.len()
            )));
        }
        for e in self.edges.edges() {
            for end in [&e.from, &e.to] {
                if !ids.contains(end) {
                    return Err(NetworkError::UnknownAgent(end.clone()));
                }
            }
        }
        let order: BTreeSet<_> = self.schedule.order.iter().collect();
        if order.len() != self.schedule.order.len() || order != ids {
            return Err(NetworkError::Invalid(
                "schedule must list every agent exactly once".into(),
            ));
        }
        if self.schedule.order.last() != Some(&high[0].id) {
            return Err(NetworkError::Invalid(
                "high_level agent must act last".into(),
            ));
        }
        if let Some(h) = &self.schedule.human_role {
            if !ids.contains(h) {
                return Err(NetworkError::UnknownAgent(h.clone()));
            }
        }
        Ok(())
    }

    pub fn profile(&self, id: &AgentId) -> Result<&AgentProfile, NetworkError> {
        self.agents
            .iter()
            .find(|a| &a.id == id)
            .ok_or_else(|| NetworkError::UnknownAgent(id.clone()))
    }

    pub fn high_level(&self) -> &AgentProfile {
        self.agents
            .iter()
            .find(|a| a.produces_decision())
            .expect("validated network has a high_level agent")
    }

    pub fn by_role(&self, role: RoleName) -> Option<&AgentProfile> {
        self.agents.iter().find(|a| a.role == role)
    }

    pub fn with_human(mut self, human: Option<AgentId>) -> Result<Self, NetworkError> {
        self.schedule.human_role = human;
        self.validate()?;
        Ok(self)
    }
}

/// On-disk form: profiles and edges as arrays of tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub agents: Vec<AgentProfile>,
    pub edges: Vec<Edge>,
    pub schedule: Vec<AgentId>,
    #[serde(default)]
    pub human_role: Option<AgentId>,
}

impl From<NetworkSpec> for Network {
    fn from(spec: NetworkSpec) -> Self {
        Network {
            agents: spec.agents,
            edges: VisibilityGraph::new(spec.edges),
            schedule: ActivationSchedule {
                order: spec.schedule,
                human_role: spec.human_role,
            },
        }
    }
}

impl From<&Network> for NetworkSpec {
    fn from(net: &Network) -> Self {
        NetworkSpec {
            agents: net.agents.clone(),
            edges: net.edges.edges().cloned().collect(),
            schedule: net.schedule.order.clone(),
            human_role: net.schedule.human_role.clone(),
        }
    }
}

pub(crate) const DEFAULT_SCENARIO: &str = include_str!("../../data/default_scenario.toml");

/// The seven-role network shipped with the engine.
pub fn default_network() -> Network {
    #[derive(Deserialize)]
    struct Doc {
        network: NetworkSpec,
    }
    let doc: Doc = toml::from_str(DEFAULT_SCENARIO).expect("bundled scenario parses");
    let net = Network::from(doc.network);
    net.validate().expect("bundled scenario is valid");
    net
}

/// Agents grouped by who can see them; used by UI panels.
pub fn audience(net: &Network) -> BTreeMap<AgentId, Vec<AgentId>> {
    net.agents
        .iter()
        .map(|a| {
            let viewers = net
                .edges
                .edges()
                .filter(|e| e.from == a.id)
                .map(|e| e.to.clone())
                .collect();
            (a.id.clone(), viewers)
        })
        .collect()
}
