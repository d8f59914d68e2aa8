use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{decision_format_hint, AgentId, AgentMessage, Network, NetworkError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPrompt {
    pub system: String,
    pub user: String,
}

/// Assembles an agent's prompt for `phase`.
///
/// Only current-phase messages from the agent's in-neighbours are included,
/// and `env_digest` reaches the prompt only for the data gatekeeper.
pub fn build_prompt(
    net: &Network,
    agent: &AgentId,
    transcript: &[AgentMessage],
    phase: u32,
    env_digest: &str,
) -> Result<AgentPrompt, NetworkError> {
    let profile = net.profile(agent)?;
    let mut user = String::new();
    writeln!(user, "Phase {phase}. You are the {}.", profile.name).unwrap();

    if profile.is_data_gatekeeper() {
        writeln!(user, "\n## Land-use data\n{}", env_digest.trim_end()).unwrap();
    }

    let visible: Vec<&AgentMessage> = transcript
        .iter()
        .filter(|m| m.phase == phase && net.edges.sees(agent, &m.agent))
        .collect();
    writeln!(user, "\n## Statements visible to you").unwrap();
    if visible.is_empty() {
        writeln!(
            user,
            "No other agent's output is visible to you this phase."
        )
        .unwrap();
    }
    for m in visible {
        let name = net
            .profile(&m.agent)
            .map(|p| p.name.as_str())
            .unwrap_or(m.agent.as_str());
        writeln!(user, "\n[{}] {name}:\n{}", m.agent, m.text.trim_end()).unwrap();
    }

    writeln!(user, "\n## Your task").unwrap();
    if profile.produces_decision() {
        writeln!(
            user,
            "Decide the budget allocation and goal adjustments for this phase.\n{}",
            decision_format_hint()
        )
        .unwrap();
    } else {
        writeln!(user, "Give your statement for this phase.").unwrap();
    }
    Ok(AgentPrompt {
        system: profile.persona.trim().to_string(),
        user,
    })
}

#[cfg(test)]
mod tests {
    use super::super::default_network;
    use super::*;

    fn msg(agent: &str, phase: u32) -> AgentMessage {
        AgentMessage {
            agent: agent.into(),
            phase,
            tick: 15,
            text: format!("<<{agent}:{phase}>>"),
            decision: None,
            carried_decision: None,
            authored_by_human: false,
        }
    }

    fn transcript() -> Vec<AgentMessage> {
        let net = default_network();
        let mut t: Vec<AgentMessage> = net.agents.iter().map(|a| msg(a.id.as_str(), 1)).collect();
        t.extend(net.agents.iter().map(|a| msg(a.id.as_str(), 2)));
        t
    }

    #[test]
    fn law_consultant_sees_nobody() {
        let net = default_network();
        let p = build_prompt(&net, &"law_consultant".into(), &transcript(), 2, "DIGEST").unwrap();
        assert!(!p.user.contains("<<"));
        assert!(!p.user.contains("DIGEST"));
    }

    #[test]
    fn high_level_sees_all_six_current_phase() {
        let net = default_network();
        let p = build_prompt(&net, &"high_level".into(), &transcript(), 2, "DIGEST").unwrap();
        for a in net.agents.iter().filter(|a| a.id.as_str() != "high_level") {
            assert!(p.user.contains(&format!("<<{}:2>>", a.id)));
            assert!(
                !p.user.contains(&format!("<<{}:1>>", a.id)),
                "previous phase leaked"
            );
        }
        assert!(!p.user.contains("<<high_level"));
        assert!(p.user.contains("```json"));
    }

    #[test]
    fn digest_only_for_research_supplier() {
        let net = default_network();
        let ngo = build_prompt(&net, &"env_ngo".into(), &[], 1, "DIGEST-123").unwrap();
        assert!(!ngo.user.contains("DIGEST-123"));
        let rs = build_prompt(&net, &"research_supplier".into(), &[], 1, "DIGEST-123").unwrap();
        assert!(rs.user.contains("DIGEST-123"));
    }

    #[test]
    fn unknown_agent() {
        let net = default_network();
        assert!(matches!(
            build_prompt(&net, &"mayor".into(), &[], 1, ""),
            Err(NetworkError::UnknownAgent(_))
        ));
    }

    #[test]
    fn visibility_confinement_for_every_agent() {
        let net = default_network();
        let t = transcript();
        for viewer in &net.agents {
            let p = build_prompt(&net, &viewer.id, &t, 2, "").unwrap();
            for author in &net.agents {
                let tag = format!("<<{}:2>>", author.id);
                assert_eq!(
                    p.user.contains(&tag),
                    net.edges.sees(&viewer.id, &author.id),
                    "{} sees {}",
                    viewer.id,
                    author.id
                );
            }
        }
    }
}
