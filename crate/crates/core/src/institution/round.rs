use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    build_prompt, decision_format_hint, parse_decision, AgentId, AgentMessage, Network,
    PolicyDecision,
};
use crate::gateway::{CallerTag, ChatMessage, ChatRequest, Gateway, GatewayError, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoundConfig {
    pub retry: RetryPolicy,
    /// Extra attempts at a parseable decision after the first reply.
    pub decision_reprompts: u32,
    /// Temperature for non-decision agents. Decision calls always use 0.
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            decision_reprompts: 3,
            temperature: 0.7,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub decision: PolicyDecision,
    pub carried_over: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundProgress {
    /// Waiting for the human who controls `agent`.
    Suspended {
        agent: AgentId,
    },
    Completed(RoundResult),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("round failed at {agent}: {source}")]
pub struct RoundError {
    pub agent: AgentId,
    pub partial: Vec<AgentMessage>,
    pub source: GatewayError,
}

/// One activation round, resumable after a human suspension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub phase: u32,
    pub tick: u64,
    position: usize,
    messages: Vec<AgentMessage>,
}

impl Round {
    pub fn new(phase: u32, tick: u64) -> Self {
        Self {
            phase,
            tick,
            position: 0,
            messages: Vec::new(),
        }
    }

    pub fn messages(&self) -> &[AgentMessage] {
        &self.messages
    }

    pub fn next_agent<'a>(&self, net: &'a Network) -> Option<&'a AgentId> {
        net.schedule.order.get(self.position)
    }

    /// Runs agents until the round completes or reaches the human's slot
    /// without input. `human_input` is consumed at the human's slot verbatim.
    pub fn advance(
        &mut self,
        net: &Network,
        gateway: &mut Gateway,
        env_digest: &str,
        previous: PolicyDecision,
        mut human_input: Option<String>,
        config: &RoundConfig,
    ) -> Result<RoundProgress, RoundError> {
        while let Some(agent) = net.schedule.order.get(self.position).cloned() {
            let profile = net
                .profile(&agent)
                .expect("schedule validated against profiles");
            let is_human = net.schedule.human_role.as_ref() == Some(&agent);
            let is_last = self.position + 1 == net.schedule.order.len();

            let message = if is_human {
                let Some(text) = human_input.take() else {
                    return Ok(RoundProgress::Suspended { agent });
                };
                let mut m = self.message(&agent, text, true);
                if profile.produces_decision() {
                    match parse_decision(&m.text) {
                        Ok(d) => m.decision = Some(d),
                        Err(_) => m.carried_decision = Some(previous),
                    }
                }
                m
            } else {
                let prompt = build_prompt(net, &agent, &self.messages, self.phase, env_digest)
                    .expect("schedule validated against profiles");
                let caller = CallerTag::new(agent.as_str(), self.phase);
                let request =
                    ChatRequest::new(caller, prompt.system, vec![ChatMessage::user(prompt.user)]);
                let fail = |source, partial: &[AgentMessage]| RoundError {
                    agent: agent.clone(),
                    partial: partial.to_vec(),
                    source,
                };
                if profile.produces_decision() {
                    self.decide(gateway, request, previous, config)
                        .map_err(|e| fail(e, &self.messages))?
                } else {
                    let request = ChatRequest {
                        temperature: config.temperature,
                        max_tokens: config.max_tokens,
                        ..request
                    };
                    let (c, _) = gateway
                        .with_retry(&request, &config.retry, 1)
                        .map_err(|e| fail(e, &self.messages))?;
                    self.message(&agent, c.text, false)
                }
            };
            self.messages.push(message);
            self.position += 1;

            if is_last {
                let last = self.messages.last().expect("just pushed");
                return Ok(RoundProgress::Completed(RoundResult {
                    decision: last.applied_decision().unwrap_or(previous),
                    carried_over: last.decision.is_none(),
                }));
            }
        }
        Err(RoundError {
            agent: AgentId::new("<none>"),
            partial: self.messages.clone(),
            source: GatewayError::Config("round already completed".into()),
        })
    }

    fn message(&self, agent: &AgentId, text: String, human: bool) -> AgentMessage {
        AgentMessage {
            agent: agent.clone(),
            phase: self.phase,
            tick: self.tick,
            text,
            decision: None,
            carried_decision: None,
            authored_by_human: human,
        }
    }

    /// Asks for a decision, reprompting on unparseable replies, and falls
    /// back to `previous` when every attempt fails to parse.
    fn decide(
        &self,
        gateway: &mut Gateway,
        mut request: ChatRequest,
        previous: PolicyDecision,
        config: &RoundConfig,
    ) -> Result<AgentMessage, GatewayError> {
        request.temperature = 0.0;
        request.max_tokens = config.max_tokens;
        let agent = AgentId::new(request.caller.tag.clone());
        let mut attempt = 1;
        let mut last_text = String::new();
        for _ in 0..=config.decision_reprompts {
            let (completion, used) = gateway.with_retry(&request, &config.retry, attempt)?;
            attempt += used;
            match parse_decision(&completion.text) {
                Ok(d) => {
                    let mut m = self.message(&agent, completion.text, false);
                    m.decision = Some(d);
                    return Ok(m);
                }
                Err(e) => {
                    tracing::warn!(phase = self.phase, error = %e, "unparseable decision, reprompting");
                    request
                        .messages
                        .push(ChatMessage::assistant(completion.text.clone()));
                    request.messages.push(ChatMessage::user(format!(
                        "Your reply could not be used ({e}). {}",
                        decision_format_hint()
                    )));
                    last_text = completion.text;
                }
            }
        }
        let mut m = self.message(&agent, last_text, false);
        m.carried_decision = Some(previous);
        Ok(m)
    }
}

/// Runs a fresh round for `phase` as far as it can go.
pub fn activate_round(
    net: &Network,
    gateway: &mut Gateway,
    phase: u32,
    tick: u64,
    env_digest: &str,
    previous: PolicyDecision,
    config: &RoundConfig,
) -> Result<(Round, RoundProgress), RoundError> {
    let mut round = Round::new(phase, tick);
    let progress = round.advance(net, gateway, env_digest, previous, None, config)?;
    Ok((round, progress))
}
