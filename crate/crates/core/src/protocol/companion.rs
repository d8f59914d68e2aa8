use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{ProtocolError, ProtocolPhase, ProtocolState, Speaker};
use crate::gateway::{CallerTag, ChatMessage, ChatRequest, Gateway, RetryPolicy};

const TEMPLATE: &str = include_str!("../../data/companion_prompt.txt");

pub const COMPANION_TAG: &str = "companion";
pub const SUMMARY_TAG: &str = "companion-summary";

const SUMMARY_SYSTEM: &str =
    "You summarise reflective conversations from a perspective-shifting land-use simulation. \
Write a short list of the key insights the user reached, grouped by role where useful. \
Use only what the user and companion actually said.";

fn list_or_none(items: &[String]) -> String {
    if items.is_empty() {
        "none".to_string()
    } else {
        items.join(", ")
    }
}

fn render_responses(state: &ProtocolState) -> String {
    if state.responses.is_empty() {
        return "none".to_string();
    }
    let mut out = String::new();
    for e in &state.responses {
        write!(
            out,
            "\n- {} ({}, {}): {}",
            e.speaker, e.phase, e.role, e.text
        )
        .unwrap();
    }
    out
}

/// The companion's system prompt for the current state.
///
/// Placeholders are substituted in one pass, so braces inside user text are
/// never expanded.
pub fn companion_prompt(state: &ProtocolState) -> Result<String, ProtocolError> {
    if !state.phase.has_companion() {
        return Err(ProtocolError::NoCompanion(state.phase));
    }
    let role = if state.current_role.is_empty() {
        "none".to_string()
    } else {
        state.current_role.clone()
    };
    let values = [
        ("{phase}", state.phase.title().to_string()),
        ("{current_role}", role),
        ("{roles_played}", list_or_none(&state.roles_played)),
        ("{responses}", render_responses(state)),
    ];
    let mut out = String::with_capacity(TEMPLATE.len());
    let mut rest = TEMPLATE;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        match values.iter().find(|(key, _)| tail.starts_with(key)) {
            Some((key, value)) => {
                out.push_str(value);
                rest = &tail[key.len()..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    Ok(out.trim_end().to_string())
}

fn ask(
    state: &ProtocolState,
    user_text: &str,
    gateway: &mut Gateway,
    retry: &RetryPolicy,
) -> Result<String, ProtocolError> {
    let system = companion_prompt(state)?;
    let caller = CallerTag::new(COMPANION_TAG, state.companion_calls + 1);
    let request =
        ChatRequest::new(caller, system, vec![ChatMessage::user(user_text)]).with_temperature(0.7);
    let (completion, _) = gateway.with_retry(&request, retry, 1)?;
    Ok(completion.text)
}

/// Lets the companion speak first when a companion phase opens. Only the
/// reply is logged.
pub fn companion_open(
    state: &mut ProtocolState,
    gateway: &mut Gateway,
    retry: &RetryPolicy,
) -> Result<String, ProtocolError> {
    let cue = match state.phase {
        ProtocolPhase::Reflection => format!(
            "I have just finished the simulation as {}.",
            state.current_role
        ),
        ProtocolPhase::Transition => format!(
            "I am about to play a new role: {}.",
            state.next_role.as_deref().unwrap_or("not decided yet")
        ),
        ProtocolPhase::Integration => {
            "I have finished my planned roles and want to bring the insights together.".into()
        }
        phase => return Err(ProtocolError::NoCompanion(phase)),
    };
    let reply = ask(state, &cue, gateway, retry)?;
    state.companion_calls += 1;
    state.log(Speaker::Companion, reply.clone());
    Ok(reply)
}

/// One user turn with the companion. On failure the state is unchanged.
pub fn reflect_turn(
    state: &mut ProtocolState,
    user_text: &str,
    gateway: &mut Gateway,
    retry: &RetryPolicy,
) -> Result<String, ProtocolError> {
    if !state.phase.has_companion() {
        return Err(ProtocolError::NoCompanion(state.phase));
    }
    if user_text.trim().is_empty() {
        return Err(ProtocolError::Empty("message"));
    }
    let reply = ask(state, user_text, gateway, retry)?;
    state.companion_calls += 1;
    state.log(Speaker::User, user_text.to_string());
    state.log(Speaker::Companion, reply.clone());
    Ok(reply)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionExport {
    pub markdown: String,
    pub summary: String,
}

/// The whole reflection log as Markdown, one section per phase episode in
/// order, with a generated key-insights section last.
pub fn export_markdown(
    state: &ProtocolState,
    gateway: &mut Gateway,
    retry: &RetryPolicy,
) -> Result<ReflectionExport, ProtocolError> {
    if state.phase != ProtocolPhase::Completion {
        return Err(ProtocolError::NotComplete(state.phase));
    }
    let mut md = String::from("# Reflection log\n\n");
    writeln!(md, "Roles played: {}\n", list_or_none(&state.roles_played)).unwrap();

    let mut body = String::new();
    let mut section = None;
    let mut count = 0;
    for e in &state.responses {
        let key = (e.phase, e.role.as_str());
        if section != Some(key) {
            count += 1;
            writeln!(body, "## {count}. {} ({})\n", e.phase, e.role).unwrap();
            section = Some(key);
        }
        writeln!(body, "**{}:**\n\n{}\n", e.speaker, e.text.trim_end()).unwrap();
    }

    let summary = if state.responses.is_empty() {
        md.push_str("No reflections recorded.\n\n");
        "no reflections recorded".to_string()
    } else {
        md.push_str(&body);
        let request = ChatRequest::new(
            CallerTag::new(SUMMARY_TAG, 1),
            SUMMARY_SYSTEM,
            vec![ChatMessage::user(body)],
        );
        gateway.with_retry(&request, retry, 1)?.0.text
    };
    writeln!(md, "## Key insights\n\n{}", summary.trim_end()).unwrap();
    Ok(ReflectionExport {
        markdown: md,
        summary,
    })
}
