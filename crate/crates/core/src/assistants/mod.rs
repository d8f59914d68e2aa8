//! Data assistants available to the human during their turn: an automatic
//! analyst that reacts to focus changes (SAA), a conversational assistant
//! with a fixed tool registry (VAA), and report drafting.
//!
//! Numbers shown to the user come from [`describe_stats`], never from the
//! model: the SAA prints its statistics table verbatim next to the narrative.

mod catalog;
mod stats;
mod tools;

pub use catalog::{DataCatalog, FocusSet};
pub use stats::{describe_stats, stats_block, SeriesStats};
pub use tools::{parse_directives, run_tool, Directive, ToolCall, TOOL_NAMES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    CallerTag, ChatMessage, ChatRequest, ChatRole, Gateway, GatewayError, RetryPolicy,
};

pub const SAA_TAG: &str = "saa";
pub const VAA_TAG: &str = "vaa";
pub const REPORT_TAG: &str = "report";

/// Tool executions allowed within one VAA turn.
pub const DEFAULT_TOOL_BUDGET: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssistantError {
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("series {0} is empty")]
    EmptySeries(String),
    #[error("the dialogue is empty")]
    EmptyDialogue,
    #[error("catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

const SAA_SYSTEM: &str = "You are a data analyst for a land-use policy simulation. \
The user has just selected some data columns. Describe what the statistics below show in a few sentences. \
Do not state any number that is not in the tables.";

const REPORT_SYSTEM: &str = "You write short technical reports for a member of an institutional network \
in a land-use policy simulation. Base the report only on the conversation provided. \
Aim for about 200 words so the author's message is not drowned out by longer statements from other agents.";

fn vaa_system(catalog: &DataCatalog) -> String {
    let columns: Vec<&str> = catalog.names().collect();
    format!(
        "You are an assistant helping a user analyse a land-use policy simulation.\n\
         Available data columns: {}.\n\
         To use a tool, reply with one or more fenced blocks of the form\n\
         ```tool\n{{\"tool\": \"describe_stats\", \"args\": {{\"name\": \"meat_supply\"}}}}\n```\n\
         Tools: load_series(name, last), describe_stats(name), compare_to_goal(series, goal), generate_report().\n\
         Tool results come back in the next message. Answer in plain text once you have what you need.",
        columns.join(", ")
    )
}

/// Output of one SAA analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaaOutput {
    /// One statistics block per focused column, as computed.
    pub table: String,
    pub narrative: String,
}

impl SaaOutput {
    pub fn text(&self) -> String {
        format!("{}\n{}", self.table, self.narrative.trim_end())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaaReply {
    pub text: String,
    pub tool_calls: Vec<ToolCall>,
    /// Set when the tool budget ran out before a plain reply.
    pub truncated: bool,
}

/// The pending decision text. The assistants fill it; only the user submits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionDraft {
    pub text: String,
    /// True while the text is an unedited generated report.
    pub generated: bool,
    /// Bumped on every change.
    pub revision: u32,
}

impl DecisionDraft {
    pub fn edit(&mut self, text: impl Into<String>) {
        self.text = text.into();
        self.generated = false;
        self.revision += 1;
    }
}

/// Assistant state for one session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Assistants {
    pub dialogue: Vec<ChatMessage>,
    pub draft: DecisionDraft,
    pub tool_budget: Option<usize>,
    saa_calls: u32,
    vaa_calls: u32,
    report_calls: u32,
}

impl Assistants {
    pub fn new() -> Self {
        Self::default()
    }

    /// Analyses the focused columns. An empty focus makes no call.
    pub fn on_focus_change(
        &mut self,
        focus: &FocusSet,
        catalog: &DataCatalog,
        gateway: &mut Gateway,
        retry: &RetryPolicy,
    ) -> Result<Option<SaaOutput>, AssistantError> {
        if focus.is_empty() {
            return Ok(None);
        }
        let mut table = String::new();
        for name in focus.iter() {
            let stats = describe_stats(name, &catalog.series(name)?)?;
            table.push_str(&stats_block(name, &stats));
            table.push('\n');
        }
        let request = ChatRequest::new(
            CallerTag::new(SAA_TAG, self.saa_calls + 1),
            SAA_SYSTEM,
            vec![ChatMessage::user(format!(
                "Statistics of the selected columns:\n\n{table}"
            ))],
        );
        let (completion, _) = gateway.with_retry(&request, retry, 1)?;
        self.saa_calls += 1;
        Ok(Some(SaaOutput {
            table,
            narrative: completion.text,
        }))
    }

    /// One user message to the VAA, running any tool directives the model
    /// emits until it answers in plain text or the tool budget is spent.
    pub fn vaa_turn(
        &mut self,
        user_text: &str,
        catalog: &DataCatalog,
        gateway: &mut Gateway,
        retry: &RetryPolicy,
    ) -> Result<VaaReply, AssistantError> {
        if user_text.trim().is_empty() {
            return Err(AssistantError::EmptyDialogue);
        }
        let budget = self.tool_budget.unwrap_or(DEFAULT_TOOL_BUDGET);
        let mut dialogue = self.dialogue.clone();
        dialogue.push(ChatMessage::user(user_text));
        let mut calls: Vec<ToolCall> = Vec::new();
        let mut vaa_calls = self.vaa_calls;
        let mut wants_report = false;
        let system = vaa_system(catalog);

        let (text, truncated) = loop {
            let request = ChatRequest::new(
                CallerTag::new(VAA_TAG, vaa_calls + 1),
                system.clone(),
                dialogue.clone(),
            )
            .with_temperature(0.3);
            let (completion, _) = gateway.with_retry(&request, retry, 1)?;
            vaa_calls += 1;
            dialogue.push(ChatMessage::assistant(completion.text.clone()));
            let directives = parse_directives(&completion.text);
            if directives.is_empty() {
                break (completion.text, false);
            }
            if calls.len() >= budget {
                let notice = format!("[tool budget of {budget} calls exhausted; reply truncated]");
                break (format!("{}\n\n{notice}", completion.text.trim_end()), true);
            }
            let mut results = String::from("Tool results:\n");
            for d in directives.into_iter().take(budget - calls.len()) {
                let call = run_tool(&d, catalog);
                wants_report |= call.tool == "generate_report" && !call.failed;
                results.push_str(&format!("\n[{}]\n{}\n", call.tool, call.result));
                calls.push(call);
            }
            dialogue.push(ChatMessage::user(results));
        };

        self.dialogue = dialogue;
        self.vaa_calls = vaa_calls;
        if wants_report {
            self.generate_report(gateway, retry)?;
        }
        Ok(VaaReply {
            text,
            tool_calls: calls,
            truncated,
        })
    }

    /// Drafts a report from the VAA dialogue and places it in the decision
    /// draft, replacing what was there. On failure the draft is untouched.
    pub fn generate_report(
        &mut self,
        gateway: &mut Gateway,
        retry: &RetryPolicy,
    ) -> Result<String, AssistantError> {
        if self.dialogue.is_empty() {
            return Err(AssistantError::EmptyDialogue);
        }
        let mut transcript = String::from("Conversation so far:\n");
        for m in &self.dialogue {
            let who = match m.role {
                ChatRole::User => "User",
                ChatRole::Assistant => "Assistant",
                ChatRole::System => "System",
            };
            transcript.push_str(&format!("\n{who}: {}\n", m.content.trim_end()));
        }
        transcript.push_str("\nWrite the report now.");
        let request = ChatRequest::new(
            CallerTag::new(REPORT_TAG, self.report_calls + 1),
            REPORT_SYSTEM,
            vec![ChatMessage::user(transcript)],
        );
        let (completion, _) = gateway.with_retry(&request, retry, 1)?;
        self.report_calls += 1;
        self.draft.text = completion.text.clone();
        self.draft.generated = true;
        self.draft.revision += 1;
        Ok(completion.text)
    }
}
