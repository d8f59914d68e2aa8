//! Chat-completion gateway.
//!
//! Every LLM call in the engine goes through [`Gateway`], which wraps a
//! pluggable [`ChatBackend`] with retry, token accounting and an append-only
//! call log. Calls are keyed by `(tag, index, attempt)` so a scripted stub can
//! answer them deterministically and a recorded log can replay them.

mod remote;
mod script;

pub use remote::{RemoteBackend, RemoteConfig};
pub use script::{FailKind, RecordedBackend, ScriptBook, ScriptEntry, ScriptedBackend};

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("no scripted response for {tag}/{index}/{attempt}")]
    MissingScriptKey {
        tag: String,
        index: u32,
        attempt: u32,
    },
    #[error("no recorded response for {tag}/{index}/{attempt}")]
    MissingRecordedCall {
        tag: String,
        index: u32,
        attempt: u32,
    },
    #[error("remote error (status {status:?}): {body}")]
    Remote {
        status: Option<u16>,
        body: String,
        transient: bool,
    },
    #[error("scripted failure: {message}")]
    Scripted { message: String, transient: bool },
    #[error("request has no messages")]
    EmptyRequest,
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        last: Box<GatewayError>,
    },
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("gateway log: {0}")]
    Log(String),
}

impl GatewayError {
    /// Timeouts, rate limits and server-side failures.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::Remote { transient, .. } | GatewayError::Scripted { transient, .. } => {
                *transient
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Assistant,
            content: content.into(),
        }
    }
}

/// Who is calling, and in which slot. For institutional agents `index` is
/// the phase; assistants and the companion use a per-tag call counter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallerTag {
    pub tag: String,
    pub index: u32,
}

impl CallerTag {
    pub fn new(tag: impl Into<String>, index: u32) -> Self {
        Self {
            tag: tag.into(),
            index,
        }
    }
}

impl fmt::Display for CallerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.tag, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub caller: CallerTag,
}

impl ChatRequest {
    pub fn new(caller: CallerTag, system: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            system: system.into(),
            messages,
            temperature: 0.0,
            max_tokens: 1024,
            caller,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
}

pub trait ChatBackend: Send {
    fn complete(&mut self, request: &ChatRequest, attempt: u32)
        -> Result<Completion, GatewayError>;

    /// Short label for status displays ("stub", "remote:<model>", ...).
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallerUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub calls: u64,
}

/// Cumulative token usage per caller tag. Counters only grow.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub by_caller: BTreeMap<String, CallerUsage>,
}

impl UsageLedger {
    fn record(&mut self, tag: &str, usage: Option<Usage>) {
        let entry = self.by_caller.entry(tag.to_string()).or_default();
        entry.calls += 1;
        if let Some(u) = usage {
            entry.prompt_tokens += u.prompt_tokens;
            entry.completion_tokens += u.completion_tokens;
        }
    }

    pub fn total(&self) -> CallerUsage {
        self.by_caller
            .values()
            .fold(CallerUsage::default(), |acc, u| CallerUsage {
                prompt_tokens: acc.prompt_tokens + u.prompt_tokens,
                completion_tokens: acc.completion_tokens + u.completion_tokens,
                calls: acc.calls + u.calls,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CallOutcome {
    Ok { text: String, usage: Usage },
    Err { message: String, transient: bool },
}

/// One line of the gateway log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: u64,
    pub tag: String,
    pub index: u32,
    pub attempt: u32,
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub outcome: CallOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay_ms: 0,
            max_delay_ms: 0,
        }
    }

    /// Exponential backoff before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64
            .checked_shl(retry.saturating_sub(1))
            .unwrap_or(u64::MAX);
        Duration::from_millis(
            self.base_delay_ms
                .saturating_mul(factor)
                .min(self.max_delay_ms),
        )
    }
}

pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    ledger: UsageLedger,
    log: Vec<CallRecord>,
    sink: Option<BufWriter<File>>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.describe())
            .field("calls", &self.log.len())
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Self {
            backend,
            ledger: UsageLedger::default(),
            log: Vec::new(),
            sink: None,
        }
    }

    /// Also append every call record to `path` as JSON lines.
    pub fn with_log_file(mut self, path: &Path) -> Result<Self, GatewayError> {
        self.set_log_file(Some(path))?;
        Ok(self)
    }

    /// Redirects the JSON-lines sink; `None` keeps the log in memory only.
    pub fn set_log_file(&mut self, path: Option<&Path>) -> Result<(), GatewayError> {
        self.sink = match path {
            Some(p) => {
                Some(BufWriter::new(File::create(p).map_err(|e| {
                    GatewayError::Log(format!("{}: {e}", p.display()))
                })?))
            }
            None => None,
        };
        Ok(())
    }

    pub fn backend_name(&self) -> String {
        self.backend.describe()
    }

    pub fn ledger(&self) -> &UsageLedger {
        &self.ledger
    }

    pub fn log(&self) -> &[CallRecord] {
        &self.log
    }

    /// A single call. Successes and failures are both logged.
    pub fn complete(
        &mut self,
        request: &ChatRequest,
        attempt: u32,
    ) -> Result<Completion, GatewayError> {
        if request.messages.is_empty() {
            return Err(GatewayError::EmptyRequest);
        }
        let result = self.backend.complete(request, attempt);
        let outcome = match &result {
            Ok(c) => CallOutcome::Ok {
                text: c.text.clone(),
                usage: c.usage,
            },
            Err(e) => CallOutcome::Err {
                message: e.to_string(),
                transient: e.is_transient(),
            },
        };
        self.ledger
            .record(&request.caller.tag, result.as_ref().ok().map(|c| c.usage));
        let record = CallRecord {
            seq: self.log.len() as u64,
            tag: request.caller.tag.clone(),
            index: request.caller.index,
            attempt,
            system: request.system.clone(),
            messages: request.messages.clone(),
            outcome,
        };
        if let Some(sink) = self.sink.as_mut() {
            let line =
                serde_json::to_string(&record).map_err(|e| GatewayError::Log(e.to_string()))?;
            writeln!(sink, "{line}")
                .and_then(|_| sink.flush())
                .map_err(|e| GatewayError::Log(e.to_string()))?;
        }
        self.log.push(record);
        result
    }

    /// Calls with retries on transient failures, numbering attempts from
    /// `first_attempt`. Returns the completion and how many attempts it took.
    pub fn with_retry(
        &mut self,
        request: &ChatRequest,
        policy: &RetryPolicy,
        first_attempt: u32,
    ) -> Result<(Completion, u32), GatewayError> {
        if policy.max_attempts == 0 {
            return Err(GatewayError::Config(
                "max_attempts must be at least 1".into(),
            ));
        }
        let mut last = None;
        for n in 0..policy.max_attempts {
            if n > 0 {
                let pause = policy.delay(n);
                if !pause.is_zero() {
                    std::thread::sleep(pause);
                }
            }
            match self.complete(request, first_attempt + n) {
                Ok(c) => return Ok((c, n + 1)),
                Err(e) if e.is_transient() => {
                    tracing::warn!(caller = %request.caller, attempt = first_attempt + n, error = %e, "transient failure");
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(GatewayError::Exhausted {
            attempts: policy.max_attempts,
            last: Box::new(last.expect("at least one attempt")),
        })
    }
}

/// Rough token estimate (4 characters per token) for backends that do not report usage.
pub(crate) fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

pub(crate) fn estimate_usage(request: &ChatRequest, reply: &str) -> Usage {
    let prompt = estimate_tokens(&request.system)
        + request
            .messages
            .iter()
            .map(|m| estimate_tokens(&m.content))
            .sum::<u64>();
    Usage {
        prompt_tokens: prompt,
        completion_tokens: estimate_tokens(reply),
    }
}
