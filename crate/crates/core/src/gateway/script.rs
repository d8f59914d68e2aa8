use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    estimate_usage, CallOutcome, CallRecord, ChatBackend, ChatRequest, Completion, GatewayError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailKind {
    Transient,
    Fatal,
}

/// A canned answer, or a scripted failure for exercising retry paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Text(String),
    Fail { fail: FailKind, message: String },
}

type Key = (String, u32, u32);

/// Canned responses keyed by `"tag/index/attempt"`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptBook {
    entries: BTreeMap<Key, ScriptEntry>,
}

#[derive(Deserialize)]
struct ScriptFile {
    responses: BTreeMap<String, ScriptEntry>,
}

fn parse_key(key: &str) -> Result<Key, GatewayError> {
    let bad = || GatewayError::Config(format!("script key {key:?} is not tag/index/attempt"));
    let mut parts = key.rsplitn(3, '/');
    let attempt = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let index = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let tag = parts.next().filter(|t| !t.is_empty()).ok_or_else(bad)?;
    Ok((tag.to_string(), index, attempt))
}

impl ScriptBook {
    pub fn from_toml_str(text: &str) -> Result<Self, GatewayError> {
        let file: ScriptFile =
            toml::from_str(text).map_err(|e| GatewayError::Config(format!("script book: {e}")))?;
        let mut book = ScriptBook::default();
        for (k, v) in file.responses {
            book.insert_key(&k, v)?;
        }
        Ok(book)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("script book {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn insert(&mut self, tag: &str, index: u32, attempt: u32, entry: ScriptEntry) {
        self.entries
            .insert((tag.to_string(), index, attempt), entry);
    }

    pub fn insert_key(&mut self, key: &str, entry: ScriptEntry) -> Result<(), GatewayError> {
        self.entries.insert(parse_key(key)?, entry);
        Ok(())
    }

    pub fn get(&self, tag: &str, index: u32, attempt: u32) -> Option<&ScriptEntry> {
        self.entries.get(&(tag.to_string(), index, attempt))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_toml_string(&self) -> String {
        let responses: BTreeMap<String, &ScriptEntry> = self
            .entries
            .iter()
            .map(|((t, i, a), v)| (format!("{t}/{i}/{a}"), v))
            .collect();
        let mut doc = BTreeMap::new();
        doc.insert("responses", responses);
        toml::to_string(&doc).expect("script book serializes")
    }
}

/// Deterministic backend answering from a [`ScriptBook`]. Exact-match only.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    book: ScriptBook,
}

impl ScriptedBackend {
    pub fn new(book: ScriptBook) -> Self {
        Self { book }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &mut self,
        request: &ChatRequest,
        attempt: u32,
    ) -> Result<Completion, GatewayError> {
        let tag = &request.caller.tag;
        let index = request.caller.index;
        match self.book.get(tag, index, attempt) {
            Some(ScriptEntry::Text(text)) => Ok(Completion {
                text: text.clone(),
                usage: estimate_usage(request, text),
            }),
            Some(ScriptEntry::Fail { fail, message }) => Err(GatewayError::Scripted {
                message: message.clone(),
                transient: *fail == FailKind::Transient,
            }),
            None => Err(GatewayError::MissingScriptKey {
                tag: tag.clone(),
                index,
                attempt,
            }),
        }
    }

    fn describe(&self) -> String {
        format!("stub ({} scripted responses)", self.book.len())
    }
}

/// Answers from a previously recorded gateway log, reproducing both
/// successes and failures.
#[derive(Debug, Clone, Default)]
pub struct RecordedBackend {
    calls: BTreeMap<Key, CallOutcome>,
}

impl RecordedBackend {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a CallRecord>) -> Self {
        let calls = records
            .into_iter()
            .map(|r| ((r.tag.clone(), r.index, r.attempt), r.outcome.clone()))
            .collect();
        Self { calls }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Log(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (n, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let record: CallRecord = serde_json::from_str(line).map_err(|e| {
                GatewayError::Log(format!("{} line {}: {e}", path.display(), n + 1))
            })?;
            records.push(record);
        }
        Ok(Self::from_records(&records))
    }
}

impl ChatBackend for RecordedBackend {
    fn complete(
        &mut self,
        request: &ChatRequest,
        attempt: u32,
    ) -> Result<Completion, GatewayError> {
        let key = (request.caller.tag.clone(), request.caller.index, attempt);
        match self.calls.get(&key) {
            Some(CallOutcome::Ok { text, usage }) => Ok(Completion {
                text: text.clone(),
                usage: *usage,
            }),
            Some(CallOutcome::Err { message, transient }) => Err(GatewayError::Scripted {
                message: message.clone(),
                transient: *transient,
            }),
            None => Err(GatewayError::MissingRecordedCall {
                tag: key.0,
                index: key.1,
                attempt: key.2,
            }),
        }
    }

    fn describe(&self) -> String {
        format!("replay ({} recorded calls)", self.calls.len())
    }
}
