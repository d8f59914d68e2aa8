use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use super::RunStatus;
use crate::institution::{AgentMessage, PolicyDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    TickAdvanced {
        tick: u64,
        phase: u32,
    },
    MessageEmitted {
        message: AgentMessage,
    },
    DecisionApplied {
        phase: u32,
        tick: u64,
        decision: PolicyDecision,
        carried_over: bool,
    },
    StatusChanged {
        status: RunStatus,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// Position in the session's event log, from 0.
    pub seq: u64,
    pub run: u32,
    #[serde(flatten)]
    pub body: EventBody,
}

type Hook = Arc<dyn Fn(&SessionEvent) + Send + Sync>;

#[derive(Default)]
struct Inner {
    events: Vec<SessionEvent>,
    hooks: Vec<Hook>,
}

/// Append-only, shareable event log. Readers fetch by cursor, so late
/// subscribers see the same order as live ones.
#[derive(Clone, Default)]
pub struct EventLog {
    inner: Arc<Mutex<Inner>>,
}

impl fmt::Debug for EventLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventLog")
            .field("len", &self.len())
            .finish()
    }
}

impl EventLog {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn push(&self, run: u32, body: EventBody) -> SessionEvent {
        let (event, hooks) = {
            let mut inner = self.lock();
            let event = SessionEvent {
                seq: inner.events.len() as u64,
                run,
                body,
            };
            inner.events.push(event.clone());
            (event, inner.hooks.clone())
        };
        for hook in hooks {
            hook(&event);
        }
        event
    }

    /// Events with `seq >= cursor`.
    pub fn since(&self, cursor: u64) -> Vec<SessionEvent> {
        let inner = self.lock();
        inner
            .events
            .get(cursor as usize..)
            .map(<[_]>::to_vec)
            .unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.lock().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Calls `hook` after every future push, outside the log's lock.
    pub fn subscribe(&self, hook: impl Fn(&SessionEvent) + Send + Sync + 'static) {
        self.lock().hooks.push(Arc::new(hook));
    }
}
