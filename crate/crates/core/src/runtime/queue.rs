use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::logic::{AtomError, AtomId};
use crate::mental::Engine;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateKind {
    Belief,
    Goal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateOp {
    Insert,
    Delete,
}

/// A sensor update as it appears on the wire.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub agent: String,
    pub kind: UpdateKind,
    pub op: UpdateOp,
    pub atom: String,
}

/// A validated update with its arrival sequence number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensorUpdate {
    pub agent: usize,
    pub kind: UpdateKind,
    pub op: UpdateOp,
    pub atom: AtomId,
    pub seq: u64,
    pub record: UpdateRecord,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum IngestError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error(transparent)]
    Atom(#[from] AtomError),
}

#[derive(Debug, Default)]
struct Inner {
    next_seq: u64,
    items: VecDeque<SensorUpdate>,
}

/// The node's only shared structure: producers enqueue, the decision loop
/// drains. Cloning yields another handle to the same queue.
#[derive(Clone, Debug)]
pub struct IngestQueue {
    engine: Arc<Engine>,
    inner: Arc<Mutex<Inner>>,
}

impl IngestQueue {
    pub fn new(engine: Arc<Engine>) -> Self {
        IngestQueue {
            engine,
            inner: Arc::default(),
        }
    }

    /// Validates and enqueues `record`, returning its sequence number.
    /// Invalid updates are dropped and logged.
    pub fn ingest(&self, record: UpdateRecord) -> Result<u64, IngestError> {
        let res = self.validate(&record);
        let (agent, atom) = match res {
            Ok(v) => v,
            Err(e) => {
                warn!("rejected update {record:?}: {e}");
                return Err(e);
            }
        };
        let mut inner = self.inner.lock().expect("queue lock");
        let seq = inner.next_seq;
        inner.next_seq += 1;
        inner.items.push_back(SensorUpdate {
            agent,
            kind: record.kind,
            op: record.op,
            atom,
            seq,
            record,
        });
        Ok(seq)
    }

    fn validate(&self, record: &UpdateRecord) -> Result<(usize, AtomId), IngestError> {
        let agent = self
            .engine
            .spec()
            .ast
            .agent_index(&record.agent)
            .ok_or_else(|| IngestError::UnknownAgent(record.agent.clone()))?;
        let atom = self.engine.index().parse(&record.atom)?;
        Ok((agent, atom))
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Removes every queued update in arrival order.
    pub fn drain(&self) -> Vec<SensorUpdate> {
        self.inner.lock().expect("queue lock").items.drain(..).collect()
    }
}
