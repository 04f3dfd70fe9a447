//! The runtime decision node: one decision per step, committed only when
//! the resulting state passes the safety check.

mod queue;
mod run;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info};
use num_rational::Ratio;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::lang::Weight;
use crate::mental::{Engine, Verdict};
use crate::ts::{agent_decisions, apply_decision, outcome_weights, Decision, DecisionKind, JointState, SubstateDoc};

pub use queue::{IngestError, IngestQueue, SensorUpdate, UpdateKind, UpdateOp, UpdateRecord};
pub use run::{
    run_loop, ActionCommand, Dispatcher, Feed, Limits, NdjsonDispatcher, NoFeed, RunError,
    SimulatedAgents, Trace, TraceSummary,
};

/// Index of the first outcome whose cumulative weight exceeds `u / 2^64`.
///
/// With `W_k` the cumulative weight of outcomes `0..=k`, outcome `k` is
/// chosen for the least `k` with `u < W_k * 2^64`.
pub fn sample_outcome(weights: &[Weight], u: u64) -> usize {
    let mut cum = Ratio::from_integer(0i64);
    for (k, w) in weights.iter().enumerate() {
        cum += w;
        let lhs = u as u128 * *cum.denom() as u128;
        let rhs = (*cum.numer() as u128) << 64;
        if lhs < rhs {
            return k;
        }
    }
    weights.len() - 1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub constraint: usize,
    pub binding: BTreeMap<String, String>,
    pub agent: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub safe: bool,
    pub violations: Vec<ViolationRecord>,
}

impl VerdictRecord {
    pub fn new(engine: &Engine, v: &Verdict) -> Self {
        VerdictRecord {
            safe: v.safe,
            violations: v
                .violations
                .iter()
                .map(|x| ViolationRecord {
                    constraint: x.constraint,
                    binding: x
                        .binding
                        .iter()
                        .map(|(n, c)| (n.to_string(), engine.index().constant_name(c).to_string()))
                        .collect(),
                    agent: engine.agent_name(x.agent).to_string(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub agent: String,
    /// `act` or `continue`.
    pub kind: String,
    pub rule: Option<usize>,
    pub action: String,
    pub subst: BTreeMap<String, String>,
}

impl DecisionRecord {
    pub fn new(engine: &Engine, d: &Decision) -> Self {
        let subst = match &d.kind {
            DecisionKind::Act { subst, .. } => subst
                .iter()
                .map(|(n, c)| (n.to_string(), engine.index().constant_name(c).to_string()))
                .collect(),
            DecisionKind::Continue { .. } => BTreeMap::new(),
        };
        DecisionRecord {
            agent: engine.agent_name(d.agent).to_string(),
            kind: if d.is_continue() { "continue" } else { "act" }.to_string(),
            rule: d.rule(),
            action: d.display(engine).to_string(),
            subst,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub decision: DecisionRecord,
    pub outcome: usize,
    pub verdict: VerdictRecord,
    /// Time spent in the safety check; kept out of traces so that they
    /// are reproducible.
    #[serde(skip)]
    pub check_ns: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrainedUpdate {
    pub seq: u64,
    #[serde(flatten)]
    pub record: UpdateRecord,
}

/// One decision cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub drained: Vec<DrainedUpdate>,
    /// Whether the state after sensor updates satisfies every constraint.
    pub state_safe: bool,
    /// Agent selected by the scheduler, if any had decisions.
    pub agent: Option<String>,
    pub considered: Vec<DecisionRecord>,
    pub attempts: Vec<Attempt>,
    pub chosen: Option<DecisionRecord>,
    pub outcome: Option<usize>,
    pub committed: bool,
    /// Committed joint state, present only when `committed`.
    pub state: Option<Vec<SubstateDoc>>,
    /// Total safety-check time of the step.
    #[serde(skip)]
    pub check_ns: u64,
}

impl StepReport {
    /// Attempts were made and every one of them was unsafe.
    pub fn unsafe_only(&self) -> bool {
        !self.attempts.is_empty() && !self.committed
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error("initial state violates safety: {0:?}")]
    InitiallyUnsafe(VerdictRecord),
}

/// Serializable view of the node used to compare states across steps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub step: u64,
    pub cursor: usize,
    pub agents: Vec<SubstateDoc>,
}

pub struct Node {
    engine: Arc<Engine>,
    current: JointState,
    cursor: usize,
    rng: SplitMix64,
    step: u64,
    queue: IngestQueue,
}

impl Node {
    pub fn new(engine: Arc<Engine>, seed: u64) -> Result<Self, NodeError> {
        let current = JointState::initial(&engine);
        let props: Vec<_> = current.agents.iter().map(|m| engine.property(m)).collect();
        let verdict = engine.safety_check(&props);
        if !verdict.safe {
            return Err(NodeError::InitiallyUnsafe(VerdictRecord::new(&engine, &verdict)));
        }
        Ok(Node {
            queue: IngestQueue::new(engine.clone()),
            engine,
            current,
            cursor: 0,
            rng: SplitMix64::seed_from_u64(seed),
            step: 0,
        })
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn current(&self) -> &JointState {
        &self.current
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// A producer handle onto the node's ingestion queue.
    pub fn queue(&self) -> IngestQueue {
        self.queue.clone()
    }

    pub fn ingest(&self, record: UpdateRecord) -> Result<u64, IngestError> {
        self.queue.ingest(record)
    }

    pub fn snapshot(&self) -> NodeSnapshot {
        NodeSnapshot {
            step: self.step,
            cursor: self.cursor,
            agents: self.state_doc(&self.current),
        }
    }

    fn state_doc(&self, js: &JointState) -> Vec<SubstateDoc> {
        js.agents
            .iter()
            .map(|m| SubstateDoc::new(&self.engine, m))
            .collect()
    }

    fn apply_updates(&mut self, updates: &[SensorUpdate]) {
        let mut touched = vec![false; self.current.agents.len()];
        for u in updates {
            let ms = &mut self.current.agents[u.agent];
            match (u.kind, u.op) {
                (UpdateKind::Belief, UpdateOp::Insert) => {
                    ms.beliefs.insert(u.atom);
                }
                (UpdateKind::Belief, UpdateOp::Delete) => {
                    ms.beliefs.remove(u.atom);
                }
                (UpdateKind::Goal, UpdateOp::Insert) => ms.adopt_goal(u.atom),
                (UpdateKind::Goal, UpdateOp::Delete) => ms.drop_goals_with(u.atom),
            }
            touched[u.agent] = true;
        }
        for (a, t) in touched.into_iter().enumerate() {
            if t {
                let ms = self.current.agents[a].clone();
                self.current.agents[a] = self.engine.update_goals(ms);
            }
        }
    }

    /// Runs one decision cycle.
    pub fn step_once(&mut self) -> (StepReport, Option<ActionCommand>) {
        self.step += 1;
        let engine = self.engine.clone();
        let updates = self.queue.drain();
        self.apply_updates(&updates);
        let props: Vec<_> = self.current.agents.iter().map(|m| engine.property(m)).collect();
        let state_safe = engine.is_safe(&props);

        let mut report = StepReport {
            step: self.step,
            drained: updates
                .iter()
                .map(|u| DrainedUpdate {
                    seq: u.seq,
                    record: u.record.clone(),
                })
                .collect(),
            state_safe,
            agent: None,
            considered: Vec::new(),
            attempts: Vec::new(),
            chosen: None,
            outcome: None,
            committed: false,
            state: None,
            check_ns: 0,
        };

        let n = self.current.agents.len();
        let Some((agent, decisions)) = (0..n)
            .map(|i| (self.cursor + i) % n)
            .map(|a| (a, agent_decisions(&engine, &self.current, a)))
            .find(|(_, ds)| !ds.is_empty())
        else {
            debug!("step {}: no enabled decisions", self.step);
            return (report, None);
        };
        report.agent = Some(engine.agent_name(agent).to_string());
        report.considered = decisions.iter().map(|d| DecisionRecord::new(&engine, d)).collect();
        self.cursor = (agent + 1) % n;

        let mut command = None;
        for d in &decisions {
            let weights = outcome_weights(&engine, &self.current, d);
            let outcome = if weights.len() > 1 {
                sample_outcome(&weights, self.rng.next_u64())
            } else {
                0
            };
            let next = apply_decision(&engine, &self.current, d, outcome)
                .expect("enabled decision applies");
            let props: Vec<_> = next.agents.iter().map(|m| engine.property(m)).collect();
            let started = Instant::now();
            let verdict = engine.safety_check(&props);
            let check_ns = started.elapsed().as_nanos() as u64;
            report.check_ns += check_ns;
            let record = DecisionRecord::new(&engine, d);
            report.attempts.push(Attempt {
                decision: record.clone(),
                outcome,
                verdict: VerdictRecord::new(&engine, &verdict),
                check_ns,
            });
            if verdict.safe {
                if !d.is_continue() {
                    command = Some(ActionCommand {
                        step: self.step,
                        agent: record.agent.clone(),
                        action: record.action.clone(),
                        outcome,
                    });
                }
                report.state = Some(self.state_doc(&next));
                report.chosen = Some(record);
                report.outcome = Some(outcome);
                report.committed = true;
                self.current = next;
                break;
            }
            info!(
                "step {}: rejected {} (outcome {outcome})",
                self.step,
                d.display(&engine)
            );
        }
        (report, command)
    }

    /// Safety verdict of the current state.
    pub fn verdict(&self) -> Verdict {
        let props: Vec<_> = self
            .current
            .agents
            .iter()
            .map(|m| self.engine.property(m))
            .collect();
        self.engine.safety_check(&props)
    }
}
