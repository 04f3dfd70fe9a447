//! The `ts.json` document.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{transition_labels, DecisionKind, JointState, StateLabel, TransitionSystem};
use crate::mental::{Engine, MentalState};

pub const TS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusyDoc {
    pub action: String,
    pub binding: BTreeMap<String, String>,
    pub remaining: u32,
}

/// One agent's mental state with atoms rendered as sorted strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstateDoc {
    pub beliefs: Vec<String>,
    pub goals: Vec<Vec<String>>,
    pub busy: Option<BusyDoc>,
}

impl SubstateDoc {
    pub fn new(engine: &Engine, ms: &MentalState) -> Self {
        let index = engine.index();
        let busy = ms.busy.as_ref().map(|b| {
            let action = &engine.program().actions[b.instance.action];
            BusyDoc {
                action: b.instance.display(engine.program(), index).to_string(),
                binding: action
                    .pre
                    .vars
                    .names()
                    .iter()
                    .zip(&b.instance.binding)
                    .map(|(n, &c)| (n.to_string(), index.constant_name(c).to_string()))
                    .collect(),
                remaining: b.remaining,
            }
        });
        SubstateDoc {
            beliefs: ms.beliefs.to_strings(index),
            goals: ms.goals.iter().map(|g| g.to_strings(index)).collect(),
            busy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDoc {
    pub id: usize,
    pub agents: Vec<SubstateDoc>,
    pub safe: bool,
    pub goal: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeDoc {
    /// Exact rational such as `9/10`.
    pub prob: String,
    pub target: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDoc {
    pub source: usize,
    pub label: String,
    /// `act`, `continue` or `idle`.
    pub kind: String,
    pub agent: Option<String>,
    pub rule: Option<usize>,
    pub action: Option<String>,
    pub subst: BTreeMap<String, String>,
    pub outcomes: Vec<OutcomeDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TsDocument {
    pub version: u32,
    pub agents: Vec<String>,
    pub initial: usize,
    pub states: Vec<StateDoc>,
    pub transitions: Vec<TransitionDoc>,
}

impl TsDocument {
    pub fn new(engine: &Engine, ts: &TransitionSystem) -> Self {
        let index = engine.index();
        let states = ts
            .states
            .iter()
            .zip(&ts.labels)
            .enumerate()
            .map(|(id, (js, label))| state_doc(engine, id, js, *label))
            .collect();
        let labels = transition_labels(engine, ts);
        let transitions = ts
            .transitions
            .iter()
            .zip(labels)
            .map(|(t, label)| {
                let (kind, agent, rule, action, subst) = match &t.decision {
                    None => ("idle", None, None, None, BTreeMap::new()),
                    Some(d) => {
                        let subst = match &d.kind {
                            DecisionKind::Act { subst, .. } => subst
                                .iter()
                                .map(|(n, c)| (n.to_string(), index.constant_name(c).to_string()))
                                .collect(),
                            DecisionKind::Continue { .. } => BTreeMap::new(),
                        };
                        (
                            if d.is_continue() { "continue" } else { "act" },
                            Some(engine.agent_name(d.agent).to_string()),
                            d.rule(),
                            Some(d.display(engine).to_string()),
                            subst,
                        )
                    }
                };
                TransitionDoc {
                    source: t.source,
                    label,
                    kind: kind.to_string(),
                    agent,
                    rule,
                    action,
                    subst,
                    outcomes: t
                        .outcomes
                        .iter()
                        .map(|(w, target)| OutcomeDoc {
                            prob: w.to_string(),
                            target: *target,
                        })
                        .collect(),
                }
            })
            .collect();
        TsDocument {
            version: TS_FORMAT_VERSION,
            agents: engine.agent_names(),
            initial: ts.initial(),
            states,
            transitions,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub(crate) fn state_doc(engine: &Engine, id: usize, js: &JointState, label: StateLabel) -> StateDoc {
    StateDoc {
        id,
        agents: js.agents.iter().map(|ms| SubstateDoc::new(engine, ms)).collect(),
        safe: label.safe,
        goal: label.goal,
    }
}
