//! Exhaustive exploration of joint states.

mod doc;

use std::collections::HashMap;
use std::fmt;

use log::debug;
use num_rational::Ratio;

use crate::lang::{EffectOp, Weight};
use crate::logic::{AtomId, AtomIndex, CAtom, CTerm, ConstId, Substitution};
use crate::mental::{ActionInstance, Busy, Engine, MentalState};

pub use doc::{
    BusyDoc, OutcomeDoc, StateDoc, SubstateDoc, TransitionDoc, TsDocument, TS_FORMAT_VERSION,
};

/// One mental state per agent, in declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JointState {
    pub agents: Vec<MentalState>,
}

impl JointState {
    pub fn initial(engine: &Engine) -> Self {
        JointState {
            agents: engine.initial_states().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum DecisionKind {
    /// Rule `rule` fired under `subst` and selected `instance`.
    Act {
        rule: usize,
        subst: Substitution,
        instance: ActionInstance,
    },
    /// The agent keeps working on its durative action.
    Continue { instance: ActionInstance },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Decision {
    pub agent: usize,
    pub kind: DecisionKind,
}

impl Decision {
    pub fn instance(&self) -> &ActionInstance {
        match &self.kind {
            DecisionKind::Act { instance, .. } | DecisionKind::Continue { instance } => instance,
        }
    }

    pub fn rule(&self) -> Option<usize> {
        match &self.kind {
            DecisionKind::Act { rule, .. } => Some(*rule),
            DecisionKind::Continue { .. } => None,
        }
    }

    pub fn is_continue(&self) -> bool {
        matches!(self.kind, DecisionKind::Continue { .. })
    }

    pub fn display<'a>(&'a self, engine: &'a Engine) -> impl fmt::Display + 'a {
        self.instance().display(engine.program(), engine.index())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("agent {0} does not exist")]
    NoSuchAgent(usize),
    #[error("agent {0} is busy")]
    Busy(usize),
    #[error("agent {0} has no action in progress")]
    Idle(usize),
    #[error("precondition of the decision does not hold")]
    Precondition,
    #[error("outcome {outcome} out of range (decision has {count})")]
    Outcome { outcome: usize, count: usize },
}

/// Decisions agent `agent` can take in `js`, in rule, substitution and
/// precondition-solution order.
pub fn agent_decisions(engine: &Engine, js: &JointState, agent: usize) -> Vec<Decision> {
    let ms = &js.agents[agent];
    if let Some(busy) = &ms.busy {
        return vec![Decision {
            agent,
            kind: DecisionKind::Continue {
                instance: busy.instance.clone(),
            },
        }];
    }
    let program = engine.program();
    let view = engine.view(ms);
    let mut out = Vec::new();
    for (ri, rule) in program.decision_rules.iter().enumerate() {
        let action = &program.actions[rule.action];
        for row in engine.solutions(&view, &rule.condition, vec![None; rule.condition.vars.len()]) {
            let mut init = vec![None; action.slots()];
            let mut consistent = true;
            for (t, &slot) in rule.args.iter().zip(&action.params) {
                let c = match *t {
                    CTerm::Const(c) => c,
                    CTerm::Var(v) => row[v],
                };
                // a repeated parameter must receive equal arguments
                consistent &= init[slot].is_none_or(|b| b == c);
                init[slot] = Some(c);
            }
            if !consistent {
                continue;
            }
            let subst = rule.condition.substitution(&row);
            for binding in engine.solutions(&view, &action.pre, init) {
                out.push(Decision {
                    agent,
                    kind: DecisionKind::Act {
                        rule: ri,
                        subst: subst.clone(),
                        instance: ActionInstance {
                            action: rule.action,
                            binding,
                        },
                    },
                });
            }
        }
    }
    out
}

/// Every agent's decisions, agents in declaration order.
pub fn enabled_decisions(engine: &Engine, js: &JointState) -> Vec<Decision> {
    (0..js.agents.len())
        .flat_map(|a| agent_decisions(engine, js, a))
        .collect()
}

/// Outcome distribution of `d` in `js`: the action's weights when the
/// decision completes the action, a single certain outcome otherwise.
pub fn outcome_weights(engine: &Engine, js: &JointState, d: &Decision) -> Vec<Weight> {
    let action = &engine.program().actions[d.instance().action];
    let completes = match &d.kind {
        DecisionKind::Act { .. } => action.duration == 1,
        DecisionKind::Continue { .. } => js.agents[d.agent]
            .busy
            .as_ref()
            .is_none_or(|b| b.remaining <= 1),
    };
    if completes {
        action.outcomes.iter().map(|o| o.weight).collect()
    } else {
        vec![Ratio::from_integer(1)]
    }
}

/// Binds the variables of `pattern` so that it equals `atom`.
fn match_atom(
    index: &AtomIndex,
    pattern: &CAtom,
    atom: AtomId,
    slots: &mut [Option<ConstId>],
) -> bool {
    let (pred, args) = index.decode(atom);
    if pred != pattern.pred {
        return false;
    }
    for (t, c) in pattern.args.iter().zip(args) {
        match *t {
            CTerm::Const(k) if k != c => return false,
            CTerm::Const(_) => {}
            CTerm::Var(v) => match slots[v] {
                Some(b) if b != c => return false,
                Some(_) => {}
                None => slots[v] = Some(c),
            },
        }
    }
    true
}

/// Successor of `js` when `d` is taken and resolves to outcome `outcome`.
///
/// The acting agent's effects are applied first; its send rules are then
/// evaluated on the updated state, every addressed agent processes its
/// mailbox in receive-rule then message order, and achieved goals are
/// dropped.
pub fn apply_decision(
    engine: &Engine,
    js: &JointState,
    d: &Decision,
    outcome: usize,
) -> Result<JointState, ApplyError> {
    let a = d.agent;
    if a >= js.agents.len() {
        return Err(ApplyError::NoSuchAgent(a));
    }
    let count = outcome_weights(engine, js, d).len();
    if outcome >= count {
        return Err(ApplyError::Outcome { outcome, count });
    }
    let program = engine.program();
    let mut agents = js.agents.clone();
    let mut ms = agents[a].clone();
    match &d.kind {
        DecisionKind::Act { instance, .. } => {
            if ms.busy.is_some() {
                return Err(ApplyError::Busy(a));
            }
            let action = &program.actions[instance.action];
            let init = instance.binding.iter().copied().map(Some).collect();
            if engine.solutions(&engine.view(&ms), &action.pre, init).is_empty() {
                return Err(ApplyError::Precondition);
            }
            if action.duration == 1 {
                ms = engine.apply_effects(ms, &engine.outcome_effects(instance, outcome));
            } else {
                ms.busy = Some(Busy {
                    instance: instance.clone(),
                    remaining: action.duration - 1,
                });
            }
        }
        DecisionKind::Continue { instance } => {
            let busy = ms.busy.take().ok_or(ApplyError::Idle(a))?;
            if busy.remaining > 1 {
                ms.busy = Some(Busy {
                    remaining: busy.remaining - 1,
                    ..busy
                });
            } else {
                ms = engine.apply_effects(ms, &engine.outcome_effects(instance, outcome));
            }
        }
    }
    agents[a] = ms;

    if !program.send_rules.is_empty() {
        let view = engine.view(&agents[a]);
        for rule in &program.send_rules {
            for row in engine.solutions(&view, &rule.condition, vec![None; rule.condition.vars.len()]) {
                let slots: Vec<Option<ConstId>> = row.into_iter().map(Some).collect();
                let msg = rule
                    .message
                    .ground(engine.index(), &slots)
                    .flatten()
                    .expect("message atoms are bound and typed");
                match rule.to {
                    Some(j) => agents[j].mailbox.push((a, msg)),
                    None => {
                        for (j, other) in agents.iter_mut().enumerate() {
                            if j != a {
                                other.mailbox.push((a, msg));
                            }
                        }
                    }
                }
            }
        }
    }

    for ms in agents.iter_mut() {
        if ms.mailbox.is_empty() {
            continue;
        }
        let mailbox = std::mem::take(&mut ms.mailbox);
        for rule in &program.recv_rules {
            for &(sender, msg) in &mailbox {
                if rule.from.is_some_and(|f| f != sender) {
                    continue;
                }
                let mut slots = vec![None; rule.vars];
                if !match_atom(engine.index(), &rule.pattern, msg, &mut slots) {
                    continue;
                }
                let atom = rule
                    .atom
                    .ground(engine.index(), &slots)
                    .flatten()
                    .expect("receive atoms are bound and typed");
                match rule.op {
                    EffectOp::Insert => ms.beliefs.insert(atom),
                    EffectOp::Delete => ms.beliefs.remove(atom),
                };
            }
        }
        *ms = engine.update_goals(ms.clone());
    }
    Ok(JointState { agents })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub max_states: usize,
    pub max_depth: Option<usize>,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            max_states: 100_000,
            max_depth: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    MaxStates,
    MaxDepth,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bound::MaxStates => "max-states",
            Bound::MaxDepth => "max-depth",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{bound} bound of {limit} exceeded after exploring {explored} states ({transitions} transitions)")]
pub struct BoundExceeded {
    pub bound: Bound,
    pub limit: usize,
    pub explored: usize,
    pub transitions: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub source: usize,
    /// `None` marks the self-loop added to a state without decisions.
    pub decision: Option<Decision>,
    pub outcomes: Vec<(Weight, usize)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StateLabel {
    pub safe: bool,
    pub goal: bool,
}

#[derive(Clone, Debug)]
pub struct TransitionSystem {
    pub states: Vec<JointState>,
    pub transitions: Vec<Transition>,
    pub labels: Vec<StateLabel>,
}

impl TransitionSystem {
    pub fn initial(&self) -> usize {
        0
    }

    /// Transitions leaving each state, as ranges into `transitions`.
    pub fn outgoing(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = vec![0..0; self.states.len()];
        let mut i = 0;
        while i < self.transitions.len() {
            let s = self.transitions[i].source;
            let start = i;
            while i < self.transitions.len() && self.transitions[i].source == s {
                i += 1;
            }
            out[s] = start..i;
        }
        out
    }

    pub fn state_id(&self, js: &JointState) -> Option<usize> {
        self.states.iter().position(|s| s == js)
    }
}

/// Breadth-first generation from the initial joint state. States are
/// numbered in discovery order and each state's transitions follow
/// [`enabled_decisions`] order.
pub fn generate_ts(engine: &Engine, bounds: Bounds) -> Result<TransitionSystem, BoundExceeded> {
    let initial = JointState::initial(engine);
    let mut states = vec![initial.clone()];
    let mut ids: HashMap<JointState, usize> = HashMap::from([(initial, 0)]);
    let mut depth = vec![0usize];
    let mut transitions = Vec::new();
    let mut next = 0;
    while next < states.len() {
        let js = states[next].clone();
        let decisions = enabled_decisions(engine, &js);
        if decisions.is_empty() {
            transitions.push(Transition {
                source: next,
                decision: None,
                outcomes: vec![(Ratio::from_integer(1), next)],
            });
        }
        for d in decisions {
            let weights = outcome_weights(engine, &js, &d);
            let mut outcomes = Vec::with_capacity(weights.len());
            for (k, w) in weights.into_iter().enumerate() {
                let succ = apply_decision(engine, &js, &d, k).expect("enabled decision applies");
                let target = match ids.get(&succ) {
                    Some(&t) => t,
                    None => {
                        let exceeded = |bound, limit| BoundExceeded {
                            bound,
                            limit,
                            explored: states.len(),
                            transitions: transitions.len(),
                        };
                        if states.len() >= bounds.max_states {
                            return Err(exceeded(Bound::MaxStates, bounds.max_states));
                        }
                        if let Some(limit) = bounds.max_depth {
                            if depth[next] + 1 > limit {
                                return Err(exceeded(Bound::MaxDepth, limit));
                            }
                        }
                        let t = states.len();
                        ids.insert(succ.clone(), t);
                        states.push(succ);
                        depth.push(depth[next] + 1);
                        t
                    }
                };
                outcomes.push((w, target));
            }
            transitions.push(Transition {
                source: next,
                decision: Some(d),
                outcomes,
            });
        }
        next += 1;
    }
    debug!(
        "generated {} states, {} transitions",
        states.len(),
        transitions.len()
    );
    let mut ts = TransitionSystem {
        labels: vec![StateLabel::default(); states.len()],
        states,
        transitions,
    };
    label_states(engine, &mut ts);
    Ok(ts)
}

/// Flags each state safe when every agent satisfies every safety
/// grounding, and goal when every goal base is empty.
pub fn label_states(engine: &Engine, ts: &mut TransitionSystem) {
    ts.labels = ts
        .states
        .iter()
        .map(|js| state_label(engine, js))
        .collect();
}

pub fn state_label(engine: &Engine, js: &JointState) -> StateLabel {
    let props: Vec<_> = js.agents.iter().map(|ms| engine.property(ms)).collect();
    StateLabel {
        safe: engine.is_safe(&props),
        goal: js.agents.iter().all(|ms| ms.goals.is_empty()),
    }
}

/// Action labels in the form `a<agent>_<action>_<k>`, where `k` numbers the
/// distinct (agent, kind, instance) triples in transition order; idle
/// self-loops are labelled `loop_<state>`.
pub fn transition_labels(engine: &Engine, ts: &TransitionSystem) -> Vec<String> {
    let mut ordinals: HashMap<(usize, bool, &ActionInstance), usize> = HashMap::new();
    ts.transitions
        .iter()
        .map(|t| match &t.decision {
            None => format!("loop_{}", t.source),
            Some(d) => {
                let n = ordinals.len();
                let k = *ordinals
                    .entry((d.agent, d.is_continue(), d.instance()))
                    .or_insert(n);
                let name = &engine.program().actions[d.instance().action].name;
                format!("a{}_{}_{}", d.agent, name, k)
            }
        })
        .collect()
}
