//! A deliberately naive reference implementation.
//!
//! Atoms are plain strings, models are computed by full recomputation over
//! every grounding, conditions are checked by enumerating every assignment
//! of their variables, and states are deduplicated by linear scan. Nothing
//! here shares evaluation code with [`crate::logic`], [`crate::mental`] or
//! [`crate::ts`]; only the output document type is common.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;

use crate::lang::{
    Atom, EffectOp, MentalLiteral, Modality, Recipient, Term, ValidatedSpec, Weight,
};
use crate::ts::{BusyDoc, OutcomeDoc, StateDoc, SubstateDoc, TransitionDoc, TsDocument, TS_FORMAT_VERSION};

pub const ORACLE_STATE_CAP: usize = 2000;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("oracle state cap of {cap} exceeded")]
pub struct CapExceeded {
    pub cap: usize,
}

type Model = BTreeSet<String>;
type Binding = Vec<(String, String)>;

fn lookup<'a>(b: &'a Binding, var: &str) -> Option<&'a str> {
    b.iter().find(|(v, _)| v == var).map(|(_, c)| c.as_str())
}

/// Renders `atom` under `b`; `None` when a variable is unbound.
fn render(atom: &Atom, b: &Binding) -> Option<String> {
    if atom.args.is_empty() {
        return Some(atom.pred.clone());
    }
    let mut args = Vec::with_capacity(atom.args.len());
    for t in &atom.args {
        match t {
            Term::Const(c) => args.push(c.clone()),
            Term::Var(v) => args.push(lookup(b, v)?.to_string()),
        }
    }
    Some(format!("{}({})", atom.pred, args.join(",")))
}

/// Variables of `atoms` in order of first appearance, after `seed`.
fn vars_of<'a>(seed: &[String], atoms: impl IntoIterator<Item = &'a Atom>) -> Vec<String> {
    let mut out: Vec<String> = seed.to_vec();
    for a in atoms {
        for t in &a.args {
            if let Term::Var(v) = t {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
    }
    out
}

/// Every assignment of `vars` over their domains, lexicographic in the
/// constants' names.
fn assignments(spec: &ValidatedSpec, vars: &[String], atoms: &[&Atom]) -> Vec<Binding> {
    let mut out = vec![Vec::new()];
    for v in vars {
        let d = spec
            .var_domain(v, atoms.iter().copied())
            .expect("variable occurs in a typed atom");
        out = extend(out, v, &spec.domains[d].constants);
    }
    out
}

fn extend(partial: Vec<Binding>, var: &str, consts: &[String]) -> Vec<Binding> {
    partial
        .into_iter()
        .flat_map(|b| {
            consts.iter().map(move |c| {
                let mut b = b.clone();
                b.push((var.to_string(), c.clone()));
                b
            })
        })
        .collect()
}

/// Perfect model by naive recomputation, stratum by stratum.
pub fn naive_model(spec: &ValidatedSpec, facts: &Model) -> Model {
    let mut model = facts.clone();
    let top = spec
        .ast
        .knowledge
        .iter()
        .map(|r| spec.strata.stratum(&r.head.pred))
        .max();
    let Some(top) = top else {
        return model;
    };
    for stratum in 0..=top {
        loop {
            let mut next = model.clone();
            for r in &spec.ast.knowledge {
                if spec.strata.stratum(&r.head.pred) != stratum {
                    continue;
                }
                let mut atoms: Vec<&Atom> = vec![&r.head];
                atoms.extend(r.body.iter().map(|l| &l.atom));
                let vars = vars_of(&[], atoms.iter().copied());
                for b in assignments(spec, &vars, &atoms) {
                    let body_holds = r.body.iter().all(|l| {
                        model.contains(&render(&l.atom, &b).unwrap()) != l.negated
                    });
                    if body_holds {
                        next.insert(render(&r.head, &b).unwrap());
                    }
                }
            }
            if next == model {
                break;
            }
            model = next;
        }
    }
    model
}

/// Brute-force conjunctive query: every assignment of the conjunction's
/// variables under which the literals hold.
pub fn brute_query(spec: &ValidatedSpec, model: &Model, conj: &[crate::lang::Literal]) -> Vec<Binding> {
    let atoms: Vec<&Atom> = conj.iter().map(|l| &l.atom).collect();
    let vars = vars_of(&[], atoms.iter().copied());
    assignments(spec, &vars, &atoms)
        .into_iter()
        .filter(|b| {
            conj.iter()
                .all(|l| model.contains(&render(&l.atom, b).unwrap()) != l.negated)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Busy {
    action: usize,
    binding: Binding,
    remaining: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Mental {
    beliefs: Model,
    goals: Vec<Model>,
    busy: Option<Busy>,
}

type State = Vec<Mental>;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Kind {
    Act { rule: usize, subst: Binding },
    Continue,
}

#[derive(Clone, Debug)]
struct Choice {
    agent: usize,
    kind: Kind,
    action: usize,
    binding: Binding,
}

struct Oracle<'a> {
    spec: &'a ValidatedSpec,
}

impl Oracle<'_> {
    fn property(&self, m: &Mental) -> Model {
        naive_model(self.spec, &m.beliefs)
    }

    fn drop_achieved(&self, mut m: Mental) -> Mental {
        let p = self.property(&m);
        m.goals.retain(|g| !g.is_subset(&p));
        m
    }

    fn literal_holds(&self, m: &Mental, prop: &Model, l: &MentalLiteral, b: &Binding) -> bool {
        let atoms: Vec<String> = l.atoms.iter().map(|a| render(a, b).unwrap()).collect();
        let inner = match l.modality {
            Modality::Bel => atoms.iter().all(|a| prop.contains(a)),
            Modality::Goal => m.goals.iter().any(|g| {
                let gm = naive_model(self.spec, g);
                atoms.iter().all(|a| gm.contains(a))
            }),
        };
        inner != l.negated
    }

    /// Solutions of a condition. `params` lists declared variables (first
    /// in the assignment order) with their domains; `fixed` pins values.
    fn solve(
        &self,
        m: &Mental,
        cond: &[MentalLiteral],
        params: &[(String, usize)],
        fixed: &Binding,
    ) -> Vec<Binding> {
        let prop = self.property(m);
        let names: Vec<String> = params.iter().map(|(v, _)| v.clone()).collect();
        let vars = vars_of(&names, cond.iter().flat_map(|l| l.atoms.iter()));
        let mut result = vec![Vec::new()];
        for v in &vars {
            let consts = if let Some(c) = lookup(fixed, v) {
                vec![c.to_string()]
            } else if let Some((_, d)) = params.iter().find(|(p, _)| p == v) {
                self.spec.domains[*d].constants.clone()
            } else {
                let d = self
                    .spec
                    .var_domain(v, cond.iter().flat_map(|l| l.atoms.iter()))
                    .expect("condition variables are typed");
                self.spec.domains[d].constants.clone()
            };
            result = extend(result, v, &consts);
        }
        result
            .into_iter()
            .filter(|b| cond.iter().all(|l| self.literal_holds(m, &prop, l, b)))
            .collect()
    }

    fn choices(&self, s: &State) -> Vec<Choice> {
        let mut out = Vec::new();
        for (ai, m) in s.iter().enumerate() {
            if let Some(b) = &m.busy {
                out.push(Choice {
                    agent: ai,
                    kind: Kind::Continue,
                    action: b.action,
                    binding: b.binding.clone(),
                });
                continue;
            }
            for (ri, rule) in self.spec.ast.decision_rules.iter().enumerate() {
                let (action, decl) = self.spec.ast.action(&rule.action).unwrap();
                for subst in self.solve(m, &rule.condition, &[], &Vec::new()) {
                    let mut fixed: Binding = Vec::new();
                    let mut ok = true;
                    for (p, t) in decl.params.iter().zip(&rule.args) {
                        let c = match t {
                            Term::Const(c) => c.clone(),
                            Term::Var(v) => lookup(&subst, v).unwrap().to_string(),
                        };
                        match lookup(&fixed, &p.var) {
                            Some(prev) if prev != c => ok = false,
                            Some(_) => {}
                            None => fixed.push((p.var.clone(), c)),
                        }
                    }
                    if !ok {
                        continue;
                    }
                    for binding in self.solve_pre(m, action, &fixed) {
                        out.push(Choice {
                            agent: ai,
                            kind: Kind::Act {
                                rule: ri,
                                subst: subst.clone(),
                            },
                            action,
                            binding,
                        });
                    }
                }
            }
        }
        out
    }

    fn solve_pre(&self, m: &Mental, action: usize, fixed: &Binding) -> Vec<Binding> {
        let decl = &self.spec.ast.actions[action];
        let params: Vec<(String, usize)> = decl
            .params
            .iter()
            .map(|p| (p.var.clone(), self.spec.domain_index(&p.domain).unwrap()))
            .collect();
        self.solve(m, &decl.precondition, &params, fixed)
    }

    fn weights(&self, s: &State, c: &Choice) -> Vec<Weight> {
        let decl = &self.spec.ast.actions[c.action];
        let completes = match c.kind {
            Kind::Act { .. } => decl.duration == 1,
            Kind::Continue => s[c.agent].busy.as_ref().unwrap().remaining == 1,
        };
        if completes {
            decl.outcomes.iter().map(|o| o.weight).collect()
        } else {
            vec![Ratio::from_integer(1)]
        }
    }

    fn apply_outcome(&self, mut m: Mental, action: usize, binding: &Binding, k: usize) -> Mental {
        let effects = &self.spec.ast.actions[action].outcomes[k].effects;
        let mut deleted = m.beliefs.clone();
        for e in effects.iter().filter(|e| e.op == EffectOp::Delete) {
            deleted.remove(&render(&e.atom, binding).unwrap());
        }
        for e in effects.iter().filter(|e| e.op == EffectOp::Insert) {
            deleted.insert(render(&e.atom, binding).unwrap());
        }
        m.beliefs = deleted;
        self.drop_achieved(m)
    }

    fn step(&self, s: &State, c: &Choice, k: usize) -> State {
        let mut s = s.clone();
        let a = c.agent;
        let decl = &self.spec.ast.actions[c.action];
        let m = s[a].clone();
        s[a] = match c.kind {
            Kind::Act { .. } if decl.duration > 1 => Mental {
                busy: Some(Busy {
                    action: c.action,
                    binding: c.binding.clone(),
                    remaining: decl.duration - 1,
                }),
                ..m
            },
            Kind::Act { .. } => self.apply_outcome(m, c.action, &c.binding, k),
            Kind::Continue => {
                let busy = m.busy.clone().unwrap();
                if busy.remaining > 1 {
                    Mental {
                        busy: Some(Busy {
                            remaining: busy.remaining - 1,
                            ..busy
                        }),
                        ..m
                    }
                } else {
                    self.apply_outcome(Mental { busy: None, ..m }, c.action, &c.binding, k)
                }
            }
        };

        let mut mail: Vec<Vec<(usize, String)>> = vec![Vec::new(); s.len()];
        for rule in &self.spec.ast.send_rules {
            for b in self.solve(&s[a], &rule.condition, &[], &Vec::new()) {
                let msg = render(&rule.message, &b).unwrap();
                for (j, inbox) in mail.iter_mut().enumerate() {
                    let to = match &rule.to {
                        Recipient::All => j != a,
                        Recipient::Agent(n) => self.spec.ast.agents[j].name == *n,
                    };
                    if to {
                        inbox.push((a, msg.clone()));
                    }
                }
            }
        }
        for (j, inbox) in mail.into_iter().enumerate() {
            if inbox.is_empty() {
                continue;
            }
            let mut m = s[j].clone();
            for rule in &self.spec.ast.recv_rules {
                for (sender, msg) in &inbox {
                    if let Some(f) = &rule.from {
                        if self.spec.ast.agents[*sender].name != *f {
                            continue;
                        }
                    }
                    let vars = vars_of(&[], [&rule.pattern]);
                    let matched = assignments(self.spec, &vars, &[&rule.pattern])
                        .into_iter()
                        .find(|b| render(&rule.pattern, b).as_deref() == Some(msg.as_str()));
                    if let Some(b) = matched {
                        let atom = render(&rule.atom, &b).unwrap();
                        match rule.op {
                            EffectOp::Insert => m.beliefs.insert(atom),
                            EffectOp::Delete => m.beliefs.remove(&atom),
                        };
                    }
                }
            }
            s[j] = self.drop_achieved(m);
        }
        s
    }

    fn safe(&self, s: &State) -> bool {
        s.iter().all(|m| {
            let prop = self.property(m);
            self.spec
                .ast
                .safety
                .iter()
                .all(|c| brute_query_all(self.spec, &prop, &c.literals))
        })
    }

    fn initial(&self) -> State {
        self.spec
            .ast
            .agents
            .iter()
            .map(|a| {
                let empty = Vec::new();
                let beliefs = a.beliefs.iter().map(|x| render(x, &empty).unwrap()).collect();
                let goals = a
                    .goals
                    .iter()
                    .map(|g| g.iter().map(|x| render(x, &empty).unwrap()).collect())
                    .collect();
                self.drop_achieved(Mental {
                    beliefs,
                    goals,
                    busy: None,
                })
            })
            .collect()
    }

    fn action_string(&self, action: usize, binding: &Binding) -> String {
        let decl = &self.spec.ast.actions[action];
        if decl.params.is_empty() {
            return decl.name.clone();
        }
        let args: Vec<&str> = decl.params.iter().map(|p| lookup(binding, &p.var).unwrap()).collect();
        format!("{}({})", decl.name, args.join(","))
    }

    fn substate_doc(&self, m: &Mental) -> SubstateDoc {
        SubstateDoc {
            beliefs: m.beliefs.iter().cloned().collect(),
            goals: m.goals.iter().map(|g| g.iter().cloned().collect()).collect(),
            busy: m.busy.as_ref().map(|b| BusyDoc {
                action: self.action_string(b.action, &b.binding),
                binding: b.binding.iter().cloned().collect(),
                remaining: b.remaining,
            }),
        }
    }
}

/// True iff every assignment of the literals' variables satisfies them.
fn brute_query_all(spec: &ValidatedSpec, model: &Model, lits: &[crate::lang::Literal]) -> bool {
    let atoms: Vec<&Atom> = lits.iter().map(|l| &l.atom).collect();
    let vars = vars_of(&[], atoms.iter().copied());
    assignments(spec, &vars, &atoms)
        .iter()
        .all(|b| lits.iter().all(|l| model.contains(&render(&l.atom, b).unwrap()) != l.negated))
}

/// Explores the spec breadth-first and returns the `ts.json` document.
pub fn oracle_document(spec: &ValidatedSpec, cap: usize) -> Result<TsDocument, CapExceeded> {
    let o = Oracle { spec };
    let mut states: Vec<State> = vec![o.initial()];
    let mut transitions = Vec::new();
    let mut keys: Vec<(usize, bool, usize, Binding)> = Vec::new();
    let mut i = 0;
    while i < states.len() {
        let s = states[i].clone();
        let choices = o.choices(&s);
        if choices.is_empty() {
            transitions.push(TransitionDoc {
                source: i,
                label: format!("loop_{i}"),
                kind: "idle".into(),
                agent: None,
                rule: None,
                action: None,
                subst: BTreeMap::new(),
                outcomes: vec![OutcomeDoc {
                    prob: "1".into(),
                    target: i,
                }],
            });
        }
        for c in choices {
            let mut outcomes = Vec::new();
            for (k, w) in o.weights(&s, &c).into_iter().enumerate() {
                let next = o.step(&s, &c, k);
                let target = match states.iter().position(|x| *x == next) {
                    Some(t) => t,
                    None => {
                        if states.len() >= cap {
                            return Err(CapExceeded { cap });
                        }
                        states.push(next);
                        states.len() - 1
                    }
                };
                outcomes.push(OutcomeDoc {
                    prob: w.to_string(),
                    target,
                });
            }
            let is_continue = c.kind == Kind::Continue;
            let key = (c.agent, is_continue, c.action, c.binding.clone());
            let ordinal = match keys.iter().position(|k| *k == key) {
                Some(n) => n,
                None => {
                    keys.push(key);
                    keys.len() - 1
                }
            };
            let (kind, rule, subst) = match &c.kind {
                Kind::Act { rule, subst } => ("act", Some(*rule), subst.iter().cloned().collect()),
                Kind::Continue => ("continue", None, BTreeMap::new()),
            };
            transitions.push(TransitionDoc {
                source: i,
                label: format!("a{}_{}_{}", c.agent, spec.ast.actions[c.action].name, ordinal),
                kind: kind.into(),
                agent: Some(spec.ast.agents[c.agent].name.clone()),
                rule,
                action: Some(o.action_string(c.action, &c.binding)),
                subst,
                outcomes,
            });
        }
        i += 1;
    }
    let states = states
        .iter()
        .enumerate()
        .map(|(id, s)| StateDoc {
            id,
            agents: s.iter().map(|m| o.substate_doc(m)).collect(),
            safe: o.safe(s),
            goal: s.iter().all(|m| m.goals.is_empty()),
        })
        .collect();
    Ok(TsDocument {
        version: TS_FORMAT_VERSION,
        agents: spec.ast.agents.iter().map(|a| a.name.clone()).collect(),
        initial: 0,
        states,
        transitions,
    })
}

/// One step of an oracle replay of the runtime node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayStep {
    pub step: u64,
    pub agent: Option<String>,
    pub action: Option<String>,
    pub outcome: Option<usize>,
    pub committed: bool,
    pub agents: Vec<SubstateDoc>,
}

/// Replays the runtime node without sensors: agents are scheduled
/// round-robin, decisions tried in order, outcomes drawn from SplitMix64
/// seeded with `seed` whenever there is more than one, and the first safe
/// result kept. Stops after `max_steps` or `quiesce` idle steps in a row.
pub fn oracle_replay(spec: &ValidatedSpec, seed: u64, max_steps: u64, quiesce: usize) -> Vec<ReplayStep> {
    use rand_core::{RngCore, SeedableRng};

    let o = Oracle { spec };
    let n = spec.ast.agents.len();
    let mut rng = rand_xoshiro::SplitMix64::seed_from_u64(seed);
    let mut s = o.initial();
    let mut cursor = 0;
    let mut idle = 0;
    let mut out = Vec::new();
    for step in 1..=max_steps {
        let all = o.choices(&s);
        let mut rec = ReplayStep {
            step,
            agent: None,
            action: None,
            outcome: None,
            committed: false,
            agents: Vec::new(),
        };
        if let Some(agent) = (0..n).map(|i| (cursor + i) % n).find(|a| all.iter().any(|c| c.agent == *a)) {
            cursor = (agent + 1) % n;
            rec.agent = Some(spec.ast.agents[agent].name.clone());
            for c in all.iter().filter(|c| c.agent == agent) {
                let w = o.weights(&s, c);
                let k = if w.len() > 1 {
                    let u = rng.next_u64() as u128;
                    let mut cum = Ratio::from_integer(0i64);
                    let mut pick = w.len() - 1;
                    for (k, x) in w.iter().enumerate() {
                        cum += x;
                        if u * (*cum.denom() as u128) < (*cum.numer() as u128) << 64 {
                            pick = k;
                            break;
                        }
                    }
                    pick
                } else {
                    0
                };
                let next = o.step(&s, c, k);
                if o.safe(&next) {
                    rec.action = Some(o.action_string(c.action, &c.binding));
                    rec.outcome = Some(k);
                    rec.committed = true;
                    s = next;
                    break;
                }
            }
        }
        rec.agents = s.iter().map(|m| o.substate_doc(m)).collect();
        idle = if rec.committed { 0 } else { idle + 1 };
        out.push(rec);
        if quiesce > 0 && idle >= quiesce {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::load_spec;

    const TOWER: &str = include_str!("../../../fixtures/tower.masv");

    fn model(src: &str, facts: &[&str]) -> Vec<String> {
        let spec = load_spec(src).unwrap();
        naive_model(&spec, &facts.iter().map(|s| s.to_string()).collect())
            .into_iter()
            .collect()
    }

    #[test]
    fn tower_initial_model() {
        let m = model(
            TOWER,
            &["block(a)", "block(b)", "block(c)", "on(b,a)", "on(c,b)"],
        );
        assert_eq!(
            m,
            vec![
                "block(a)", "block(b)", "block(c)", "clear(c)", "clear(table)", "occupied(a)",
                "occupied(b)", "on(b,a)", "on(c,b)",
            ]
        );
    }

    #[test]
    fn negation_respects_strata() {
        let m = model(
            "system { domains { o = {a}; } knowledge { q :- not r. r :- p. } actions { } rules { } } \
             agent x { beliefs { } goals { } }",
            &["p"],
        );
        assert_eq!(m, vec!["p", "r"]);
    }

    #[test]
    fn tower_document() {
        let spec = load_spec(TOWER).unwrap();
        let doc = oracle_document(&spec, ORACLE_STATE_CAP).unwrap();
        assert_eq!(doc.states.len(), 5);
        assert_eq!(doc.transitions.len(), 7);
        assert!(doc.states[4].goal);
    }

    #[test]
    fn tower_replay_reaches_goal() {
        let spec = load_spec(TOWER).unwrap();
        let r = oracle_replay(&spec, 42, 100, 3);
        let actions: Vec<&str> = r.iter().filter_map(|x| x.action.as_deref()).collect();
        assert_eq!(actions, vec!["move(c,table)", "move(b,c)", "move(a,b)"]);
        assert_eq!(r.len(), 6);
        assert!(r.last().unwrap().agents[0].goals.is_empty());
    }

    #[test]
    fn cap_exceeded() {
        let spec = load_spec(TOWER).unwrap();
        assert_eq!(oracle_document(&spec, 3), Err(CapExceeded { cap: 3 }));
    }
}
