//! Seeded random generators for specifications, programs and sensor
//! scenarios, shared by the property and acceptance tests.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::mental::Engine;
use crate::prism::ParsedModel;
use crate::runtime::{StepReport, UpdateKind, UpdateOp, UpdateRecord};
use crate::sensor::{Scenario, ScenarioEntry, ScenarioInput};
use crate::ts::{SubstateDoc, TsDocument};

pub struct Gen {
    rng: SplitMix64,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen {
            rng: SplitMix64::seed_from_u64(seed),
        }
    }

    /// Uniform in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        (self.rng.next_u64() % n as u64) as usize
    }

    /// Uniform in `lo..=hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    /// True with probability `num / den`.
    pub fn chance(&mut self, num: usize, den: usize) -> bool {
        self.below(den) < num
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len())]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProgramShape {
    pub max_predicates: usize,
    pub max_strata: usize,
    pub max_constants: usize,
    pub max_rules: usize,
}

impl Default for ProgramShape {
    fn default() -> Self {
        ProgramShape {
            max_predicates: 8,
            max_strata: 3,
            max_constants: 5,
            max_rules: 30,
        }
    }
}

struct Pred {
    name: String,
    arity: usize,
    level: usize,
}

const VARS: [&str; 3] = ["X", "Y", "Z"];

fn atom(name: &str, args: &[String]) -> String {
    if args.is_empty() {
        name.to_string()
    } else {
        format!("{name}({})", args.join(", "))
    }
}

fn ground_args(g: &mut Gen, arity: usize, consts: &[String]) -> Vec<String> {
    (0..arity).map(|_| g.pick(consts).clone()).collect()
}

/// One range-restricted rule with head `head`; positive body predicates sit
/// at or below the head's level and negated ones strictly below it.
fn random_rule(g: &mut Gen, preds: &[Pred], head: &Pred, consts: &[String]) -> String {
    let pos: Vec<&Pred> = preds.iter().filter(|p| p.level <= head.level).collect();
    let neg: Vec<&Pred> = preds.iter().filter(|p| p.level < head.level).collect();
    let mut bound: Vec<String> = Vec::new();
    let mut body = Vec::new();
    for _ in 0..g.range(1, 3) {
        let p = *g.pick(&pos);
        let args: Vec<String> = (0..p.arity)
            .map(|_| {
                if g.chance(1, 5) {
                    g.pick(consts).clone()
                } else {
                    let v = g.pick(&VARS).to_string();
                    if !bound.contains(&v) {
                        bound.push(v.clone());
                    }
                    v
                }
            })
            .collect();
        body.push(atom(&p.name, &args));
    }
    let term = |g: &mut Gen, bound: &[String]| {
        if bound.is_empty() || g.chance(1, 6) {
            g.pick(consts).clone()
        } else {
            g.pick(bound).clone()
        }
    };
    if !neg.is_empty() {
        for _ in 0..g.below(3) {
            let p = *g.pick(&neg);
            let args: Vec<String> = (0..p.arity).map(|_| term(g, &bound)).collect();
            body.push(format!("not {}", atom(&p.name, &args)));
        }
    }
    let head_args: Vec<String> = (0..head.arity).map(|_| term(g, &bound)).collect();
    format!("{} :- {}.", atom(&head.name, &head_args), body.join(", "))
}

/// A random stratified knowledge base over one domain, with base facts as
/// the beliefs of a single agent.
pub fn random_program(g: &mut Gen, shape: ProgramShape) -> String {
    let nconst = g.range(1, shape.max_constants);
    let consts: Vec<String> = (0..nconst).map(|i| format!("k{i}")).collect();
    let npred = g.range(2, shape.max_predicates);
    let strata = g.range(1, shape.max_strata);
    let preds: Vec<Pred> = (0..npred)
        .map(|i| Pred {
            name: format!("p{i}"),
            arity: g.below(3),
            level: if i == 0 { 0 } else { g.below(strata) },
        })
        .collect();
    let mut knowledge = String::new();
    let mut beliefs = String::new();
    let heads: Vec<&Pred> = preds.iter().skip(1).filter(|_| g.chance(2, 3)).collect();
    for p in &preds {
        let derived = heads.iter().any(|h| h.name == p.name);
        let facts = if p.arity == 0 { g.below(2) } else { g.range(1, 3) };
        for _ in 0..facts.max(p.arity.min(1)) {
            let f = format!("    {}.\n", atom(&p.name, &ground_args(g, p.arity, &consts)));
            if derived {
                knowledge.push_str(&f);
            } else {
                beliefs.push_str(&f);
            }
        }
    }
    if !heads.is_empty() {
        for _ in 0..g.range(1, shape.max_rules) {
            let h = *g.pick(&heads);
            let _ = writeln!(knowledge, "    {}", random_rule(g, &preds, h, &consts));
        }
    }
    format!(
        "system {{\n  domains {{\n    d = {{{}}};\n  }}\n  knowledge {{\n{knowledge}  }}\n  actions {{ }}\n  rules {{ }}\n}}\n\nagent r1 {{\n  beliefs {{\n{beliefs}  }}\n  goals {{ }}\n}}\n",
        consts.join(", ")
    )
}

/// A random small multi-agent specification with durative probabilistic
/// actions, goal-directed rules, optional messaging and a safety constraint.
pub fn random_spec(g: &mut Gen) -> String {
    let nconst = g.range(1, 3);
    let consts: Vec<String> = (0..nconst).map(|i| format!("k{i}")).collect();
    let base = ["b0", "b1", "b2"];
    let mut s = String::new();
    let _ = writeln!(s, "system {{\n  domains {{\n    o = {{{}}};\n  }}", consts.join(", "));

    s.push_str("  knowledge {\n");
    let _ = writeln!(s, "    d0(X) :- {}(X), not {}(X).", g.pick(&base), g.pick(&base));
    if g.chance(1, 2) {
        let _ = writeln!(s, "    d1(X) :- {}(X), not d0(X).", g.pick(&base));
    } else {
        let _ = writeln!(s, "    d1(X) :- d0(X).");
    }
    s.push_str("    d2(X) :- b0(X), b1(X), b2(X).\n  }\n  actions {\n");

    let nact = g.range(1, 3);
    let weights: [&[&str]; 3] = [&["1"], &["0.5", "0.5"], &["0.3", "0.7"]];
    let mut pres = Vec::new();
    let mut aims = Vec::new();
    for a in 0..nact {
        let _ = writeln!(s, "    action act{a}(X: o) {{");
        if g.chance(1, 3) {
            let _ = writeln!(s, "      duration 2;");
        }
        let p = *g.pick(&base);
        pres.push(p);
        let mut pre = vec![format!("bel({p}(X))")];
        if g.chance(1, 4) {
            pre.push(format!("not bel({}(X))", g.pick(&base)));
        }
        let _ = writeln!(s, "      pre {};", pre.join(", "));
        let aim = *g.pick(&base);
        aims.push(aim);
        for (k, w) in g.pick(&weights).iter().enumerate() {
            let mut effects = String::new();
            if k == 0 {
                let _ = write!(effects, "insert {aim}(X); ");
            }
            for _ in 0..g.below(2) {
                let op = if g.chance(1, 2) { "insert" } else { "delete" };
                let _ = write!(effects, "{op} {}(X); ", g.pick(&base));
            }
            let _ = writeln!(s, "      effect [{w}] {{ {effects}}}");
        }
        s.push_str("    }\n");
    }
    s.push_str("  }\n  rules {\n");
    let preds = ["b0", "b1", "b2", "d0", "d1"];
    for _ in 0..g.range(1, 4) {
        let a = g.below(nact);
        let guard = if g.chance(3, 4) {
            format!("goal({}(X)), ", aims[a])
        } else {
            String::new()
        };
        let extra = if g.chance(1, 3) {
            format!(", not bel({}(X))", g.pick(&preds))
        } else {
            String::new()
        };
        let _ = writeln!(s, "    if {guard}bel({}(X)){extra} then act{a}(X);", pres[a]);
    }
    s.push_str("  }\n");

    let nagents = g.range(1, 2);
    if nagents == 2 && g.chance(1, 2) {
        let _ = writeln!(
            s,
            "  comms {{\n    on bel({}(X)) send note(X) to all;\n    on received note(X) do insert {}(X);\n  }}",
            g.pick(&preds),
            g.pick(&base)
        );
    }
    if g.chance(1, 2) {
        let _ = writeln!(
            s,
            "  safety {{\n    always not bel({}(X));\n  }}",
            g.pick(&["d1", "d2"])
        );
    }
    s.push_str("}\n");

    for i in 0..nagents {
        let _ = writeln!(s, "\nagent r{} {{\n  beliefs {{", i + 1);
        for _ in 0..g.range(1, 4) {
            let p = if g.chance(1, 2) { *g.pick(&pres) } else { *g.pick(&base) };
            let _ = writeln!(s, "    {p}({}).", g.pick(&consts));
        }
        s.push_str("  }\n  goals {\n");
        for _ in 0..g.range(i, 2) {
            let mut conj = vec![format!("{}({})", g.pick(&aims), g.pick(&consts))];
            if g.chance(1, 3) {
                conj.push(format!("{}({})", g.pick(&base), g.pick(&consts)));
            }
            let _ = writeln!(s, "    {};", conj.join(" & "));
        }
        s.push_str("  }\n}\n");
    }
    s
}

/// `count` random belief and goal updates over the whole atom index,
/// scheduled between steps 1 and `horizon`.
pub fn random_scenario(g: &mut Gen, engine: &Engine, count: usize, horizon: u64) -> Scenario {
    let index = engine.index();
    let agents = engine.agent_names();
    let mut times: Vec<u64> = (0..count).map(|_| g.range(1, horizon as usize) as u64).collect();
    times.sort_unstable();
    let entries = times
        .into_iter()
        .map(|t| {
            let atom = crate::logic::AtomId(g.below(index.len()) as u32);
            ScenarioEntry {
                t,
                input: ScenarioInput::Update(UpdateRecord {
                    agent: g.pick(&agents).clone(),
                    kind: if g.chance(1, 3) {
                        UpdateKind::Goal
                    } else {
                        UpdateKind::Belief
                    },
                    op: if g.chance(1, 2) {
                        UpdateOp::Insert
                    } else {
                        UpdateOp::Delete
                    },
                    atom: index.display(atom).to_string(),
                }),
            }
        })
        .collect();
    Scenario {
        meta: Default::default(),
        entries,
    }
}

fn parse_prob(p: &str) -> Option<f64> {
    match p.split_once('/') {
        Some((n, d)) => Some(n.parse::<f64>().ok()? / d.parse::<f64>().ok()?),
        None => p.parse().ok(),
    }
}

/// Checks that a parsed Prism model encodes exactly the transitions and
/// labels of `doc`, with outcome probabilities within `1e-9`.
pub fn check_prism_round_trip(doc: &TsDocument, model: &ParsedModel) -> Result<(), String> {
    if model.states != doc.states.len() || model.initial != doc.initial {
        return Err(format!(
            "{} states from {}, expected {} from {}",
            model.states,
            model.initial,
            doc.states.len(),
            doc.initial
        ));
    }
    if model.commands.len() != doc.transitions.len() {
        return Err(format!(
            "{} commands for {} transitions",
            model.commands.len(),
            doc.transitions.len()
        ));
    }
    for (i, (c, t)) in model.commands.iter().zip(&doc.transitions).enumerate() {
        if c.label != t.label || c.source != t.source {
            return Err(format!("command {i} is [{}] s={}, expected [{}] s={}", c.label, c.source, t.label, t.source));
        }
        let mut merged: Vec<(f64, usize)> = Vec::new();
        for o in &t.outcomes {
            let p = parse_prob(&o.prob).ok_or_else(|| format!("bad probability {}", o.prob))?;
            match merged.iter_mut().find(|(_, u)| *u == o.target) {
                Some((acc, _)) => *acc += p,
                None => merged.push((p, o.target)),
            }
        }
        if merged.len() != c.updates.len() {
            return Err(format!("command {i} has {} updates, expected {}", c.updates.len(), merged.len()));
        }
        for ((p, t), (q, u)) in c.updates.iter().zip(&merged) {
            if t != u || (p - q).abs() > 1e-9 {
                return Err(format!("command {i}: {p}:(s'={t}) expected {q}:(s'={u})"));
            }
        }
        let sum: f64 = c.updates.iter().map(|(p, _)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("command {i} sums to {sum}"));
        }
    }
    for (name, expected) in [
        ("safe", doc.states.iter().filter(|s| s.safe).map(|s| s.id).collect::<Vec<_>>()),
        ("goal", doc.states.iter().filter(|s| s.goal).map(|s| s.id).collect()),
    ] {
        let got = model.labels.get(name).cloned().unwrap_or_default();
        if got != expected {
            return Err(format!("label {name} is {got:?}, expected {expected:?}"));
        }
    }
    Ok(())
}

/// Checks that the committed steps of a run trace a path through `doc`
/// from its initial state.
pub fn check_path(doc: &TsDocument, reports: &[StepReport]) -> Result<(), String> {
    let key = |agents: &[SubstateDoc]| serde_json::to_string(agents).expect("state serializes");
    let ids: HashMap<String, usize> = doc.states.iter().map(|s| (key(&s.agents), s.id)).collect();
    let mut at = doc.initial;
    for r in reports.iter().filter(|r| r.committed) {
        let (Some(d), Some(k), Some(state)) = (&r.chosen, r.outcome, &r.state) else {
            return Err(format!("step {} committed without a decision", r.step));
        };
        let next = *ids
            .get(&key(state))
            .ok_or_else(|| format!("step {}: state not in the transition system", r.step))?;
        let found = doc.transitions.iter().any(|t| {
            t.source == at
                && t.kind == d.kind
                && t.agent.as_deref() == Some(d.agent.as_str())
                && t.action.as_deref() == Some(d.action.as_str())
                && t.rule == d.rule
                && t.subst == d.subst
                && t.outcomes.get(k).map(|o| o.target) == Some(next)
        });
        if !found {
            return Err(format!("step {}: no transition {at} -> {next} for {}", r.step, d.action));
        }
        at = next;
    }
    Ok(())
}
