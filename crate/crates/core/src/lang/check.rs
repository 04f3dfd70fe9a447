//! Well-formedness and typing of a parsed spec.
//!
//! Predicates carry no declared signatures; argument domains are inferred by
//! unifying every argument position with the variables and constants that
//! occur there (constants belong to exactly one domain, action parameters
//! carry explicit domains).

use std::collections::{BTreeSet, HashMap, HashSet};

use num_rational::Ratio;

use super::ast::*;
use super::diag::{Diagnostic, Diagnostics};
use super::strata::{check_stratification, CycleError, StrataAssignment};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainInfo {
    pub name: String,
    /// Members sorted by name.
    pub constants: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredicateSig {
    pub name: String,
    /// Domain index per argument position.
    pub domains: Vec<usize>,
}

/// A spec that parsed, stratified and passed every well-formedness check.
#[derive(Clone, Debug)]
pub struct ValidatedSpec {
    pub ast: SpecAst,
    pub strata: StrataAssignment,
    pub domains: Vec<DomainInfo>,
    /// In order of first occurrence (knowledge, actions, rules, comms,
    /// safety, agents).
    pub predicates: Vec<PredicateSig>,
    const_domain: HashMap<String, usize>,
    pred_lookup: HashMap<String, usize>,
}

impl ValidatedSpec {
    pub fn predicate(&self, name: &str) -> Option<&PredicateSig> {
        self.pred_lookup.get(name).map(|&i| &self.predicates[i])
    }

    pub fn predicate_index(&self, name: &str) -> Option<usize> {
        self.pred_lookup.get(name).copied()
    }

    pub fn domain_of_constant(&self, c: &str) -> Option<usize> {
        self.const_domain.get(c).copied()
    }

    pub fn domain_index(&self, name: &str) -> Option<usize> {
        self.domains.iter().position(|d| d.name == name)
    }

    /// Domain of `var` as used at argument `pos` of some atom in `atoms`.
    pub fn var_domain<'a>(
        &self,
        var: &str,
        atoms: impl IntoIterator<Item = &'a Atom>,
    ) -> Option<usize> {
        atoms.into_iter().find_map(|a| {
            let pos = a.args.iter().position(|t| t.as_var() == Some(var))?;
            Some(self.predicate(&a.pred)?.domains[pos])
        })
    }

    pub fn agent_names(&self) -> impl Iterator<Item = &str> {
        self.ast.agents.iter().map(|a| a.name.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("{0}")]
    Parse(Diagnostics),
    #[error(transparent)]
    Stratification(#[from] CycleError),
    #[error("{0}")]
    Invalid(Diagnostics),
}

/// Parses, stratifies and checks `src` in one go.
pub fn load_spec(src: &str) -> Result<ValidatedSpec, SpecError> {
    let ast = super::parser::parse_spec(src).map_err(SpecError::Parse)?;
    let strata = check_stratification(&ast)?;
    check_well_formed(ast, strata).map_err(SpecError::Invalid)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Node<'a> {
    Slot(&'a str, usize),
    Var(usize, &'a str),
}

struct Typer<'a> {
    nodes: HashMap<Node<'a>, usize>,
    parent: Vec<usize>,
    reqs: Vec<(usize, usize, Span)>,
    arity: HashMap<&'a str, usize>,
    pred_order: Vec<&'a str>,
    const_domain: &'a HashMap<String, usize>,
    diags: Vec<Diagnostic>,
    scope: usize,
}

impl<'a> Typer<'a> {
    fn node(&mut self, n: Node<'a>) -> usize {
        if let Some(&i) = self.nodes.get(&n) {
            return i;
        }
        let i = self.parent.len();
        self.parent.push(i);
        self.nodes.insert(n, i);
        i
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.parent[a.max(b)] = a.min(b);
        }
    }

    fn new_scope(&mut self) -> usize {
        self.scope += 1;
        self.scope
    }

    fn atom(&mut self, atom: &'a Atom) {
        let pred = atom.pred.as_str();
        match self.arity.get(pred) {
            Some(&n) if n != atom.args.len() => {
                self.diags.push(Diagnostic::new(
                    atom.span,
                    format!(
                        "arity mismatch: `{pred}` used with {} arguments, expected {n}",
                        atom.args.len()
                    ),
                ));
                return;
            }
            Some(_) => {}
            None => {
                self.arity.insert(pred, atom.args.len());
                self.pred_order.push(pred);
            }
        }
        for (i, t) in atom.args.iter().enumerate() {
            let slot = self.node(Node::Slot(pred, i));
            match t {
                Term::Var(v) => {
                    let var = self.node(Node::Var(self.scope, v));
                    self.union(slot, var);
                }
                Term::Const(c) => match self.const_domain.get(c) {
                    Some(&d) => self.reqs.push((slot, d, atom.span)),
                    None => self.diags.push(Diagnostic::new(
                        atom.span,
                        format!("undeclared constant `{c}`"),
                    )),
                },
            }
        }
    }

    fn require_var(&mut self, var: &'a str, domain: usize, span: Span) {
        let n = self.node(Node::Var(self.scope, var));
        self.reqs.push((n, domain, span));
    }

    fn condition(&mut self, cond: &'a Condition) {
        for m in cond {
            for a in &m.atoms {
                self.atom(a);
            }
        }
    }
}

fn vars_of<'a>(atoms: impl IntoIterator<Item = &'a Atom>) -> Vec<&'a str> {
    let mut out = Vec::new();
    for a in atoms {
        for v in a.vars() {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

/// Checks a condition; returns the variables bound by its positive literals
/// (plus `prebound`).
fn check_condition<'a>(
    cond: &'a Condition,
    prebound: &HashSet<&'a str>,
    diags: &mut Vec<Diagnostic>,
) -> HashSet<&'a str> {
    let mut bound = prebound.clone();
    for m in cond.iter().filter(|m| !m.negated) {
        bound.extend(vars_of(&m.atoms));
    }
    for m in cond.iter().filter(|m| m.negated) {
        for v in vars_of(&m.atoms) {
            if !bound.contains(v) {
                diags.push(Diagnostic::new(
                    m.span,
                    format!("unbound variable {v} in negated condition"),
                ));
            }
        }
    }
    bound
}

/// Verifies typing, binding and weight invariants and produces a
/// [`ValidatedSpec`].
pub fn check_well_formed(
    ast: SpecAst,
    strata: StrataAssignment,
) -> Result<ValidatedSpec, Diagnostics> {
    let mut diags = Vec::new();

    // Domains and constants.
    let mut const_domain: HashMap<String, usize> = HashMap::new();
    let mut domains = Vec::new();
    for (di, d) in ast.domains.iter().enumerate() {
        if ast.domains[..di].iter().any(|o| o.name == d.name) {
            diags.push(Diagnostic::new(
                d.span,
                format!("duplicate domain `{}`", d.name),
            ));
        }
        let mut members: Vec<String> = Vec::new();
        for c in &d.constants {
            if let Some(&other) = const_domain.get(c) {
                diags.push(Diagnostic::new(
                    d.span,
                    if other == di {
                        format!("constant `{c}` listed twice in domain `{}`", d.name)
                    } else {
                        format!(
                            "constant `{c}` declared in domains `{}` and `{}`",
                            ast.domains[other].name, d.name
                        )
                    },
                ));
                continue;
            }
            const_domain.insert(c.clone(), di);
            members.push(c.clone());
        }
        members.sort();
        domains.push(DomainInfo {
            name: d.name.clone(),
            constants: members,
        });
    }
    let domain_idx = |name: &str| ast.domains.iter().position(|d| d.name == name);

    let agent_names: Vec<&str> = ast.agents.iter().map(|a| a.name.as_str()).collect();
    for a in &ast.agents {
        if a.name == "all" {
            diags.push(Diagnostic::new(a.span, "agent name `all` is reserved"));
        }
    }

    let mut typer = Typer {
        nodes: HashMap::new(),
        parent: Vec::new(),
        reqs: Vec::new(),
        arity: HashMap::new(),
        pred_order: Vec::new(),
        const_domain: &const_domain,
        diags: Vec::new(),
        scope: 0,
    };

    // Knowledge.
    for r in &ast.knowledge {
        typer.new_scope();
        typer.atom(&r.head);
        for l in &r.body {
            typer.atom(&l.atom);
        }
        let positive: HashSet<&str> =
            vars_of(r.body.iter().filter(|l| !l.negated).map(|l| &l.atom))
                .into_iter()
                .collect();
        for v in r.head.vars() {
            if !positive.contains(v) {
                diags.push(Diagnostic::new(
                    r.span,
                    format!("rule is not range-restricted: head variable {v} is not bound by a positive body literal"),
                ));
            }
        }
        for l in r.body.iter().filter(|l| l.negated) {
            for v in l.atom.vars() {
                if !positive.contains(v) {
                    diags.push(Diagnostic::new(
                        r.span,
                        format!("rule is not range-restricted: variable {v} in negated literal is not bound by a positive body literal"),
                    ));
                }
            }
        }
    }

    // Actions.
    for (ai, a) in ast.actions.iter().enumerate() {
        if ast.actions[..ai].iter().any(|o| o.name == a.name) {
            diags.push(Diagnostic::new(
                a.span,
                format!("duplicate action `{}`", a.name),
            ));
        }
        typer.new_scope();
        let mut params: HashSet<&str> = HashSet::new();
        for p in &a.params {
            if !params.insert(p.var.as_str()) {
                diags.push(Diagnostic::new(
                    p.span,
                    format!("duplicate parameter {}", p.var),
                ));
            }
            match domain_idx(&p.domain) {
                Some(d) => typer.require_var(&p.var, d, p.span),
                None => diags.push(Diagnostic::new(
                    p.span,
                    format!("unknown domain `{}`", p.domain),
                )),
            }
        }
        typer.condition(&a.precondition);
        let bound = check_condition(&a.precondition, &params, &mut diags);
        for o in &a.outcomes {
            for e in &o.effects {
                typer.atom(&e.atom);
                for v in e.atom.vars() {
                    if !bound.contains(v) {
                        diags.push(Diagnostic::new(
                            e.atom.span,
                            format!("unbound variable {v} in effect of action `{}`", a.name),
                        ));
                    }
                }
            }
            if o.weight <= Ratio::from_integer(0) {
                diags.push(Diagnostic::new(o.span, "outcome weight must be positive"));
            }
        }
        let sum: Weight = a.outcomes.iter().map(|o| o.weight).sum();
        if sum != Ratio::from_integer(1) {
            diags.push(Diagnostic::new(
                a.span,
                format!("outcome weights of action `{}` sum to {sum}, expected 1", a.name),
            ));
        }
        if a.duration == 0 {
            diags.push(Diagnostic::new(
                a.span,
                format!("duration of action `{}` must be at least 1", a.name),
            ));
        }
    }

    // Decision rules.
    for r in &ast.decision_rules {
        typer.new_scope();
        typer.condition(&r.condition);
        let bound = check_condition(&r.condition, &HashSet::new(), &mut diags);
        let Some((_, action)) = ast.action(&r.action) else {
            diags.push(Diagnostic::new(
                r.span,
                format!("unknown action `{}`", r.action),
            ));
            continue;
        };
        if action.params.len() != r.args.len() {
            diags.push(Diagnostic::new(
                r.span,
                format!(
                    "arity mismatch: action `{}` expects {} arguments, got {}",
                    r.action,
                    action.params.len(),
                    r.args.len()
                ),
            ));
            continue;
        }
        for (t, p) in r.args.iter().zip(&action.params) {
            let Some(d) = domain_idx(&p.domain) else { continue };
            match t {
                Term::Var(v) => {
                    if !bound.contains(v.as_str()) {
                        diags.push(Diagnostic::new(
                            r.span,
                            format!("unbound variable {v} in call to `{}`", r.action),
                        ));
                    }
                    typer.require_var(v, d, r.span);
                }
                Term::Const(c) => match const_domain.get(c) {
                    Some(&cd) if cd == d => {}
                    Some(_) => diags.push(Diagnostic::new(
                        r.span,
                        format!("constant `{c}` is not in domain `{}`", p.domain),
                    )),
                    None => diags.push(Diagnostic::new(
                        r.span,
                        format!("undeclared constant `{c}`"),
                    )),
                },
            }
        }
    }

    // Communication.
    for r in &ast.send_rules {
        typer.new_scope();
        typer.condition(&r.condition);
        typer.atom(&r.message);
        let bound = check_condition(&r.condition, &HashSet::new(), &mut diags);
        for v in r.message.vars() {
            if !bound.contains(v) {
                diags.push(Diagnostic::new(
                    r.message.span,
                    format!("unbound variable {v} in message"),
                ));
            }
        }
        if let Recipient::Agent(name) = &r.to {
            if !agent_names.contains(&name.as_str()) {
                diags.push(Diagnostic::new(
                    r.span,
                    format!("unknown agent `{name}`"),
                ));
            }
        }
    }
    for r in &ast.recv_rules {
        typer.new_scope();
        typer.atom(&r.pattern);
        typer.atom(&r.atom);
        let bound: HashSet<&str> = r.pattern.vars().collect();
        for v in r.atom.vars() {
            if !bound.contains(v) {
                diags.push(Diagnostic::new(
                    r.atom.span,
                    format!("unbound variable {v} in receive rule"),
                ));
            }
        }
        if let Some(name) = &r.from {
            if !agent_names.contains(&name.as_str()) {
                diags.push(Diagnostic::new(
                    r.span,
                    format!("unknown agent `{name}`"),
                ));
            }
        }
    }

    // Safety.
    let mut known: HashSet<&str> = HashSet::new();
    for r in &ast.knowledge {
        known.insert(&r.head.pred);
        known.extend(r.body.iter().map(|l| l.atom.pred.as_str()));
    }
    for a in &ast.actions {
        for o in &a.outcomes {
            known.extend(o.effects.iter().map(|e| e.atom.pred.as_str()));
        }
    }
    known.extend(ast.recv_rules.iter().map(|r| r.atom.pred.as_str()));
    for a in &ast.agents {
        known.extend(a.beliefs.iter().map(|b| b.pred.as_str()));
    }
    for c in &ast.safety {
        typer.new_scope();
        for l in &c.literals {
            typer.atom(&l.atom);
            if !known.contains(l.atom.pred.as_str()) {
                diags.push(Diagnostic::new(
                    l.atom.span,
                    format!("safety constraint uses unknown predicate `{}`", l.atom.pred),
                ));
            }
        }
    }

    // Agents.
    for a in &ast.agents {
        typer.new_scope();
        for b in &a.beliefs {
            typer.atom(b);
            if !b.is_ground() {
                diags.push(Diagnostic::new(b.span, format!("belief `{b}` must be ground")));
            }
        }
        for g in &a.goals {
            for atom in g {
                typer.atom(atom);
                if !atom.is_ground() {
                    diags.push(Diagnostic::new(
                        atom.span,
                        format!("goal atom `{atom}` must be ground"),
                    ));
                }
            }
        }
    }

    // Resolve domains.
    let reqs = std::mem::take(&mut typer.reqs);
    let mut class_domain: HashMap<usize, (usize, Span)> = HashMap::new();
    let mut conflicts: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (node, d, span) in reqs {
        let root = typer.find(node);
        match class_domain.get(&root) {
            None => {
                class_domain.insert(root, (d, span));
            }
            Some(&(other, _)) if other != d => {
                let key = (other.min(d), other.max(d));
                if conflicts.insert(key) {
                    diags.push(Diagnostic::new(
                        span,
                        format!(
                            "domain mismatch: `{}` used where `{}` is expected",
                            ast.domains[d].name, ast.domains[other].name
                        ),
                    ));
                }
            }
            Some(_) => {}
        }
    }
    let mut predicates = Vec::new();
    let pred_order = typer.pred_order.clone();
    for pred in pred_order {
        let arity = typer.arity[pred];
        let mut sig = Vec::with_capacity(arity);
        for i in 0..arity {
            let n = typer.nodes[&Node::Slot(pred, i)];
            let root = typer.find(n);
            match class_domain.get(&root) {
                Some(&(d, _)) => sig.push(d),
                None => {
                    diags.push(Diagnostic::new(
                        Span::default(),
                        format!("cannot infer the domain of argument {} of `{pred}`", i + 1),
                    ));
                    sig.push(0);
                }
            }
        }
        predicates.push(PredicateSig {
            name: pred.to_string(),
            domains: sig,
        });
    }
    diags.append(&mut typer.diags);

    if !diags.is_empty() {
        diags.sort_by_key(|d| (d.span.line, d.span.col));
        return Err(Diagnostics(diags));
    }
    let pred_lookup = predicates
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.clone(), i))
        .collect();
    Ok(ValidatedSpec {
        ast,
        strata,
        domains,
        predicates,
        const_domain,
        pred_lookup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(system_body: &str, agents: &str) -> String {
        format!("system {{ {system_body} }} {agents}")
    }

    const AGENT: &str = "agent r1 { beliefs { } goals { } }";

    fn errors(src: &str) -> Diagnostics {
        match load_spec(src) {
            Err(SpecError::Invalid(d)) => d,
            other => panic!("expected invalid spec, got {other:?}"),
        }
    }

    #[test]
    fn infers_predicate_domains() {
        let s = load_spec(&spec(
            "domains { obj = {b, a, table}; } \
             knowledge { clear(table). } \
             actions { action move(X: obj, Y: obj) { pre bel(on(X, Z)); effect [1] { delete on(X, Z); insert on(X, Y); } } } \
             rules { if bel(clear(X)) then move(X, table); }",
            AGENT,
        ))
        .unwrap();
        assert_eq!(s.domains[0].constants, vec!["a", "b", "table"]);
        assert_eq!(s.predicate("on").unwrap().domains, vec![0, 0]);
        assert_eq!(s.predicates[0].name, "clear");
    }

    #[test]
    fn weights_must_sum_to_one() {
        let d = errors(&spec(
            "domains { o = {a}; } actions { action x() { pre ; effect [0.5] { } effect [0.4] { } } } rules { }",
            AGENT,
        ));
        assert!(d.contains_message("sum to 9/10"), "{d}");
    }

    #[test]
    fn unbound_effect_variable() {
        let d = errors(&spec(
            "domains { o = {a}; } actions { action m(X: o) { pre bel(p(X)); effect [1] { insert on(X, Z); } } } rules { }",
            AGENT,
        ));
        assert!(d.contains_message("unbound variable Z"), "{d}");
    }

    #[test]
    fn undeclared_constant() {
        let d = errors(&spec(
            "domains { o = {a}; } knowledge { p(b). } actions { } rules { }",
            AGENT,
        ));
        assert!(d.contains_message("undeclared constant `b`"), "{d}");
    }

    #[test]
    fn arity_mismatch() {
        let d = errors(&spec(
            "domains { o = {a}; } knowledge { p(a). q(X) :- p(X, X). } actions { } rules { }",
            AGENT,
        ));
        assert!(d.contains_message("arity mismatch"), "{d}");
    }

    #[test]
    fn unknown_safety_predicate() {
        let d = errors(&spec(
            "domains { o = {a}; } knowledge { p(a). } actions { } rules { } safety { always not bel(ghost(a)); }",
            AGENT,
        ));
        assert!(d.contains_message("unknown predicate `ghost`"), "{d}");
    }

    #[test]
    fn domain_conflict() {
        let d = errors(&spec(
            "domains { o = {a}; t = {x}; } knowledge { p(a). p(x). } actions { } rules { }",
            AGENT,
        ));
        assert!(d.contains_message("domain mismatch"), "{d}");
    }

    #[test]
    fn constant_in_two_domains() {
        let d = errors(&spec(
            "domains { o = {a}; t = {a}; } actions { } rules { }",
            AGENT,
        ));
        assert!(d.contains_message("declared in domains"), "{d}");
    }

    #[test]
    fn range_restriction() {
        let d = errors(&spec(
            "domains { o = {a}; } knowledge { p(a). q(X) :- not p(X). } actions { } rules { }",
            AGENT,
        ));
        assert!(d.contains_message("range-restricted"), "{d}");
    }

    #[test]
    fn call_argument_domain() {
        let d = errors(&spec(
            "domains { o = {a}; t = {x}; } knowledge { p(a). } \
             actions { action m(X: o) { pre ; effect [1] { } } } rules { if bel(p(a)) then m(x); }",
            AGENT,
        ));
        assert!(d.contains_message("not in domain `o`"), "{d}");
    }

    #[test]
    fn ground_beliefs() {
        let d = errors(&spec(
            "domains { o = {a}; } knowledge { p(a). } actions { } rules { }",
            "agent r1 { beliefs { p(X). } goals { } }",
        ));
        assert!(d.contains_message("must be ground"), "{d}");
    }

    #[test]
    fn diagnostics_spans_are_inside_source() {
        let src = spec(
            "domains { o = {a}; } knowledge { p(b). } actions { action x() { pre ; effect [0.5] { } } } rules { }",
            AGENT,
        );
        let d = errors(&src);
        for diag in d.iter() {
            assert!(diag.span.end <= src.len());
        }
    }
}
