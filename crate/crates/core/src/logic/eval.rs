//! Conjunctive queries and stratified minimal models.

use std::fmt;
use std::sync::Arc;

use super::atoms::{AtomError, AtomId, AtomIndex, ConstId, PredId};
use super::interp::Interpretation;
use crate::lang::{self, Term, ValidatedSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CTerm {
    /// Slot in the enclosing [`VarTable`].
    Var(usize),
    Const(ConstId),
}

/// An atom whose predicate and constants are resolved against an index.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CAtom {
    pub pred: PredId,
    pub args: Vec<CTerm>,
}

impl CAtom {
    /// Ground id under `slots`, if every variable is bound. The inner
    /// `None` means the instance falls outside the predicate's domains.
    pub fn ground(&self, index: &AtomIndex, slots: &[Option<ConstId>]) -> Option<Option<AtomId>> {
        let mut args = Vec::with_capacity(self.args.len());
        for t in &self.args {
            match *t {
                CTerm::Const(c) => args.push(c),
                CTerm::Var(v) => args.push(slots[v]?),
            }
        }
        Some(index.atom_id(self.pred, &args))
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.args.iter().filter_map(|t| match t {
            CTerm::Var(v) => Some(*v),
            CTerm::Const(_) => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CLiteral {
    pub atom: CAtom,
    pub negated: bool,
}

/// Variable names of one compilation scope, in order of first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct VarTable {
    names: Vec<Arc<str>>,
}

impl VarTable {
    pub fn slot(&mut self, name: &str) -> usize {
        match self.names.iter().position(|n| &**n == name) {
            Some(i) => i,
            None => {
                self.names.push(Arc::from(name));
                self.names.len() - 1
            }
        }
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| &**n == name)
    }

    pub fn names(&self) -> &[Arc<str>] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

pub fn compile_atom(
    index: &AtomIndex,
    atom: &lang::Atom,
    vars: &mut VarTable,
) -> Result<CAtom, AtomError> {
    let pred = index
        .predicate(&atom.pred)
        .ok_or_else(|| AtomError::UnknownPredicate(atom.pred.clone()))?;
    if index.arity(pred) != atom.args.len() {
        return Err(AtomError::Arity {
            pred: atom.pred.clone(),
            expected: index.arity(pred),
            got: atom.args.len(),
        });
    }
    let args = atom
        .args
        .iter()
        .enumerate()
        .map(|(i, t)| match t {
            Term::Var(v) => Ok(CTerm::Var(vars.slot(v))),
            Term::Const(c) => index
                .constant(c)
                .map(CTerm::Const)
                .ok_or_else(|| AtomError::BadArgument {
                    pred: atom.pred.clone(),
                    position: i + 1,
                    constant: c.clone(),
                }),
        })
        .collect::<Result<_, _>>()?;
    Ok(CAtom { pred, args })
}

/// A conjunction of possibly negated atoms with its own variable table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Conjunction {
    pub literals: Vec<CLiteral>,
    pub vars: VarTable,
}

impl Conjunction {
    pub fn compile(index: &AtomIndex, literals: &[lang::Literal]) -> Result<Self, AtomError> {
        let mut vars = VarTable::default();
        let literals = literals
            .iter()
            .map(|l| {
                Ok(CLiteral {
                    atom: compile_atom(index, &l.atom, &mut vars)?,
                    negated: l.negated,
                })
            })
            .collect::<Result<_, AtomError>>()?;
        Ok(Conjunction { literals, vars })
    }

    /// Compiles text such as `clear(X), not block(X)`.
    pub fn parse(index: &AtomIndex, text: &str) -> Result<Self, AtomError> {
        let lits = lang::parse_literals(text).map_err(|_| AtomError::Syntax(text.to_string()))?;
        Self::compile(index, &lits)
    }
}

/// Variable bindings, listed in the variables' order of first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Substitution {
    bindings: Vec<(Arc<str>, ConstId)>,
}

impl Substitution {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Arc<str>, ConstId)>) -> Self {
        Substitution {
            bindings: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, var: &str) -> Option<ConstId> {
        self.bindings
            .iter()
            .find(|(n, _)| &**n == var)
            .map(|(_, c)| *c)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ConstId)> {
        self.bindings.iter().map(|(n, c)| (&**n, *c))
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn display<'a>(&'a self, index: &'a AtomIndex) -> SubstitutionDisplay<'a> {
        SubstitutionDisplay { subst: self, index }
    }
}

pub struct SubstitutionDisplay<'a> {
    subst: &'a Substitution,
    index: &'a AtomIndex,
}

impl fmt::Display for SubstitutionDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (n, c)) in self.subst.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{n}={}", self.index.constant_name(c))?;
        }
        f.write_str("}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("variable {var} occurs only under negation")]
pub struct UnboundNegation {
    pub var: String,
}

/// Enumerates every extension of `slots` satisfying the positive atoms
/// (each matched against its paired interpretation) and none of the
/// negated atoms. Negated atoms must be ground once positives are matched.
pub(crate) fn solve(
    index: &AtomIndex,
    positives: &[(&CAtom, &Interpretation)],
    negatives: &[(&CAtom, &Interpretation)],
    slots: &mut Vec<Option<ConstId>>,
    emit: &mut dyn FnMut(&[Option<ConstId>]),
) {
    let mut scratch = Vec::new();
    solve_from(index, positives, negatives, 0, slots, &mut scratch, emit);
}

fn solve_from(
    index: &AtomIndex,
    positives: &[(&CAtom, &Interpretation)],
    negatives: &[(&CAtom, &Interpretation)],
    depth: usize,
    slots: &mut Vec<Option<ConstId>>,
    scratch: &mut Vec<ConstId>,
    emit: &mut dyn FnMut(&[Option<ConstId>]),
) {
    let Some(&(atom, source)) = positives.get(depth) else {
        for &(atom, source) in negatives {
            match atom.ground(index, slots) {
                Some(Some(id)) if source.contains(id) => return,
                Some(_) => {}
                None => panic!("negated atom left unbound"),
            }
        }
        emit(slots);
        return;
    };
    if let Some(ground) = atom.ground(index, slots) {
        if ground.is_some_and(|id| source.contains(id)) {
            solve_from(index, positives, negatives, depth + 1, slots, scratch, emit);
        }
        return;
    }
    let mut newly = Vec::with_capacity(atom.args.len());
    for id in source.iter_range(index.range(atom.pred)) {
        index.decode_into(atom.pred, id, scratch);
        newly.clear();
        let mut ok = true;
        for (t, &c) in atom.args.iter().zip(scratch.iter()) {
            match *t {
                CTerm::Const(k) => {
                    if k != c {
                        ok = false;
                        break;
                    }
                }
                CTerm::Var(v) => match slots[v] {
                    Some(b) if b != c => {
                        ok = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        slots[v] = Some(c);
                        newly.push(v);
                    }
                },
            }
        }
        if ok {
            let mut inner = Vec::new();
            solve_from(index, positives, negatives, depth + 1, slots, &mut inner, emit);
        }
        for &v in &newly {
            slots[v] = None;
        }
    }
}

/// Every substitution making the conjunction true in `interp`, ordered
/// lexicographically by the bound constants (variables in order of first
/// appearance).
pub fn query(
    index: &AtomIndex,
    interp: &Interpretation,
    conj: &Conjunction,
) -> Result<Vec<Substitution>, UnboundNegation> {
    let positives: Vec<_> = conj
        .literals
        .iter()
        .filter(|l| !l.negated)
        .map(|l| (&l.atom, interp))
        .collect();
    let negatives: Vec<_> = conj
        .literals
        .iter()
        .filter(|l| l.negated)
        .map(|l| (&l.atom, interp))
        .collect();
    let mut bound = vec![false; conj.vars.len()];
    for (a, _) in &positives {
        for v in a.vars() {
            bound[v] = true;
        }
    }
    if let Some(v) = bound.iter().position(|b| !b) {
        return Err(UnboundNegation {
            var: conj.vars.names()[v].to_string(),
        });
    }
    let mut rows: Vec<Vec<ConstId>> = Vec::new();
    let mut slots = vec![None; conj.vars.len()];
    solve(index, &positives, &negatives, &mut slots, &mut |s| {
        rows.push(s.iter().map(|c| c.expect("all variables bound")).collect());
    });
    rows.sort();
    rows.dedup();
    Ok(rows
        .into_iter()
        .map(|row| {
            Substitution::from_pairs(conj.vars.names().iter().cloned().zip(row))
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroundLiteral {
    pub atom: AtomId,
    pub negated: bool,
}

/// Whether every ground literal holds; one membership probe per literal.
pub fn holds(interp: &Interpretation, conj: &[GroundLiteral]) -> bool {
    conj.iter().all(|l| interp.contains(l.atom) != l.negated)
}

#[derive(Clone, Debug)]
pub struct CompiledRule {
    pub head: CAtom,
    pub body: Vec<CLiteral>,
    pub vars: usize,
    pub stratum: usize,
}

/// Knowledge-base rules grouped for stratum-by-stratum evaluation.
#[derive(Clone, Debug, Default)]
pub struct RuleSet {
    rules: Vec<CompiledRule>,
    strata: usize,
}

impl RuleSet {
    pub fn compile(spec: &ValidatedSpec, index: &AtomIndex) -> Result<Self, AtomError> {
        let mut rules = Vec::new();
        for r in &spec.ast.knowledge {
            let mut vars = VarTable::default();
            let head = compile_atom(index, &r.head, &mut vars)?;
            let body = r
                .body
                .iter()
                .map(|l| {
                    Ok(CLiteral {
                        atom: compile_atom(index, &l.atom, &mut vars)?,
                        negated: l.negated,
                    })
                })
                .collect::<Result<Vec<_>, AtomError>>()?;
            rules.push(CompiledRule {
                head,
                body,
                vars: vars.len(),
                stratum: spec.strata.stratum(&r.head.pred),
            });
        }
        let strata = rules.iter().map(|r| r.stratum + 1).max().unwrap_or(0);
        Ok(RuleSet { rules, strata })
    }

    pub fn rules(&self) -> &[CompiledRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

fn fire(
    index: &AtomIndex,
    rule: &CompiledRule,
    positives: &[(&CAtom, &Interpretation)],
    model: &Interpretation,
    new: &mut Interpretation,
) {
    let negatives: Vec<_> = rule
        .body
        .iter()
        .filter(|l| l.negated)
        .map(|l| (&l.atom, model))
        .collect();
    let mut slots = vec![None; rule.vars];
    solve(index, positives, &negatives, &mut slots, &mut |s| {
        if let Some(Some(id)) = rule.head.ground(index, s) {
            if !model.contains(id) {
                new.insert(id);
            }
        }
    });
}

/// The perfect model of `facts` under `rules`: each stratum is closed by
/// semi-naive iteration before the next one reads it under negation.
pub fn minimal_model(index: &AtomIndex, facts: &Interpretation, rules: &RuleSet) -> Interpretation {
    let mut model = facts.clone();
    let size = facts.base_size();
    let mut recursive = vec![false; index.predicate_count()];
    for stratum in 0..rules.strata {
        let layer: Vec<&CompiledRule> = rules
            .rules
            .iter()
            .filter(|r| r.stratum == stratum)
            .collect();
        recursive.iter_mut().for_each(|r| *r = false);
        for r in &layer {
            recursive[r.head.pred.0 as usize] = true;
        }

        let mut delta = Interpretation::empty(size);
        for rule in &layer {
            let positives: Vec<_> = rule
                .body
                .iter()
                .filter(|l| !l.negated)
                .map(|l| (&l.atom, &model))
                .collect();
            fire(index, rule, &positives, &model, &mut delta);
        }
        model.union_with(&delta);

        while !delta.is_empty() {
            let mut next = Interpretation::empty(size);
            for rule in &layer {
                let body: Vec<&CLiteral> = rule.body.iter().filter(|l| !l.negated).collect();
                for (k, lit) in body.iter().enumerate() {
                    if !recursive[lit.atom.pred.0 as usize] {
                        continue;
                    }
                    let mut positives = Vec::with_capacity(body.len());
                    positives.push((&lit.atom, &delta));
                    positives.extend(
                        body.iter()
                            .enumerate()
                            .filter(|(j, _)| *j != k)
                            .map(|(_, l)| (&l.atom, &model)),
                    );
                    fire(index, rule, &positives, &model, &mut next);
                }
            }
            model.union_with(&next);
            delta = next;
        }
    }
    model
}
