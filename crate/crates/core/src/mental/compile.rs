//! Spec sections compiled against an [`AtomIndex`].

use std::fmt;

use crate::lang::{self, EffectOp, Modality, Recipient, Weight};
use crate::logic::{
    compile_atom, AtomError, AtomIndex, CAtom, CTerm, ConstId, GroundLiteral, Substitution,
    VarTable,
};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error("variable {var} occurs only under negation")]
    UnboundNegation { var: String },
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("variable {var} is unbound in `{context}`")]
    Unbound { var: String, context: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CondLiteral {
    pub negated: bool,
    pub modality: Modality,
    pub atoms: Vec<CAtom>,
}

/// A mental-state condition sharing one variable table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompiledCondition {
    pub literals: Vec<CondLiteral>,
    pub vars: VarTable,
}

impl CompiledCondition {
    /// Compiles `cond` into `vars`, which may already hold bound slots.
    pub fn compile_into(
        index: &AtomIndex,
        cond: &[lang::MentalLiteral],
        mut vars: VarTable,
        prebound: usize,
    ) -> Result<Self, CompileError> {
        let mut literals = Vec::with_capacity(cond.len());
        for ml in cond {
            let atoms = ml
                .atoms
                .iter()
                .map(|a| compile_atom(index, a, &mut vars))
                .collect::<Result<_, _>>()?;
            literals.push(CondLiteral {
                negated: ml.negated,
                modality: ml.modality,
                atoms,
            });
        }
        let mut bound = vec![false; vars.len()];
        bound[..prebound].iter_mut().for_each(|b| *b = true);
        for l in literals.iter().filter(|l| !l.negated) {
            for v in l.atoms.iter().flat_map(CAtom::vars) {
                bound[v] = true;
            }
        }
        for l in literals.iter().filter(|l| l.negated) {
            if let Some(v) = l.atoms.iter().flat_map(CAtom::vars).find(|&v| !bound[v]) {
                return Err(CompileError::UnboundNegation {
                    var: vars.names()[v].to_string(),
                });
            }
        }
        Ok(CompiledCondition { literals, vars })
    }

    pub fn compile(index: &AtomIndex, cond: &[lang::MentalLiteral]) -> Result<Self, CompileError> {
        Self::compile_into(index, cond, VarTable::default(), 0)
    }

    /// Pairs a solution row with the variable names.
    pub fn substitution(&self, row: &[ConstId]) -> Substitution {
        Substitution::from_pairs(self.vars.names().iter().cloned().zip(row.iter().copied()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompiledEffect {
    pub op: EffectOp,
    pub atom: CAtom,
}

#[derive(Clone, Debug)]
pub struct CompiledOutcome {
    pub weight: Weight,
    pub effects: Vec<CompiledEffect>,
}

/// Parameters occupy slots `0..params.len()` of `pre.vars`.
#[derive(Clone, Debug)]
pub struct CompiledAction {
    pub name: String,
    pub params: Vec<usize>,
    pub duration: u32,
    pub pre: CompiledCondition,
    pub outcomes: Vec<CompiledOutcome>,
}

impl CompiledAction {
    pub fn slots(&self) -> usize {
        self.pre.vars.len()
    }
}

#[derive(Clone, Debug)]
pub struct CompiledDecisionRule {
    pub condition: CompiledCondition,
    pub action: usize,
    pub args: Vec<CTerm>,
}

#[derive(Clone, Debug)]
pub struct CompiledSendRule {
    pub condition: CompiledCondition,
    pub message: CAtom,
    /// `None` sends to every other agent.
    pub to: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct CompiledRecvRule {
    pub pattern: CAtom,
    pub vars: usize,
    pub from: Option<usize>,
    pub op: EffectOp,
    pub atom: CAtom,
}

/// One grounding of a safety constraint.
#[derive(Clone, Debug)]
pub struct GroundConstraint {
    pub constraint: usize,
    pub binding: Substitution,
    pub literals: Vec<GroundLiteral>,
}

/// Every executable section of a spec, resolved to ids.
#[derive(Clone, Debug)]
pub struct Program {
    pub actions: Vec<CompiledAction>,
    pub decision_rules: Vec<CompiledDecisionRule>,
    pub send_rules: Vec<CompiledSendRule>,
    pub recv_rules: Vec<CompiledRecvRule>,
    pub safety: Vec<GroundConstraint>,
}

fn agent_ref(ast: &lang::SpecAst, name: &str) -> Result<usize, CompileError> {
    ast.agent_index(name)
        .ok_or_else(|| CompileError::UnknownAgent(name.to_string()))
}

fn check_bound(atom: &CAtom, bound: usize, vars: &VarTable, index: &AtomIndex) -> Result<(), CompileError> {
    match atom.vars().find(|&v| v >= bound) {
        Some(v) => Err(CompileError::Unbound {
            var: vars.names()[v].to_string(),
            context: index.predicate_name(atom.pred).to_string(),
        }),
        None => Ok(()),
    }
}

impl Program {
    pub fn compile(spec: &lang::ValidatedSpec, index: &AtomIndex) -> Result<Self, CompileError> {
        let ast = &spec.ast;
        let mut actions = Vec::with_capacity(ast.actions.len());
        for a in &ast.actions {
            let mut vars = VarTable::default();
            let params = a.params.iter().map(|p| vars.slot(&p.var)).collect();
            let pre = CompiledCondition::compile_into(index, &a.precondition, vars, a.params.len())?;
            let mut vars = pre.vars.clone();
            let mut outcomes = Vec::with_capacity(a.outcomes.len());
            for o in &a.outcomes {
                let effects = o
                    .effects
                    .iter()
                    .map(|e| {
                        let atom = compile_atom(index, &e.atom, &mut vars)?;
                        check_bound(&atom, pre.vars.len(), &vars, index)?;
                        Ok(CompiledEffect { op: e.op, atom })
                    })
                    .collect::<Result<_, CompileError>>()?;
                outcomes.push(CompiledOutcome {
                    weight: o.weight,
                    effects,
                });
            }
            actions.push(CompiledAction {
                name: a.name.clone(),
                params,
                duration: a.duration,
                pre,
                outcomes,
            });
        }

        let mut decision_rules = Vec::with_capacity(ast.decision_rules.len());
        for r in &ast.decision_rules {
            let condition = CompiledCondition::compile(index, &r.condition)?;
            let (action, _) = ast
                .action(&r.action)
                .ok_or_else(|| CompileError::UnknownAction(r.action.clone()))?;
            let args = r
                .args
                .iter()
                .map(|t| match t {
                    lang::Term::Var(v) => condition
                        .vars
                        .lookup(v)
                        .map(CTerm::Var)
                        .ok_or_else(|| CompileError::Unbound {
                            var: v.clone(),
                            context: r.action.clone(),
                        }),
                    lang::Term::Const(c) => index.constant(c).map(CTerm::Const).ok_or_else(|| {
                        CompileError::Atom(AtomError::BadArgument {
                            pred: r.action.clone(),
                            position: 0,
                            constant: c.clone(),
                        })
                    }),
                })
                .collect::<Result<_, _>>()?;
            decision_rules.push(CompiledDecisionRule {
                condition,
                action,
                args,
            });
        }

        let mut send_rules = Vec::with_capacity(ast.send_rules.len());
        for s in &ast.send_rules {
            let condition = CompiledCondition::compile(index, &s.condition)?;
            let mut vars = condition.vars.clone();
            let message = compile_atom(index, &s.message, &mut vars)?;
            check_bound(&message, condition.vars.len(), &vars, index)?;
            let to = match &s.to {
                Recipient::All => None,
                Recipient::Agent(name) => Some(agent_ref(ast, name)?),
            };
            send_rules.push(CompiledSendRule {
                condition,
                message,
                to,
            });
        }

        let mut recv_rules = Vec::with_capacity(ast.recv_rules.len());
        for r in &ast.recv_rules {
            let mut vars = VarTable::default();
            let pattern = compile_atom(index, &r.pattern, &mut vars)?;
            let bound = vars.len();
            let atom = compile_atom(index, &r.atom, &mut vars)?;
            check_bound(&atom, bound, &vars, index)?;
            let from = r.from.as_deref().map(|n| agent_ref(ast, n)).transpose()?;
            recv_rules.push(CompiledRecvRule {
                pattern,
                vars: bound,
                from,
                op: r.op,
                atom,
            });
        }

        let mut safety = Vec::new();
        for (ci, c) in ast.safety.iter().enumerate() {
            ground_constraint(spec, index, ci, c, &mut safety)?;
        }

        Ok(Program {
            actions,
            decision_rules,
            send_rules,
            recv_rules,
            safety,
        })
    }
}

/// Expands a constraint over the product of its variables' domains.
fn ground_constraint(
    spec: &lang::ValidatedSpec,
    index: &AtomIndex,
    ci: usize,
    c: &lang::SafetyConstraint,
    out: &mut Vec<GroundConstraint>,
) -> Result<(), CompileError> {
    let mut vars = VarTable::default();
    let lits = c
        .literals
        .iter()
        .map(|l| Ok((compile_atom(index, &l.atom, &mut vars)?, l.negated)))
        .collect::<Result<Vec<_>, CompileError>>()?;
    let domains: Vec<&[ConstId]> = vars
        .names()
        .iter()
        .map(|v| {
            let d = spec
                .var_domain(v, c.literals.iter().map(|l| &l.atom))
                .expect("safety variables are typed");
            index.domain(d)
        })
        .collect();
    if domains.iter().any(|d| d.is_empty()) {
        return Ok(());
    }
    let mut cursor = vec![0usize; domains.len()];
    loop {
        let slots: Vec<Option<ConstId>> = cursor
            .iter()
            .zip(&domains)
            .map(|(&i, d)| Some(d[i]))
            .collect();
        let literals = lits
            .iter()
            .map(|(a, negated)| GroundLiteral {
                atom: a
                    .ground(index, &slots)
                    .flatten()
                    .expect("typed grounding stays in the base"),
                negated: *negated,
            })
            .collect();
        out.push(GroundConstraint {
            constraint: ci,
            binding: Substitution::from_pairs(
                vars.names().iter().cloned().zip(slots.iter().map(|s| s.unwrap())),
            ),
            literals,
        });
        let mut k = cursor.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            cursor[k] += 1;
            if cursor[k] < domains[k].len() {
                break;
            }
            cursor[k] = 0;
        }
    }
}

/// An action applied to concrete arguments, with every slot of its
/// variable table bound.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionInstance {
    pub action: usize,
    pub binding: Vec<ConstId>,
}

impl ActionInstance {
    pub fn args<'a>(&'a self, program: &'a Program) -> impl Iterator<Item = ConstId> + 'a {
        program.actions[self.action]
            .params
            .iter()
            .map(move |&s| self.binding[s])
    }

    pub fn display<'a>(&'a self, program: &'a Program, index: &'a AtomIndex) -> InstanceDisplay<'a> {
        InstanceDisplay {
            inst: self,
            program,
            index,
        }
    }
}

pub struct InstanceDisplay<'a> {
    inst: &'a ActionInstance,
    program: &'a Program,
    index: &'a AtomIndex,
}

impl fmt::Display for InstanceDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.program.actions[self.inst.action];
        f.write_str(&a.name)?;
        if !a.params.is_empty() {
            f.write_str("(")?;
            for (i, c) in self.inst.args(self.program).enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                f.write_str(self.index.constant_name(c))?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}
