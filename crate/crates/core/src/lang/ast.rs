//! Abstract syntax of the specification language.
//!
//! Every node carries a [`Span`] for diagnostics. Spans never take part in
//! equality, so a reparsed pretty-printed spec compares equal to the original.

use std::fmt;
use std::hash::{Hash, Hasher};

use num_rational::Ratio;

/// Exact outcome weight.
pub type Weight = Ratio<i64>;

/// Byte range plus 1-based line/column of its start.
#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl Hash for Span {
    fn hash<H: Hasher>(&self, _state: &mut H) {}
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    /// Capitalized identifier.
    Var(String),
    /// Lowercase identifier.
    Const(String),
}

impl Term {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) | Term::Const(v) => f.write_str(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
    pub span: Span,
}

impl Atom {
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(Term::as_var)
    }

    pub fn is_ground(&self) -> bool {
        self.vars().next().is_none()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pred)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Literal {
    pub negated: bool,
    pub atom: Atom,
}

/// Knowledge-base clause `head :- body.`; facts have an empty body.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Literal>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Domain {
    pub name: String,
    pub constants: Vec<String>,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Bel,
    Goal,
}

/// `[not] bel(a1, .., an)` or `[not] goal(a1, .., an)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MentalLiteral {
    pub negated: bool,
    pub modality: Modality,
    pub atoms: Vec<Atom>,
    pub span: Span,
}

/// Conjunction of mental literals.
pub type Condition = Vec<MentalLiteral>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Param {
    pub var: String,
    pub domain: String,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EffectOp {
    Insert,
    Delete,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Effect {
    pub op: EffectOp,
    pub atom: Atom,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Outcome {
    pub weight: Weight,
    pub effects: Vec<Effect>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub duration: u32,
    pub precondition: Condition,
    pub outcomes: Vec<Outcome>,
    pub span: Span,
}

/// `if <condition> then action(args);`
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DecisionRule {
    pub condition: Condition,
    pub action: String,
    pub args: Vec<Term>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Recipient {
    All,
    Agent(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SendRule {
    pub condition: Condition,
    pub message: Atom,
    pub to: Recipient,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RecvRule {
    pub pattern: Atom,
    pub from: Option<String>,
    pub op: EffectOp,
    pub atom: Atom,
    pub span: Span,
}

/// `always [not] bel(a), ...;` with free variables universally quantified.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SafetyConstraint {
    pub literals: Vec<Literal>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AgentDecl {
    pub name: String,
    pub beliefs: Vec<Atom>,
    /// Each goal is a conjunction of atoms.
    pub goals: Vec<Vec<Atom>>,
    pub span: Span,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SpecAst {
    pub domains: Vec<Domain>,
    pub knowledge: Vec<Rule>,
    pub actions: Vec<ActionDecl>,
    pub decision_rules: Vec<DecisionRule>,
    pub send_rules: Vec<SendRule>,
    pub recv_rules: Vec<RecvRule>,
    pub safety: Vec<SafetyConstraint>,
    pub agents: Vec<AgentDecl>,
}

impl SpecAst {
    pub fn action(&self, name: &str) -> Option<(usize, &ActionDecl)> {
        self.actions.iter().enumerate().find(|(_, a)| a.name == name)
    }

    pub fn agent_index(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name)
    }
}
