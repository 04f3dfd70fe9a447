//! Finite Herbrand base, interpretations and stratified evaluation.

mod atoms;
mod eval;
mod interp;

pub use atoms::{
    AtomDisplay, AtomError, AtomId, AtomIndex, CapacityError, ConstId, PredId, DEFAULT_ATOM_LIMIT,
};
pub use eval::{
    compile_atom, holds, minimal_model, query, CAtom, CLiteral, CTerm, CompiledRule, Conjunction,
    GroundLiteral, RuleSet, Substitution, UnboundNegation, VarTable,
};
pub(crate) use eval::solve;
pub use interp::Interpretation;
