//! The specification language: syntax, stratification and well-formedness.

pub mod ast;
pub use ast::*;
mod check;
mod diag;
mod lexer;
mod parser;
mod pretty;
mod strata;

pub use check::{check_well_formed, load_spec, DomainInfo, PredicateSig, SpecError, ValidatedSpec};
pub use diag::{Diagnostic, Diagnostics};
pub use parser::{parse_atom, parse_decimal, parse_literals, parse_spec};
pub use pretty::{format_weight, pretty_print};
pub(crate) use pretty::format_ratio;
pub use strata::{check_stratification, stratify, CycleError, Dependency, StrataAssignment};
