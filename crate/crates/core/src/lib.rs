//! Verification toolchain for multi-agent decision specifications.
//!
//! A spec describes a set of agents (beliefs and goals) together with a
//! shared knowledge base, durative probabilistic actions, decision rules,
//! communication rules and safety constraints. From it this crate can
//!
//! * generate the full transition system of the agents' decision making
//!   ([`ts::generate_ts`]) and encode it as a Prism MDP ([`prism`]);
//! * execute it one decision at a time as a runtime decision node that only
//!   commits decisions passing a safety check ([`runtime`]), fed by
//!   simulated sensors ([`sensor`]).

pub mod lang;
pub mod logic;
pub mod mental;
pub mod oracle;
pub mod prism;
pub mod runtime;
pub mod sensor;
pub mod testkit;
pub mod ts;

pub use lang::{load_spec, SpecError, ValidatedSpec};
pub use mental::Engine;
