//! The rule language: a small Datalog-style DSL with negation-as-failure and
//! entity-minting heads, and the forward-chaining engine that runs it.

mod ast;
mod engine;
mod explain;
mod parser;

pub use ast::{print_rules, Atom, Builtin, FreshEntity, HeadAtom, Rule, Term};
pub use engine::{
    opposite, run_to_fixpoint, EngineConfig, EngineError, Firing, FixpointReport, NafScope,
};
pub use explain::{explain, Derivation, ExplainError};
pub use parser::{parse_rules, Location, ParseError, ParseErrorKind};
