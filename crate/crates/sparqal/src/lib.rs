//! SPARQAL: procedural SPARQL with solution variables and do-while loops.
//!
//! A procedure is a sequence of `LET`, `DO ... WHILE` and `RETURN` statements
//! over SPARQL queries that may embed prior results through `QVALUES(var)`
//! placeholders. This crate provides the parser and validator, the value
//! model, an embedded SPARQL backend, the interpreter with in-memory and
//! batched (Map/Reduce) evaluation strategies, a library of graph-analytics
//! procedures, and result export.

pub mod backend;
pub mod batcher;
pub mod bench;
pub mod export;
pub mod fixtures;
pub mod interpreter;
pub mod parser;
pub mod solutions;
pub mod stdlib;
pub mod term;

pub use backend::{BackendError, Dataset, QueryBackend, RdfFormat, SparqlEndpoint};
pub use interpreter::{
    run_procedure, run_procedure_with_observer, RunConfig, RunError, RunObserver, RunTrace,
    Strategy,
};
pub use parser::{parse_procedure, validate_procedure, ProcedureAst, ValidationReport};
pub use solutions::{
    sequences_equal_as_multisets, sequences_equal_as_sets, serialize_values_block, Environment,
    SolutionMapping, SolutionSequence,
};
pub use term::RdfTerm;
