//! Grammar-guided, repair-driven fuzzing for SQL database systems.
//!
//! The pipeline: expand skeletal SQL templates from a grammar, instantiate
//! them against a generated schema through a pluggable model client, execute
//! against a persistent DBMS session, repair failing statements, keep
//! coverage-novel cases as mutation seeds, and validate/minimize crashes into
//! replayable PoCs.

pub mod case;
pub mod exec;
pub mod schema;
pub mod grammar;
pub mod llm;
pub mod mutation;
pub mod reduce;
pub mod repair;
pub mod sqltext;
