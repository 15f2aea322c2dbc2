//! Batch front-end for the pricer: configuration parsing, trial
//! orchestration and the JSON/CSV artifacts written by the `lsmc-pde`
//! binary.

pub mod config;
pub mod error;
pub mod run;
pub mod summary;
