//! Experiment front end: config files, data expressions and the command
//! pipelines behind the `homoglab` binary.

pub mod config;
pub mod expr;
pub mod run;

pub use config::Config;
pub use expr::{parse_expr, Expr};
pub use run::{execute, run, Artifacts, Command, Outcome, RunOptions};
