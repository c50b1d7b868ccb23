pub mod config;
pub mod run;

pub use config::{DtPolicy, ExperimentConfig, ExperimentKind, PotentialConfig};
pub use run::{content_hash, identity_suite, run, RunOutcome, SuiteRow, Verdict};
