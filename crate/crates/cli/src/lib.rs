//! Experiment orchestration: configuration, pair linking and the staged
//! pipeline behind the `kgprompt` binary.

pub mod config;
pub mod link;
pub mod pipeline;

pub use config::{BackendConfig, ConfigError, ExperimentConfig, KgFormat, KgSource};
pub use link::{link_pairs, normalize, EntityLink, LinkMethod, LinkReport, Overrides, PairLinkage};
pub use pipeline::{evaluate_existing, run_experiment, run_until, RunError, RunSummary, Stage};
