//! Experiment plumbing: configuration, data generation, lockstep runs and
//! their files.

pub mod config;
pub mod experiment;
pub mod generator;
pub mod output;
pub mod rng;

pub use config::{Experiment, ExperimentConfig};
pub use experiment::{run_experiment, run_replication, RunRecord};
pub use generator::{Generator, GeneratorSpec, OutcomeRule};
pub use rng::{derive_rng, Purpose, RNG_NAME};
