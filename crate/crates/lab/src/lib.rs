//! Experiment harness for `resonance-core`: TOML configs, binary
//! checkpoints, CSV outputs and the `prlab` command line.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod inspect;
pub mod output;
pub mod pool;
pub mod runner;

pub use checkpoint::Checkpoint;
pub use config::{Algorithm, ExperimentConfig};
pub use error::{LabError, Result};
pub use runner::{run, sweep, SweepAxis};
