//! Pipeline driver: experiment configuration, cached stages and grid runs.

pub mod config;
pub mod matrix;
pub mod pipeline;

pub use config::{DatasetRef, ExperimentConfig, Ordering, Overrides};
pub use pipeline::{execute, RunOutputs, Stage, StageError};
