//! Experiment harness around `spattn-core`: dataset ingestion, checkpoints,
//! experiment configs, CSV reports and SVG plots.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod ingest;
pub mod manifest;
pub mod plots;
pub mod tables;

pub use config::ExperimentConfig;
pub use experiment::{Run, Stage};
