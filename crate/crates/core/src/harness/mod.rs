//! Experiment harness: config ingestion, runs, metrics, CSV and plots.

pub mod config;
pub mod metrics;
pub mod plot;
pub mod runner;
