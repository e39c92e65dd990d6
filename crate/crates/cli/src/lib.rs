//! Experiment runner for boosting variational inference: TOML run files,
//! replicate and method-grid execution, trace and summary outputs.

pub mod commands;
pub mod config;
pub mod summary;
