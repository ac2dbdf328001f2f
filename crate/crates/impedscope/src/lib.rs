//! Experiment runner, file formats and CLI for electrode-array EIS lesion
//! classification. The numerical work lives in `impedscope-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod model_io;
pub mod pipeline;
pub mod report;

pub use impedscope_core as core;
