//! Numerical core for electrode-array impedance spectroscopy (EIS) lesion
//! classification.
//!
//! Everything here is pure computation over in-memory data and builds under
//! `no_std` with `alloc`: the electrode-pattern universe and geometric masks,
//! burst filtering and feature assembly, PCA frequency ranking, the three
//! classifier families, cross-validation splitting, scoring and the Cole-model
//! cohort generator. File formats, configuration files, the experiment runner
//! and the CLI live in the `impedscope` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod cv;
pub mod dataset;
mod error;
pub mod folds;
pub mod frequency;
pub mod geometry;
pub mod label;
pub mod linalg;
pub(crate) mod math;
pub mod metrics;
pub mod preprocess;
pub mod ranking;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use frequency::FrequencyGrid;
pub use geometry::{ElectrodeArray, IivvPattern, MaskSet, PatternUniverse};
pub use label::{TaskSpec, TissueCategory, TissueLabel};
