//! Fire and smoke detection toolkit.
//!
//! The crate bundles an anchor-free detector built around an attentive
//! detection head, burning-intensity and 11-point AP metrics, dataset
//! ingestion and a synthetic transparent-target generator, and an
//! evaluation harness for ablations and class activation maps.

pub mod atdh;
pub mod boxmetrics;
pub mod config;
pub mod dataingest;
pub mod detector;
pub mod error;
pub mod evalharness;
pub mod nn;
pub mod util;

pub use boxmetrics::{BBox, BIWeights, Category, EvalReport, LabeledBox};
pub use error::{Error, Result};
pub use nn::{FeatureMap, ParamSet};

/// Toolkit version recorded in every output directory.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
