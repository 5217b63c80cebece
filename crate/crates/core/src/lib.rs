//! Training pipelines and bias evaluation for small embedding networks.
//!
//! The crate trains dense embedding networks with an optional feature-level
//! distillation term and measures how verification accuracy splits across
//! demographic-style attribute groups:
//!
//! * [`model`]: the network, analytic gradients, SGD, checkpoints.
//! * [`datagen`]: seeded synthetic attribute-biased datasets and feature files.
//! * [`distill`]: teacher/student training stages and the three pipelines
//!   (two-step, two-step with refinement, one-step).
//! * [`protocol`]: template aggregation and verification pair protocols.
//! * [`metrics`]: ROC construction, TPR at fixed FPR, attribute bias, bias
//!   performance coefficient, group spread, equalized-odds thresholds.
//! * [`saliency`]: input-gradient attention maps and group similarity.
//!
//! Everything is `f64`, single-threaded, and deterministic: the same seeds
//! and inputs reproduce identical bytes in every artifact.

pub mod datagen;
pub mod distill;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod protocol;
pub mod saliency;

pub use error::{Error, Result};
