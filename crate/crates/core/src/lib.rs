//! Model-generated evaluation inputs for feature-attribution methods.
//!
//! The crate optimizes image patches against a small convolutional
//! classifier so that each patch's contribution to the logits is known by
//! construction (null, class-specific, or saturating), runs a suite of
//! attribution methods on the composed inputs, and scores each method with
//! ratio and correlation metrics.
//!
//! Module map:
//!
//! - [`tensor`] / [`autodiff`]: dense `f64` tensors and a reverse-mode graph.
//! - [`micronet`]: the classifier, the patch decoder prior, synthetic training.
//! - [`scenario`]: patch generation for the four evaluation scenarios.
//! - [`attribution`]: the attribution methods under test.
//! - [`metrics`]: scores computed from attribution maps.
//! - [`harness`]: configuration, batch runs, persistence and reports.

pub mod attribution;
pub mod autodiff;
pub mod container;
pub mod harness;
mod error;
pub mod metrics;
pub mod micronet;
pub mod region;
pub mod scenario;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Tensor, TensorError};
