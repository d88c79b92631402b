//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Graphs are built eagerly: every op computes and caches its forward value
//! when it is appended. Only scalar-to-tensor broadcasting is permitted in
//! elementwise ops. The relu derivative at exactly zero is taken as zero.

mod gradcheck;
mod graph;
pub(crate) mod kernels;

pub use gradcheck::{finite_difference_check, GradCheck};
pub use graph::{GradMode, GradientSet, Graph, NodeId};
