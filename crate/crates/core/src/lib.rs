//! Sparse style-space attribute directions and layer-wise style intervention
//! on a small differentiable style-based generator.

pub mod directions;
pub mod dissect;
pub mod error;
pub mod format;
pub mod intervene;
pub mod metrics;
pub mod numgrad;
pub mod pipeline;
pub mod stylegen;

pub use error::{Error, Result};
