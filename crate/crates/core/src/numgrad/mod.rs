//! Dense tensors and a closed set of differentiable primitives.
//!
//! Every primitive comes as a forward function plus a hand-written backward
//! rule in [`ops`]. The [`Tape`] records a graph built from those primitives
//! and replays it in reverse to produce gradients for every node.
//!
//! Values are stored in the tensor's scalar type (`f32` for storage, `f64`
//! for gradient checks); reductions always accumulate in `f64`.

pub mod check;
pub mod ops;
mod scalar;
mod tape;
mod tensor;

pub use ops::UpsampleMode;
pub use scalar::Scalar;
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
