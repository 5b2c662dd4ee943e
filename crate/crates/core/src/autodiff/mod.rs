//! Scalar reverse-mode automatic differentiation with second-order support.
//!
//! All values are `f64` scalars recorded on an append-only [`Tape`]. A node
//! is created eagerly with its forward value cached, so reading
//! [`Tape::value`] after construction never recomputes anything.
//!
//! First-order gradients come from [`Tape::backward`], a numeric reverse
//! sweep. Second-order quantities come from [`Tape::gradient_nodes`], which
//! appends the adjoint computation itself as ordinary nodes; a later
//! `backward` then differentiates through the appended gradient
//! (reverse-over-reverse), which is what lets a loss built on pulled query
//! points reach the network parameters through the field gradient.

mod adam;
mod tape;

pub mod scalar;

pub use adam::AdamState;
pub use tape::{NodeId, Tape, TapeMark};
