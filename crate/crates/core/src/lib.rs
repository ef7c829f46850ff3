//! Sparse attention projections, attentional text classifiers and the
//! measurements used to ask whether sparse attention points at influential
//! inputs: gradient and leave-one-out feature importance, normalized entropy,
//! Kendall tau-b and adversarial attention.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod adversarial;
pub mod analysis;
pub mod attribution;
pub mod autodiff;
pub mod data;
mod error;
pub mod model;
pub mod projections;
pub mod tensor;

pub use error::{Error, Result};
pub use projections::{ProjectionKind, ScoreTransform, SimplexPoint};
pub use tensor::DenseArray;
