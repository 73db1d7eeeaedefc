//! Carrier-phase localization for phase-coherent distributed MIMO.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod exec;
pub mod fim;
pub mod harness;
pub mod hyperbola;
pub mod mle;
pub mod pipeline;
pub mod scenario;
pub mod selection;

pub use error::{Error, Result};
pub use scenario::{Pos, Scenario};
