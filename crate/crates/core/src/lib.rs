//! Exact jet arithmetic for the Schwarzian derivative, tensor-density modules
//! and the operator-valued cocycles built from them.
//!
//! Smooth functions are represented by their jets (derivative values at a
//! base point). Every identity is checked pointwise, exactly over the
//! rationals when the inputs allow it and in floating point otherwise.

pub mod cocycles;
pub mod error;
pub mod expr;
pub mod invariants;
pub mod jets;
pub mod modules;
pub mod numeric;
pub mod suites;

pub use error::{Error, Result};
pub use numeric::Scalar;
