//! Canonical affine jump-diffusions.
//!
//! Admissibility checks, stability classification, transform (Riccati)
//! computation, path simulation, ergodic-average diagnostics and
//! transform-based moment calibration.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over matrix rows read closer to the formulas.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

pub mod calibrate;
pub mod cli;
pub mod error;
pub mod io;
pub mod limits;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod riccati;
pub mod simulate;
pub mod stability;
pub mod stats;

pub use error::{AjdError, Result};
pub use model::{JumpComponent, JumpDist, ModelSpec, ValidationReport};
