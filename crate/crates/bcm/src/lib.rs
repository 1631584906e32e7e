//! Boundary control method for one-dimensional inverse problems.
//!
//! Response kernels are synthesized from finite-difference wave solves, turned
//! into connecting operators, and fed to the special boundary-control equation
//! families whose endpoint readouts recover the potential `q` or density `rho`.
//! Classical Gelfand-Levitan, Krein, Pariiskii and Marchenko kernels are
//! available both from the families and from direct Nyström solves.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bcp;
pub mod error;
pub mod forward;
pub mod inverse;
pub mod media;
pub mod numerics;
pub mod operators;

pub use error::{BcmError, Result};
