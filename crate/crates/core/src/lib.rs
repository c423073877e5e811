//! Pointer statistics for weak value measurements on pre- and post-selected
//! ensembles.
//!
//! The crate pairs an exact von Neumann measurement engine ([`vonneumann`])
//! with first-order predictions for pointer means, variances, variance
//! control windows and measurement sensitivities ([`perturb`]). The
//! [`verify`] module measures how well the two agree.
//!
//! Conventions: pointer wavefunctions live on a uniform periodic grid
//! ([`pointer::GridSpec`]); momentum is `p_k = hbar * 2 pi k / L` for
//! `k` in `[-n/2, n/2)`; all quadratures are rectangle rules.

// negated comparisons are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hilbert;
pub mod perturb;
pub mod pointer;
mod spectral;
pub mod verify;
pub mod vonneumann;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
