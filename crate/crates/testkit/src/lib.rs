//! Reference computations for tests.
//!
//! Everything here is written the slow, obvious way: direct summations,
//! triple loops, central differences. None of it shares code with the
//! production crate, so agreement between the two is evidence rather than
//! tautology.

pub mod dsp;
pub mod gradcheck;
pub mod naive;
pub mod samplers;
pub mod stats;

pub use gradcheck::{check_gradient, finite_diff_gradient, GradCheckReport, TestkitError};
pub use naive::{naive_conv1d, naive_matmul};
