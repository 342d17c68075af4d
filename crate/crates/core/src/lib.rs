//! Corrected parametrix for the degenerate parabolic problem
//!
//! ```text
//! u_t = 1/2 u_yy + b1 u_x + b2 u_y + c u + f   on (0, T) x (0, inf) x R
//! u(0, x, y) = u_init(x, y),   u(t, 0, y) = u_side(t, y)
//! ```
//!
//! with `db1/dy > 0` and `b1(0, y) < 0`. The solution is built from a
//! frozen-coefficient Gaussian kernel, a polynomial corrector, a single
//! layer potential on the side boundary and a Volterra iteration for the
//! densities; a Feynman-Kac Monte Carlo estimator is provided as an
//! independent check.
//!
//! The crate is `no_std` with `alloc` when the default `std` feature is
//! disabled. With `std`, grid and path evaluations run on rayon.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(a > b)` is the NaN-rejecting form throughout; index loops mirror the
// formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod corrections;
pub mod error;
pub mod frozen_kernels;
pub mod math;
pub mod mc_oracle;
pub mod monomial_algebra;
pub mod problem_model;
pub mod quadrature;
pub mod volterra_solver;

mod par;

pub use error::{Error, Result};
