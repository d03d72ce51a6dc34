//! Curvature certificates, exact semigroups, deviation bounds, and Monte
//! Carlo verification for birth-death chains.
//!
//! The crate is organized bottom up:
//!
//! * [`chain_model`]: rates, metrics, functions, and the local operators
//!   (generator, carre du champ, its iterate).
//! * [`semigroup`]: exact transition kernels by uniformization.
//! * [`curvature`]: certified curvature lower bounds and empirical
//!   contraction estimates.
//! * [`bounds`]: closed-form deviation inequalities driven by a curvature
//!   certificate and jump statistics.
//! * [`simulate`]: seeded path sampling and conservative tail estimation.
//! * [`verify`]: end-to-end checks that every bound holds against exact
//!   or sampled truth.

// guards are written `!(x > 0.0)` on purpose: the negated form rejects NaN
// along with the wrong sign, which `x <= 0.0` would silently let through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod chain_model;
pub mod curvature;
pub mod error;
pub mod semigroup;
pub mod simulate;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
