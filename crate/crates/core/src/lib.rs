//! Distributed optimal control of a nonlocal Cahn–Hilliard-type phase-field
//! system with double obstacle potential.
//!
//! The crate simulates the state system at deep-quench levels `alpha > 0`
//! (logarithmic potential scaled by `phi(alpha)`) and at the obstacle limit,
//! solves the adjoint system backward in time, and computes box-constrained
//! optimal controls by projected gradient descent with continuation in
//! `alpha`. Every module ships the checks that back its invariants; the
//! [`verify`] module aggregates them.
// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod nonlocal;
pub mod optimize;
pub mod physics;
pub mod state;
pub mod verify;

pub use error::{Error, Result};
