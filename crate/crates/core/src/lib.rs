//! Normal extensions of multipoint second-order differential operators
//! `l(u) = −u″ + iAu` on direct sums of interval spaces.
//!
//! Each block `(Δ_n, A_n)` of the direct sum carries a boundary unitary
//! `W_n`; the crate provides two independent spectral engines (exact
//! characteristic determinant and finite differences), normality checks,
//! and direct-sum aggregation.

pub mod analytic;
pub mod boundary;
pub mod cli;
pub mod config;
pub mod directsum;
pub mod discrete;
pub mod error;
pub mod hilbert;
pub mod linalg;

pub use error::{OpError, Result};
