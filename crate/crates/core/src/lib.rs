//! Numerical core for computing the Fourier symbol of the averaged solution
//! operator of divergence-form elliptic equations with periodic or random
//! coefficients.
//!
//! Works without `std`; only `alloc` is required. Parallel evaluation is
//! injected through [`exec::Executor`].
#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cell;
pub mod correctors;
pub mod error;
pub mod exec;
pub mod fourier;
pub mod homogenized;
pub mod lattice;
pub mod linalg;
pub mod stats;
pub mod symbol;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
