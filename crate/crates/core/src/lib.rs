//! Knob-parameterized quantum models and a metastable 1-bit recorder model.
//!
//! The crate is `no_std` with `alloc`. It covers:
//!
//! - [`linalg`]: dense complex matrices, Hermitian eigendecomposition, square
//!   roots and the density/resolution contracts.
//! - [`model`]: knob spaces, relative-frequency tables, knob-parameterized
//!   models `(rho, E)` and the distances between them.
//! - [`constraints`]: the overlap upper bound and the resolution separation
//!   lower bound that every model fitting a table must satisfy.
//! - [`synthesis`]: construction of a zero-overlap model that reproduces any
//!   valid table exactly, and of inequivalent models fitting the same table.
//! - [`flipflop`]: the coupled inverted-oscillator recorder model, its closed
//!   form disagreement probability and the classical limit.
//! - [`fit`]: least-squares recovery of `(omega, lambda, b)` from
//!   disagreement-vs-time records.
//!
//! File formats, the split-step oracle and the command line live in the
//! companion `qrecord` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod constraints;
pub mod fit;
pub mod flipflop;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod synthesis;

pub use num_complex::Complex64 as C64;
