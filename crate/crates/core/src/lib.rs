//! Spectral engine for the strongly damped wave equation
//! `u'' + 2 delta A^sigma u' + c(t) A u = 0`.
//!
//! Each eigenmode of `A` obeys a scalar ODE. The crate integrates those ODEs
//! with overflow-safe state, audits energy estimates on them, builds the
//! resonant counterexample coefficient and classifies growth regimes.
//!
//! Everything here is `no_std` with `alloc`; file formats and the command
//! line live in the `hypdamp` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod coefficients;
pub mod dgcs_builder;
pub mod exec;
pub mod math;
pub mod mode_solver;
pub mod phase_diagram;
pub mod spaces;
pub mod theorem_verifier;
pub mod xf;

pub use xf::Xf;
