//! Numerical laboratory for weakly coupled, quasi-monotone systems of
//! fully nonlinear parabolic equations in min-max form.
//!
//! The crate is `no_std` (it needs `alloc`). IO, file formats and the
//! command-line driver live in the companion `homlab` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cell;
pub mod estimates;
pub mod exec;
pub mod experiments;
pub mod grid;
pub mod linalg;
pub mod operator;
pub mod sampling;
pub mod scenario;
pub mod solver;
