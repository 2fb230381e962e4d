//! Numerical toolkit for weighted harmonic Bergman spaces on the real unit
//! ball: hyperbolic geometry, lattices, quadrature, reproducing-kernel
//! backends, sampling and synthesis operators, atomic decomposition,
//! interpolation and inclusion probes.

pub mod atomic;
pub mod error;
pub mod geom_suite;
pub mod geometry;
pub mod inclusion;
pub mod interpolation;
pub mod io;
pub mod kernels;
pub mod lattice;
pub mod numerics;
pub mod operators;
pub mod quadrature;
pub mod reports;

pub use error::{Error, Result};
