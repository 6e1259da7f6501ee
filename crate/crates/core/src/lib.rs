//! Maximally localized Wannier functions for periodic Schrödinger operators.

pub mod config;
pub mod error;
pub mod fiber;
pub mod frames;
pub mod functional;
pub mod harmonic;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod optimizer;
pub mod pipeline;
pub mod wannier;

pub use error::{Error, Result};
