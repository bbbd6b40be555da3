//! Weakly coupled systems of first-order Hamilton–Jacobi equations on the flat torus.
//!
//! ```text
//! ∂u_i/∂t + H_i(x, Du_i) + Σ_j d_ij u_j = 0,   i = 1..m
//! ```
//!
//! The crate evolves such systems with a monotone explicit scheme, solves the
//! ergodic cell problem by vanishing discount, measures large-time convergence
//! of `u + ct`, and simulates the controlled switching process whose value
//! functions satisfy the system.

pub mod coupling;
pub mod diagnostics;
pub mod ergodic;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod fourier;
pub mod grid;
pub mod hamiltonian;
pub mod switching;

pub use error::{Error, Result};
