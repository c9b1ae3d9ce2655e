//! Finite-dimensional unitary propagators for one-dimensional maps.
//!
//! A monotone map `X` on an interval is lifted to a transfer matrix
//! `V_ab = ∫ sqrt|X'(x)| e_a*(X(x)) e_b(x) dx` on `N` basis functions.
//! The truncated `V` is made unitary and iterated on wave functions.

pub mod basis;
pub mod error;
pub mod evolution;
pub mod linear_alt;
pub mod map_model;
pub mod propagator;
pub mod quadrature;

pub use error::{Error, Result};
