//! Leading-order generator route: `H = (i/2)(V - V^H)`, `U = exp(-iH)`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::{max_abs, PropagatorMatrix, Stage, UnitarizationMethod};
use crate::error::{Error, Result};

/// Largest `max |V - I|` accepted by [`unitarize_generator`].
pub const NEAR_IDENTITY_LIMIT: f64 = 0.5;

/// Hermitian part of the first-order generator of `v`.
pub fn generator_hamiltonian(v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let half_i = Complex64::new(0.0, 0.5);
    let mut h = (v - v.adjoint()) * half_i;
    // exact symmetrisation against round-off
    let n = h.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)].conj());
            h[(i, j)] = avg;
            h[(j, i)] = avg.conj();
        }
        h[(j, j)].im = 0.0;
    }
    h
}

/// Unitarizes a near-identity matrix through its leading-order generator.
pub fn unitarize_generator(v: &PropagatorMatrix) -> Result<PropagatorMatrix> {
    let n = v.dim();
    let deviation = max_abs(&(v.entries() - DMatrix::<Complex64>::identity(n, n)));
    if deviation >= NEAR_IDENTITY_LIMIT {
        return Err(Error::NotNearIdentity { deviation, limit: NEAR_IDENTITY_LIMIT });
    }
    unitarize_generator_unchecked(v)
}

/// Same construction without the near-identity check.
///
/// The output is unitary for any input, but it only approximates `v`
/// when `v` is close to the identity.
pub fn unitarize_generator_unchecked(v: &PropagatorMatrix) -> Result<PropagatorMatrix> {
    let h = generator_hamiltonian(v.entries());
    let eig = SymmetricEigen::new(h);
    let q = eig.eigenvectors;
    let mut scaled = q.adjoint();
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -lambda);
        scaled.row_mut(i).iter_mut().for_each(|z| *z *= phase);
    }
    let u = q * scaled;
    PropagatorMatrix::new(u, Stage::Unitarized(UnitarizationMethod::Generator), *v.basis(), v.map_name())
}
