//! Polar decomposition `V = U P` through the SVD `V = W Σ Q^H`:
//! `U = W Q^H`, `P = Q Σ Q^H`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{max_abs, PropagatorMatrix, Stage, UnitarizationMethod};
use crate::error::Result;

/// Smallest singular value below which the unitary factor is convention-dependent.
pub const RANK_DEFICIENT_SV: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct PolarDecomposition {
    pub unitary: DMatrix<Complex64>,
    pub positive: DMatrix<Complex64>,
    pub singular_values: DVector<f64>,
}

impl PolarDecomposition {
    pub fn min_singular_value(&self) -> f64 {
        self.singular_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn rank_deficient(&self) -> bool {
        self.min_singular_value() < RANK_DEFICIENT_SV
    }

    /// `max |P - I|`; small when truncation preserved the original dynamics.
    pub fn positive_deviation(&self) -> f64 {
        let n = self.positive.nrows();
        max_abs(&(&self.positive - DMatrix::<Complex64>::identity(n, n)))
    }
}

/// Polar factors of a square matrix.
///
/// Null singular directions are kept from the full SVD, so the unitary
/// factor is well defined (if not unique) for rank-deficient input.
pub fn polar_decompose(m: &DMatrix<Complex64>) -> PolarDecomposition {
    assert!(m.is_square(), "polar decomposition needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return PolarDecomposition { unitary: m.clone(), positive: m.clone(), singular_values: DVector::zeros(0) };
    }
    let svd = m.clone().svd(true, true);
    let w = svd.u.expect("left singular vectors requested");
    let q_h = svd.v_t.expect("right singular vectors requested");
    let sigma = svd.singular_values;
    let unitary = &w * &q_h;
    let mut scaled = q_h.clone();
    for (i, s) in sigma.iter().enumerate() {
        scaled.row_mut(i).iter_mut().for_each(|z| *z *= *s);
    }
    let positive = q_h.adjoint() * scaled;
    PolarDecomposition { unitary, positive, singular_values: sigma }
}

/// Result of [`unitarize_polar_global`].
#[derive(Debug, Clone)]
pub struct PolarOutcome {
    pub propagator: PropagatorMatrix,
    pub positive: DMatrix<Complex64>,
    /// `max |P - I|`.
    pub positive_deviation: f64,
    pub min_singular_value: f64,
    /// Raised when the smallest singular value is below [`RANK_DEFICIENT_SV`].
    pub rank_deficient: bool,
}

pub fn unitarize_polar_global(v: &PropagatorMatrix) -> Result<PolarOutcome> {
    let polar = polar_decompose(v.entries());
    let positive_deviation = polar.positive_deviation();
    let min_singular_value = polar.min_singular_value();
    let rank_deficient = polar.rank_deficient();
    let propagator = PropagatorMatrix::new(
        polar.unitary,
        Stage::Unitarized(UnitarizationMethod::GlobalPolar),
        *v.basis(),
        v.map_name(),
    )?;
    Ok(PolarOutcome { propagator, positive: polar.positive, positive_deviation, min_singular_value, rank_deficient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::unitarity_defect;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn close(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tol: f64) -> bool {
        max_abs(&(a - b)) <= tol
    }

    #[test]
    fn identity_and_scaled_identity() {
        let i3 = DMatrix::<Complex64>::identity(3, 3);
        let p = polar_decompose(&i3);
        assert!(close(&p.unitary, &i3, 1e-14) && close(&p.positive, &i3, 1e-14));

        let p2 = polar_decompose(&(i3.clone() * c(2.0)));
        assert!(close(&p2.unitary, &i3, 1e-14));
        assert!(close(&p2.positive, &(i3 * c(2.0)), 1e-14));
    }

    #[test]
    fn scaled_rotation() {
        let v = DMatrix::from_row_slice(2, 2, &[c(0.0), c(-2.0), c(2.0), c(0.0)]);
        let p = polar_decompose(&v);
        let expected = DMatrix::from_row_slice(2, 2, &[c(0.0), c(-1.0), c(1.0), c(0.0)]);
        assert!(close(&p.unitary, &expected, 1e-14));
        assert!(close(&p.positive, &(DMatrix::identity(2, 2) * c(2.0)), 1e-14));
    }

    #[test]
    fn rank_deficient_input_still_gives_a_unitary() {
        let mut v = DMatrix::from_fn(6, 6, |i, j| c(((i * 7 + j * 3) % 5) as f64 - 2.0));
        v.row_mut(2).fill(c(0.0));
        v.row_mut(4).fill(c(0.0));
        let p = polar_decompose(&v);
        assert!(p.rank_deficient());
        assert!(unitarity_defect(&p.unitary) < 1e-12);
        assert!(close(&(&p.unitary * &p.positive), &v, 1e-12));
    }
}
