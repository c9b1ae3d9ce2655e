//! Powers of the truncated matrix without unitarization.
//!
//! `y_t = V^t psi_0` for `t = 1..T` solves the block lower-bidiagonal system
//!
//! ```text
//! [  I             ] [y_1]   [V psi_0]
//! [ -V   I         ] [y_2]   [   0   ]
//! [     -V   I     ] [y_3] = [   0   ]
//! [         ...    ] [...]   [  ...  ]
//! ```
//!
//! which is solved here by forward substitution.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::evolution::StateVector;
use crate::map_model::MapSpec;
use crate::propagator::PropagatorMatrix;

/// Largest `N` for which [`CascadeSystem::assemble`] builds the full matrix.
pub const MAX_ASSEMBLED_DIM: usize = 8;
/// Cells whose reference amplitude is at most this are left out of local errors.
pub const LOCAL_ERROR_FLOOR: f64 = 1e-6;
/// Norm gap at which the unitarized and cascade trajectories count as diverged.
pub const DIVERGENCE_GAP: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct CascadeSystem {
    v: PropagatorMatrix,
    psi0: StateVector,
    steps: usize,
}

impl CascadeSystem {
    pub fn new(v: PropagatorMatrix, psi0: StateVector, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter { name: "steps", reason: "need T >= 1".into() });
        }
        if v.dim() != psi0.amplitudes.len() {
            return Err(Error::Dimension { expected: v.dim(), found: psi0.amplitudes.len() });
        }
        Ok(Self { v, psi0, steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }

    /// `(V psi_0, 0, ..., 0)`.
    pub fn rhs(&self) -> Result<DVector<Complex64>> {
        let n = self.dim();
        let mut b = DVector::zeros(n * self.steps);
        b.rows_mut(0, n).copy_from(&self.v.apply(&self.psi0.amplitudes)?);
        Ok(b)
    }

    /// The `TN x TN` system matrix; only for `N <= MAX_ASSEMBLED_DIM`.
    pub fn assemble(&self) -> Result<DMatrix<Complex64>> {
        let n = self.dim();
        if n > MAX_ASSEMBLED_DIM {
            return Err(Error::InvalidParameter {
                name: "N",
                reason: format!("assembling is limited to N <= {MAX_ASSEMBLED_DIM}, got {n}"),
            });
        }
        let t = self.steps;
        let mut m = DMatrix::<Complex64>::identity(n * t, n * t);
        let minus_v = -self.v.entries();
        for k in 1..t {
            m.view_mut((k * n, (k - 1) * n), (n, n)).copy_from(&minus_v);
        }
        Ok(m)
    }
}

/// `y_1, ..., y_T` by forward substitution.
pub fn solve_cascade(sys: &CascadeSystem) -> Result<Vec<DVector<Complex64>>> {
    let mut out = Vec::with_capacity(sys.steps);
    let mut y = sys.v.apply(&sys.psi0.amplitudes)?;
    for _ in 1..sys.steps {
        let next = sys.v.apply(&y)?;
        out.push(std::mem::replace(&mut y, next));
    }
    out.push(y);
    Ok(out)
}

/// Cell amplitudes `sqrt(F_t(x_a) dx)` of the classically pushed-forward
/// density for `t = 1..=steps`, scaled so that `t = 0` has unit norm.
pub fn classical_reference(
    map: &MapSpec,
    basis: &BasisSpec,
    density: &dyn Fn(f64) -> f64,
    steps: usize,
) -> Result<Vec<DVector<Complex64>>> {
    let grid = basis.grid()?;
    let mass: f64 = grid.centers().map(|x| density(x) * grid.dx).sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter { name: "density", reason: "zero mass on the grid".into() });
    }
    (1..=steps)
        .map(|t| {
            let amps = grid
                .centers()
                .map(|x| Ok(Complex64::new((map.push_forward_pointwise(density, t, x)? * grid.dx / mass).max(0.0).sqrt(), 0.0)))
                .collect::<Result<Vec<_>>>()?;
            Ok(DVector::from_vec(amps))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub t: usize,
    /// `||y_t - r_t|| / ||r_t||` for the cascade solution `y` and reference `r`.
    pub global_rel_err: f64,
    /// Largest `|y_t^a - r_t^a| / |r_t^a|` over cells with `|r_t^a| > LOCAL_ERROR_FLOOR`.
    pub max_local_rel_err: f64,
    /// `||u_t - y_t||`.
    pub unitary_vs_cascade_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    /// First step where the unitarized and cascade trajectories differ by more than [`DIVERGENCE_GAP`].
    pub divergence_step: Option<usize>,
}

pub const ERROR_TABLE_HEADER: &str = "t,global_rel_err,max_local_rel_err,unitary_vs_cascade_gap";

impl ErrorTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ERROR_TABLE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                r.t, r.global_rel_err, r.max_local_rel_err, r.unitary_vs_cascade_gap
            );
        }
        out
    }
}

/// Per-step errors of the cascade solution against a reference, plus its
/// distance from the unitarized trajectory. All slices hold steps `1..=T`.
pub fn compare_errors(
    y: &[DVector<Complex64>],
    u_traj: &[DVector<Complex64>],
    reference: &[DVector<Complex64>],
) -> Result<ErrorTable> {
    for other in [u_traj.len(), reference.len()] {
        if other != y.len() {
            return Err(Error::LengthMismatch { left: y.len(), right: other });
        }
    }
    let mut rows = Vec::with_capacity(y.len());
    for (k, ((yt, ut), rt)) in y.iter().zip(u_traj).zip(reference).enumerate() {
        for v in [ut, rt] {
            if v.len() != yt.len() {
                return Err(Error::Dimension { expected: yt.len(), found: v.len() });
            }
        }
        let diff = yt - rt;
        let rn = rt.norm();
        let global_rel_err = if rn > 0.0 { diff.norm() / rn } else { diff.norm() };
        let max_local_rel_err = rt
            .iter()
            .zip(diff.iter())
            .filter(|(r, _)| r.norm() > LOCAL_ERROR_FLOOR)
            .map(|(r, d)| d.norm() / r.norm())
            .fold(0.0, f64::max);
        rows.push(ErrorRow { t: k + 1, global_rel_err, max_local_rel_err, unitary_vs_cascade_gap: (ut - yt).norm() });
    }
    let divergence_step = rows.iter().find(|r| r.unitary_vs_cascade_gap > DIVERGENCE_GAP).map(|r| r.t);
    Ok(ErrorTable { rows, divergence_step })
}
