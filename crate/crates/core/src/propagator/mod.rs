//! Finite propagator matrices: construction, filtering and unitarization.

mod blocks;
mod build;
mod dump;
mod generator;
mod polar;
mod sparse;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::BasisSpec;
use crate::error::{Error, Result};

pub use blocks::{
    block_boundary_fraction, block_unitarize, detect_blocks, filter_threshold, sparsity_stats, unitarize_blocks, Block,
    BlockPartition, BlockUnitarization, SparsityStats, SquareGroup,
};
pub use build::{compute_truncated_matrix, BuildOptions, DEFAULT_QUAD_ORDER};
pub use dump::{parse_dump, write_dump, MatrixDump};
pub use generator::{generator_hamiltonian, unitarize_generator, unitarize_generator_unchecked, NEAR_IDENTITY_LIMIT};
pub use polar::{polar_decompose, unitarize_polar_global, PolarDecomposition, PolarOutcome, RANK_DEFICIENT_SV};
pub use sparse::CsrMatrix;

/// Tolerance on `max |U^H U - I|` for anything tagged unitarized.
pub const UNITARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitarizationMethod {
    GlobalPolar,
    BlockPolar,
    Generator,
}

impl fmt::Display for UnitarizationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitarizationMethod::GlobalPolar => "global_polar",
            UnitarizationMethod::BlockPolar => "block_polar",
            UnitarizationMethod::Generator => "generator",
        })
    }
}

impl std::str::FromStr for UnitarizationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global_polar" => Ok(Self::GlobalPolar),
            "block_polar" => Ok(Self::BlockPolar),
            "generator" => Ok(Self::Generator),
            other => Err(Error::InvalidParameter {
                name: "unitarization",
                reason: format!("unknown method `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    Truncated,
    Filtered(f64),
    Unitarized(UnitarizationMethod),
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Truncated => f.write_str("truncated"),
            Stage::Filtered(eps) => write!(f, "filtered({eps})"),
            Stage::Unitarized(m) => write!(f, "unitarized({m})"),
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown stage `{s}`"));
        if s == "truncated" {
            return Ok(Self::Truncated);
        }
        if let Some(eps) = s.strip_prefix("filtered(").and_then(|r| r.strip_suffix(')')) {
            return eps.parse().map(Self::Filtered).map_err(|_| bad());
        }
        if let Some(m) = s.strip_prefix("unitarized(").and_then(|r| r.strip_suffix(')')) {
            return m.parse().map(Self::Unitarized).map_err(|_| bad());
        }
        Err(bad())
    }
}

/// An `N x N` complex matrix tagged with how it was produced.
#[derive(Debug, Clone)]
pub struct PropagatorMatrix {
    entries: DMatrix<Complex64>,
    sparse: CsrMatrix,
    stage: Stage,
    basis: BasisSpec,
    map_name: String,
}

impl PropagatorMatrix {
    pub fn new(entries: DMatrix<Complex64>, stage: Stage, basis: BasisSpec, map_name: impl Into<String>) -> Result<Self> {
        let n = basis.dim();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::Dimension { expected: n, found: entries.nrows().max(entries.ncols()) });
        }
        let sparse = CsrMatrix::from_dense(&entries);
        Ok(Self { entries, sparse, stage, basis, map_name: map_name.into() })
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn sparse(&self) -> &CsrMatrix {
        &self.sparse
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn map_name(&self) -> &str {
        &self.map_name
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_unitarized(&self) -> bool {
        matches!(self.stage, Stage::Unitarized(_))
    }

    /// `M psi`, evaluated on the stored nonzeros in row order.
    pub fn apply(&self, psi: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if psi.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), found: psi.len() });
        }
        Ok(self.sparse.mul_vec(psi))
    }

    /// `max |M^H M - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.entries)
    }

    pub(crate) fn require_stage(&self, expected: &'static str, ok: bool) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Stage { found: self.stage.to_string(), expected })
        }
    }
}

pub fn unitarity_defect(m: &DMatrix<Complex64>) -> f64 {
    let g = m.adjoint() * m;
    let n = g.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

pub(crate) fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}
