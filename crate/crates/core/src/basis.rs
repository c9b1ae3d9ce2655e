//! Orthonormal bases on a finite interval.
//!
//! Two kinds are supported: piecewise-constant cell indicators ("spatial")
//! and global complex exponentials ("Fourier"). Indices are 1-based
//! throughout to match the cell-centre convention `x_a = x_min + (a - 1/2) dx`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::map_model::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Spatial,
    Fourier,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Spatial => "spatial",
            BasisKind::Fourier => "fourier",
        })
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(BasisKind::Spatial),
            "fourier" => Ok(BasisKind::Fourier),
            other => Err(Error::InvalidParameter {
                name: "basis.kind",
                reason: format!("unknown basis kind `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSpec {
    kind: BasisKind,
    n: usize,
    domain: Interval,
}

impl BasisSpec {
    pub fn new(kind: BasisKind, n: usize, domain: Interval) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter { name: "basis.n", reason: format!("need N >= 2, got {n}") });
        }
        Ok(Self { kind, n, domain })
    }

    pub fn spatial(n: usize, domain: Interval) -> Result<Self> {
        Self::new(BasisKind::Spatial, n, domain)
    }

    pub fn fourier(n: usize, domain: Interval) -> Result<Self> {
        Self::new(BasisKind::Fourier, n, domain)
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// Cell width `(x_max - x_min) / N`.
    pub fn dx(&self) -> f64 {
        self.domain.width() / self.n as f64
    }

    fn check_index(&self, a: usize) -> Result<()> {
        if a == 0 || a > self.n {
            return Err(Error::Index { index: a, n: self.n });
        }
        Ok(())
    }

    /// Signed mode number `a - N/2` of a Fourier basis element.
    pub fn mode(&self, a: usize) -> f64 {
        a as f64 - self.n as f64 / 2.0
    }

    /// Value of the `a`-th basis function at `x`.
    pub fn basis_eval(&self, a: usize, x: f64) -> Result<Complex64> {
        self.check_index(a)?;
        if !self.domain.contains(x) {
            return Err(Error::Domain { x, lo: self.domain.lo, hi: self.domain.hi });
        }
        Ok(match self.kind {
            BasisKind::Spatial => {
                let grid = Grid::from_spec(self);
                if grid.cell_of(x) == a {
                    Complex64::new(1.0 / self.dx().sqrt(), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            BasisKind::Fourier => self.fourier_value(a, x),
        })
    }

    /// `L^{-1/2} exp(2 pi i (a - N/2) x / L)`; on `[-1, 1]` this is `2^{-1/2} exp(i pi (a - N/2) x)`.
    pub(crate) fn fourier_value(&self, a: usize, x: f64) -> Complex64 {
        let l = self.domain.width();
        Complex64::from_polar(1.0 / l.sqrt(), 2.0 * PI * self.mode(a) * x / l)
    }

    /// Cell-index conventions of a spatial basis.
    pub fn grid(&self) -> Result<Grid> {
        match self.kind {
            BasisKind::Spatial => Ok(Grid::from_spec(self)),
            BasisKind::Fourier => Err(Error::Kind { expected: "spatial" }),
        }
    }
}

/// Uniform cells `a = 1..=N` with centres `x_a = x_min + (a - 1/2) dx`.
///
/// An interior edge belongs to the lower-index cell; `x_min` belongs to cell 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub dx: f64,
    pub n: usize,
}

impl Grid {
    fn from_spec(spec: &BasisSpec) -> Self {
        Self { lo: spec.domain.lo, dx: spec.dx(), n: spec.n }
    }

    /// 1-based cell containing `x`; an interior edge belongs to the lower cell.
    pub fn cell_of(&self, x: f64) -> usize {
        let mut u = (x - self.lo) / self.dx;
        // points that are an edge up to round-off count as that edge
        if (u - u.round()).abs() < 1e-9 {
            u = u.round();
        }
        (u.ceil().max(1.0) as usize).min(self.n)
    }

    pub fn center_of(&self, a: usize) -> f64 {
        self.lo + (a as f64 - 0.5) * self.dx
    }

    /// Edge `k`, `0..=n`; cell `a` spans edges `a - 1` and `a`.
    pub fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.dx
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.n).map(|a| self.center_of(a))
    }
}
