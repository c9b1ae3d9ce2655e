//! Wave-function states, iteration of a unitarized propagator and the
//! diagnostics recorded along the way.

mod attractors;
mod echo;
mod sampling;

use std::fmt::Write as _;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::basis::{BasisKind, BasisSpec, Grid};
use crate::error::{Error, Result};
use crate::propagator::PropagatorMatrix;

pub use attractors::{find_attractors, find_peaks, AttractorReport, Peak, PeakRule};
pub use echo::{find_echo_time, find_echo_time_with, EchoMode, EchoOptions, EchoReport, EchoVerdict, DEFAULT_T1};
pub use sampling::{sample_cells, sample_measurements, sample_measurements_at, MeasurementConfig, SampledEstimates};

/// Default probe for `Γ_κ`.
pub const DEFAULT_KAPPA: f64 = 0.1;
/// Default Gaussian width in cells.
pub const DEFAULT_SIGMA_CELLS: f64 = 5.0;
/// Narrowest Gaussian accepted by [`init_state`], in cells.
pub const MIN_SIGMA_CELLS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: DVector<Complex64>,
    pub basis: BasisSpec,
}

impl StateVector {
    pub fn new(amplitudes: DVector<Complex64>, basis: BasisSpec) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::Dimension { expected: basis.dim(), found: amplitudes.len() });
        }
        Ok(Self { amplitudes, basis })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `|psi_a|^2` for every cell.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    fn grid(&self) -> Result<Grid> {
        self.basis.grid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitSpec {
    Gaussian { center: f64, sigma: f64 },
    Flat,
    DeltaCell { center: f64 },
}

impl InitSpec {
    /// Gaussian with the default width of five cells.
    pub fn default_gaussian(center: f64, basis: &BasisSpec) -> Self {
        Self::Gaussian { center, sigma: DEFAULT_SIGMA_CELLS * basis.dx() }
    }
}

/// `psi_a = sqrt(F(x_a) dx)`, normalized.
pub fn init_state(init: InitSpec, basis: &BasisSpec) -> Result<StateVector> {
    let grid = basis.grid()?;
    let n = basis.dim();
    let dom = basis.domain();
    let check_center = |x: f64| {
        if dom.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain { x, lo: dom.lo, hi: dom.hi })
        }
    };
    let amplitudes = match init {
        InitSpec::Flat => DVector::from_element(n, Complex64::new(1.0 / (n as f64).sqrt(), 0.0)),
        InitSpec::DeltaCell { center } => {
            check_center(center)?;
            let mut v = DVector::zeros(n);
            v[grid.cell_of(center) - 1] = Complex64::new(1.0, 0.0);
            v
        }
        InitSpec::Gaussian { center, sigma } => {
            check_center(center)?;
            let min = MIN_SIGMA_CELLS * grid.dx;
            if !(sigma >= min) {
                return Err(Error::Width { sigma, min });
            }
            let mut v = DVector::from_iterator(
                n,
                grid.centers().map(|x| {
                    let f = (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp();
                    Complex64::new((f * grid.dx).sqrt(), 0.0)
                }),
            );
            let norm = v.norm();
            v.unscale_mut(norm);
            v
        }
    };
    StateVector::new(amplitudes, *basis)
}

fn spatial_weights(psi: &StateVector) -> Result<(Grid, Vec<f64>)> {
    if psi.basis.kind() != BasisKind::Spatial {
        return Err(Error::Kind { expected: "spatial" });
    }
    Ok((psi.grid()?, psi.probabilities()))
}

/// `Σ x_a |psi_a|^2`.
///
/// Moments are divided by `Σ |psi_a|^2`, which is one up to round-off; this
/// makes `γ_0 = 1` exact.
pub fn expectation_x(psi: &StateVector) -> Result<f64> {
    let (grid, p) = spatial_weights(psi)?;
    let mass: f64 = p.iter().sum();
    Ok(grid.centers().zip(&p).map(|(x, w)| x * w).sum::<f64>() / mass)
}

/// `γ_κ = Σ e^{iπκa} |psi_a|^2` with 1-based `a`.
pub fn gamma_kappa(psi: &StateVector, kappa: f64) -> Result<Complex64> {
    let (_, p) = spatial_weights(psi)?;
    let mass: f64 = p.iter().sum();
    let sum: Complex64 = p
        .iter()
        .enumerate()
        .map(|(i, w)| Complex64::from_polar(*w, std::f64::consts::PI * kappa * (i + 1) as f64))
        .sum();
    Ok(sum / mass)
}

pub fn std_x(psi: &StateVector) -> Result<f64> {
    let (grid, p) = spatial_weights(psi)?;
    let mass: f64 = p.iter().sum();
    let mean = grid.centers().zip(&p).map(|(x, w)| x * w).sum::<f64>() / mass;
    // centred second moment avoids cancellation
    let var = grid.centers().zip(&p).map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / mass;
    Ok(var.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: usize,
    pub mean_x: f64,
    pub gamma: Complex64,
    /// `|γ_κ|^2`.
    pub gamma_abs2: f64,
    pub std_x: f64,
    pub norm: f64,
    pub sampled: Option<SampledEstimates>,
}

impl DiagnosticsRecord {
    pub fn of(t: usize, psi: &StateVector, kappa: f64) -> Result<Self> {
        let gamma = gamma_kappa(psi, kappa)?;
        Ok(Self {
            t,
            mean_x: expectation_x(psi)?,
            gamma,
            gamma_abs2: gamma.norm_sqr(),
            std_x: std_x(psi)?,
            norm: psi.norm(),
            sampled: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSeries {
    pub kappa: f64,
    pub records: Vec<DiagnosticsRecord>,
}

pub const DIAGNOSTICS_HEADER: &str =
    "t,mean_x,re_gamma,im_gamma,Gamma,std_x,norm,sampled_mean_x,sampled_Gamma,stderr_mean_x";

impl DiagnosticsSeries {
    pub fn mean_x(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_x).collect()
    }

    pub fn gamma_abs2(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gamma_abs2).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(DIAGNOSTICS_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = write!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},",
                r.t, r.mean_x, r.gamma.re, r.gamma.im, r.gamma_abs2, r.std_x, r.norm
            );
            match &r.sampled {
                Some(s) => {
                    let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", s.mean_x, s.gamma_abs2, s.stderr_mean_x);
                }
                None => out.push_str(",,\n"),
            }
        }
        out
    }
}

fn check_unitarized(u: &PropagatorMatrix, psi: &StateVector) -> Result<()> {
    if !u.is_unitarized() {
        return Err(Error::Stage { found: u.stage().to_string(), expected: "unitarized" });
    }
    if u.dim() != psi.amplitudes.len() {
        return Err(Error::Dimension { expected: u.dim(), found: psi.amplitudes.len() });
    }
    Ok(())
}

/// States `psi_0, U psi_0, ..., U^T psi_0`.
pub fn propagate(u: &PropagatorMatrix, psi0: &StateVector, steps: usize) -> Result<Vec<StateVector>> {
    check_unitarized(u, psi0)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(psi0.clone());
    for _ in 0..steps {
        let next = u.apply(&states.last().expect("non-empty").amplitudes)?;
        states.push(StateVector { amplitudes: next, basis: psi0.basis });
    }
    Ok(states)
}

/// Diagnostics for `t = 0..=steps`.
pub fn evolve(u: &PropagatorMatrix, psi0: &StateVector, steps: usize, kappa: f64) -> Result<DiagnosticsSeries> {
    let records = propagate(u, psi0, steps)?
        .iter()
        .enumerate()
        .map(|(t, psi)| DiagnosticsRecord::of(t, psi, kappa))
        .collect::<Result<_>>()?;
    Ok(DiagnosticsSeries { kappa, records })
}

/// Like [`evolve`], with sampled estimates at every step.
///
/// Step `t` draws from random stream `t`, so any subrange of steps
/// reproduces the same numbers.
pub fn evolve_sampled(
    u: &PropagatorMatrix,
    psi0: &StateVector,
    steps: usize,
    cfg: &MeasurementConfig,
) -> Result<DiagnosticsSeries> {
    let records = propagate(u, psi0, steps)?
        .iter()
        .enumerate()
        .map(|(t, psi)| {
            let mut r = DiagnosticsRecord::of(t, psi, cfg.kappa)?;
            r.sampled = Some(sample_measurements_at(psi, cfg, t as u64)?);
            Ok(r)
        })
        .collect::<Result<_>>()?;
    Ok(DiagnosticsSeries { kappa: cfg.kappa, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::Interval;
    use crate::propagator::{Stage, UnitarizationMethod};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    pub(super) fn unit_basis(n: usize) -> BasisSpec {
        BasisSpec::spatial(n, Interval::unit()).unwrap()
    }

    /// Cyclic shift by `k` cells, tagged as unitarized.
    pub(super) fn cyclic_shift(n: usize, k: usize) -> PropagatorMatrix {
        let m = DMatrix::from_fn(n, n, |i, j| if i == (j + k) % n { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        PropagatorMatrix::new(m, Stage::Unitarized(UnitarizationMethod::BlockPolar), unit_basis(n), "shift").unwrap()
    }

    pub(super) fn identity_u(n: usize) -> PropagatorMatrix {
        PropagatorMatrix::new(DMatrix::identity(n, n), Stage::Unitarized(UnitarizationMethod::GlobalPolar), unit_basis(n), "id").unwrap()
    }

    #[test]
    fn flat_and_delta_states() {
        let b = unit_basis(200);
        let flat = init_state(InitSpec::Flat, &b).unwrap();
        assert!(flat.amplitudes.iter().all(|z| (z.re - 200f64.sqrt().recip()).abs() < 1e-16 && z.im == 0.0));
        assert_abs_diff_eq!(flat.norm(), 1.0, epsilon = 1e-14);

        let delta = init_state(InitSpec::DeltaCell { center: 0.5 }, &b).unwrap();
        let a = b.grid().unwrap().cell_of(0.5);
        assert_eq!(delta.amplitudes[a - 1], Complex64::new(1.0, 0.0));
        assert_eq!(delta.probabilities().iter().filter(|p| **p != 0.0).count(), 1);
    }

    #[test]
    fn gaussian_state() {
        let b = unit_basis(200);
        let psi = init_state(InitSpec::Gaussian { center: 0.5, sigma: 0.05 }, &b).unwrap();
        assert_abs_diff_eq!(psi.norm(), 1.0, epsilon = 1e-12);
        // direct discrete oracle
        let w: Vec<f64> = (1..=200).map(|a| {
            let x = -1.0 + (a as f64 - 0.5) * 0.01;
            (-(x - 0.5f64).powi(2) / (2.0 * 0.05f64.powi(2))).exp()
        }).collect();
        let total: f64 = w.iter().sum();
        let mean: f64 = w.iter().enumerate().map(|(i, wi)| wi * (-1.0 + (i as f64 + 0.5) * 0.01)).sum::<f64>() / total;
        assert_abs_diff_eq!(expectation_x(&psi).unwrap(), mean, epsilon = 1e-12);
        assert!((mean - 0.5).abs() <= 0.01);
    }

    #[test]
    fn narrow_or_misplaced_gaussian_is_rejected() {
        let b = unit_basis(200);
        assert!(matches!(init_state(InitSpec::Gaussian { center: 0.0, sigma: 0.02 }, &b), Err(Error::Width { .. })));
        assert!(matches!(init_state(InitSpec::DeltaCell { center: 1.5 }, &b), Err(Error::Domain { .. })));
        let fb = BasisSpec::fourier(16, Interval::unit()).unwrap();
        assert!(matches!(init_state(InitSpec::Flat, &fb), Err(Error::Kind { .. })));
    }

    #[test]
    fn diagnostics_of_simple_states() {
        let b = unit_basis(200);
        let g = b.grid().unwrap();
        let delta = init_state(InitSpec::DeltaCell { center: 0.3 }, &b).unwrap();
        let a = g.cell_of(0.3);
        assert_eq!(expectation_x(&delta).unwrap(), g.center_of(a));
        assert_eq!(std_x(&delta).unwrap(), 0.0);
        assert_abs_diff_eq!(gamma_kappa(&delta, 0.1).unwrap().norm(), 1.0, epsilon = 1e-15);

        let flat = init_state(InitSpec::Flat, &b).unwrap();
        assert_abs_diff_eq!(expectation_x(&flat).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(gamma_kappa(&flat, 0.0).unwrap(), Complex64::new(1.0, 0.0));
        let pk = std::f64::consts::PI * 0.1;
        let closed = ((pk * 200.0 / 2.0).sin() / (200.0 * (pk / 2.0).sin())).abs();
        assert_abs_diff_eq!(gamma_kappa(&flat, 0.1).unwrap().norm(), closed, epsilon = 1e-12);
        let big = init_state(InitSpec::Flat, &unit_basis(4000)).unwrap();
        assert_abs_diff_eq!(std_x(&big).unwrap(), 3f64.sqrt().recip(), epsilon = 1e-6);

        // two cells at +-x0
        let (i, j) = (g.cell_of(-0.405), g.cell_of(0.405));
        let mut amp = DVector::zeros(200);
        amp[i - 1] = Complex64::new(0.5f64.sqrt(), 0.0);
        amp[j - 1] = Complex64::new(0.0, 0.5f64.sqrt());
        let two = StateVector::new(amp, b).unwrap();
        assert_abs_diff_eq!(expectation_x(&two).unwrap(), 0.5 * (g.center_of(i) + g.center_of(j)), epsilon = 1e-15);
        assert_abs_diff_eq!(std_x(&two).unwrap(), g.center_of(j), epsilon = 1e-15);
    }

    #[test]
    fn identity_evolution_is_constant() {
        let b = unit_basis(50);
        let psi = init_state(InitSpec::Gaussian { center: 0.2, sigma: 0.15 }, &b).unwrap();
        let s = evolve(&identity_u(50), &psi, 5, 0.1).unwrap();
        assert_eq!(s.records.len(), 6);
        assert!(s.records.iter().all(|r| r.mean_x == s.records[0].mean_x && r.gamma == s.records[0].gamma));
    }

    #[test]
    fn shift_moves_mean_by_k_cells() {
        let b = unit_basis(100);
        let k = 2;
        let psi = init_state(InitSpec::DeltaCell { center: -0.5 }, &b).unwrap();
        let s = evolve(&cyclic_shift(100, k), &psi, 10, 0.1).unwrap();
        for r in &s.records {
            assert_abs_diff_eq!(r.mean_x, s.records[0].mean_x + (k * r.t) as f64 * b.dx(), epsilon = 1e-12);
        }
    }

    #[test]
    fn evolve_requires_unitarized_stage() {
        let b = unit_basis(4);
        let v = PropagatorMatrix::new(DMatrix::identity(4, 4), Stage::Truncated, b, "v").unwrap();
        let psi = init_state(InitSpec::Flat, &b).unwrap();
        assert!(matches!(evolve(&v, &psi, 1, 0.1), Err(Error::Stage { .. })));
    }

    #[test]
    fn csv_layout() {
        let b = unit_basis(10);
        let psi = init_state(InitSpec::Flat, &b).unwrap();
        let s = evolve(&identity_u(10), &psi, 2, 0.1).unwrap();
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], DIAGNOSTICS_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,") && lines[1].ends_with(",,,"));
        assert_eq!(lines[1].split(',').count(), 10);

        let cfg = MeasurementConfig { samples: 100, seed: 1, kappa: 0.1 };
        let sampled = evolve_sampled(&identity_u(10), &psi, 1, &cfg).unwrap().to_csv();
        assert!(sampled.lines().skip(1).all(|l| l.split(',').all(|f| !f.is_empty())));
    }
}
