//! Echo time: the first local maximum of `Γ_κ(t) = |γ_κ(t)|^2`.

use std::collections::BTreeMap;
use std::fmt;

use super::{check_unitarized, sample_measurements_at, DiagnosticsRecord, DiagnosticsSeries, MeasurementConfig, StateVector};
use crate::error::{Error, Result};
use crate::propagator::PropagatorMatrix;

/// First probe time.
pub const DEFAULT_T1: usize = 2;
/// Differences of exact `Γ` below this are treated as equal.
const EXACT_RESOLUTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoMode {
    /// `Γ` from the state vector.
    Exact,
    /// `Γ` from `cfg.samples` simulated measurements per component.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EchoOptions {
    pub t1: usize,
    pub mode: EchoMode,
}

impl Default for EchoOptions {
    fn default() -> Self {
        Self { t1: DEFAULT_T1, mode: EchoMode::Exact }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoVerdict {
    EchoFound,
    MonotoneWithinHorizon,
    Degenerate,
}

impl fmt::Display for EchoVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EchoVerdict::EchoFound => "echo_found",
            EchoVerdict::MonotoneWithinHorizon => "monotone_within_horizon",
            EchoVerdict::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoReport {
    pub t_c: Option<usize>,
    pub verdict: EchoVerdict,
    /// Every evaluated step, ordered by `t`.
    pub trace: DiagnosticsSeries,
    /// Steps in the order they were evaluated.
    pub probes: Vec<usize>,
    pub mode: EchoMode,
}

pub fn find_echo_time(u: &PropagatorMatrix, psi0: &StateVector, cfg: &MeasurementConfig, horizon: usize) -> Result<EchoReport> {
    find_echo_time_with(u, psi0, cfg, horizon, EchoOptions::default())
}

struct Prober<'a> {
    u: &'a PropagatorMatrix,
    cfg: &'a MeasurementConfig,
    mode: EchoMode,
    states: Vec<StateVector>,
    records: BTreeMap<usize, DiagnosticsRecord>,
    probes: Vec<usize>,
}

impl Prober<'_> {
    /// `(Γ, standard error)` at step `t`.
    fn gamma(&mut self, t: usize) -> Result<(f64, f64)> {
        if !self.records.contains_key(&t) {
            while self.states.len() <= t {
                let last = self.states.last().expect("initial state");
                let next = self.u.apply(&last.amplitudes)?;
                let basis = last.basis;
                self.states.push(StateVector { amplitudes: next, basis });
            }
            let psi = &self.states[t];
            let mut rec = DiagnosticsRecord::of(t, psi, self.cfg.kappa)?;
            if self.mode == EchoMode::Sampled {
                rec.sampled = Some(sample_measurements_at(psi, self.cfg, t as u64)?);
            }
            self.records.insert(t, rec);
            self.probes.push(t);
        }
        let rec = &self.records[&t];
        Ok(match &rec.sampled {
            Some(s) => (s.gamma_abs2, s.stderr_gamma_abs2),
            None => (rec.gamma_abs2, 0.0),
        })
    }

    /// Whether `Γ` falls significantly from `t` to `t + 1`.
    fn drops(&mut self, t: usize) -> Result<bool> {
        let (a, sa) = self.gamma(t)?;
        let (b, sb) = self.gamma(t + 1)?;
        Ok(a - b > threshold(sa, sb))
    }
}

fn threshold(sa: f64, sb: f64) -> f64 {
    (2.0 * (sa * sa + sb * sb).sqrt()).max(EXACT_RESOLUTION)
}

/// Locates the first local maximum of `Γ` within `0..=horizon`.
///
/// `Γ` is probed at `t1`, `t1 + 1` and `t1 - 1`. If it is still rising at
/// `t1` the search walks forward from there; if it already falls, the
/// search restarts at `t = 1`. A step counts as a maximum when `Γ` does not
/// fall into it and falls significantly out of it (by more than two
/// combined standard errors in sampled mode).
pub fn find_echo_time_with(
    u: &PropagatorMatrix,
    psi0: &StateVector,
    cfg: &MeasurementConfig,
    horizon: usize,
    options: EchoOptions,
) -> Result<EchoReport> {
    if horizon < 3 {
        return Err(Error::InvalidParameter { name: "horizon", reason: format!("need at least 3 steps, got {horizon}") });
    }
    check_unitarized(u, psi0)?;
    let mut p = Prober {
        u,
        cfg,
        mode: options.mode,
        states: vec![psi0.clone()],
        records: BTreeMap::new(),
        probes: Vec::new(),
    };
    let t1 = options.t1.clamp(1, horizon - 1);
    p.gamma(t1)?;
    p.gamma(t1 + 1)?;
    p.gamma(t1 - 1)?;

    let start = if p.drops(t1)? { 1 } else { t1 };
    let mut t_c = None;
    for t in start..horizon {
        if !p.drops(t - 1)? && p.drops(t)? {
            t_c = Some(t);
            break;
        }
    }

    let verdict = if t_c.is_some() {
        EchoVerdict::EchoFound
    } else {
        let steps: Vec<usize> = p.records.keys().copied().collect();
        let values = steps.iter().map(|&t| p.gamma(t)).collect::<Result<Vec<_>>>()?;
        let (lo, hi) = values.iter().fold((values[0], values[0]), |(lo, hi), v| {
            (if v.0 < lo.0 { *v } else { lo }, if v.0 > hi.0 { *v } else { hi })
        });
        if hi.0 - lo.0 <= threshold(lo.1, hi.1) {
            EchoVerdict::Degenerate
        } else {
            EchoVerdict::MonotoneWithinHorizon
        }
    };
    Ok(EchoReport {
        t_c,
        verdict,
        trace: DiagnosticsSeries { kappa: cfg.kappa, records: p.records.into_values().collect() },
        probes: p.probes,
        mode: options.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::tests::{cyclic_shift, identity_u, unit_basis};
    use crate::evolution::{init_state, InitSpec};
    use crate::propagator::{Stage, UnitarizationMethod};
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    #[test]
    fn identity_is_degenerate() {
        let psi = init_state(InitSpec::Gaussian { center: 0.3, sigma: 0.1 }, &unit_basis(60)).unwrap();
        let r = find_echo_time(&identity_u(60), &psi, &MeasurementConfig::default(), 10).unwrap();
        assert_eq!(r.verdict, EchoVerdict::Degenerate);
        assert_eq!(r.t_c, None);
        assert_eq!(&r.probes[..3], &[2, 3, 1]);
    }

    #[test]
    fn index_shift_never_echoes() {
        // a cyclic shift only rotates the phase of γ, so Γ stays put
        let psi = init_state(InitSpec::DeltaCell { center: 0.0 }, &unit_basis(40)).unwrap();
        let r = find_echo_time(&cyclic_shift(40, 1), &psi, &MeasurementConfig::default(), 12).unwrap();
        assert_ne!(r.verdict, EchoVerdict::EchoFound);
    }

    #[test]
    fn finds_first_maximum_of_a_rotation() {
        // rotation by θ between two cells, κ = 1, start in cell 1:
        // γ = p2 - p1 = -cos(2θt), so Γ = cos^2(2θt)
        let theta = std::f64::consts::PI / 16.0;
        let (c, s) = (theta.cos(), theta.sin());
        let r = |x: f64| Complex64::new(x, 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[r(c), r(-s), r(s), r(c)]);
        let basis = unit_basis(2);
        let u = PropagatorMatrix::new(m, Stage::Unitarized(UnitarizationMethod::GlobalPolar), basis, "rot").unwrap();
        let psi = init_state(InitSpec::DeltaCell { center: -0.5 }, &basis).unwrap();
        let cfg = MeasurementConfig { kappa: 1.0, ..Default::default() };
        // Γ(t) = cos^2(πt/8): falls until t = 4, first maximum at t = 8
        let rep = find_echo_time(&u, &psi, &cfg, 12).unwrap();
        assert_eq!(rep.verdict, EchoVerdict::EchoFound);
        assert_eq!(rep.t_c, Some(8));
        let short = find_echo_time(&u, &psi, &cfg, 7).unwrap();
        assert_eq!(short.verdict, EchoVerdict::MonotoneWithinHorizon);
    }

    #[test]
    fn rejects_short_horizon_and_raw_matrices() {
        let basis = unit_basis(4);
        let psi = init_state(InitSpec::Flat, &basis).unwrap();
        assert!(find_echo_time(&identity_u(4), &psi, &MeasurementConfig::default(), 2).is_err());
        let v = PropagatorMatrix::new(DMatrix::identity(4, 4), Stage::Truncated, basis, "v").unwrap();
        assert!(matches!(find_echo_time(&v, &psi, &MeasurementConfig::default(), 5), Err(Error::Stage { .. })));
    }
}
