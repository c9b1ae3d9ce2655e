//! Born-rule measurement emulation.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{spatial_weights, StateVector, DEFAULT_KAPPA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementConfig {
    /// Draws per estimated quantity.
    pub samples: usize,
    pub seed: u64,
    pub kappa: f64,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self { samples: 10_000, seed: 0, kappa: DEFAULT_KAPPA }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledEstimates {
    pub samples: usize,
    pub mean_x: f64,
    pub stderr_mean_x: f64,
    /// Real part from a cosine batch, imaginary part from an independent sine batch.
    pub gamma: Complex64,
    pub stderr_gamma_re: f64,
    pub stderr_gamma_im: f64,
    /// `|γ|^2` of the estimate.
    pub gamma_abs2: f64,
    /// First-order propagated error of `gamma_abs2`.
    pub stderr_gamma_abs2: f64,
}

/// Draws `count` 0-based cell indices with probability `|psi_a|^2` by
/// inverse transform on the cumulative distribution.
pub fn sample_cells(psi: &StateVector, count: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut cum = Vec::with_capacity(psi.amplitudes.len());
    let mut acc = 0.0;
    for z in psi.amplitudes.iter() {
        acc += z.norm_sqr();
        cum.push(acc);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let last = cum.len().saturating_sub(1);
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cum.partition_point(|&c| c <= u).min(last)
        })
        .collect()
}

/// Mean and standard error of `values[a]` over the drawn cells.
///
/// Accumulating per-cell frequencies keeps single-cell states exact.
fn estimate(cells: &[usize], values: impl Fn(usize) -> f64, n: usize) -> (f64, f64) {
    let m = cells.len() as f64;
    let mut counts = vec![0usize; n];
    for &c in cells {
        counts[c] += 1;
    }
    let freq = || counts.iter().enumerate().filter(|(_, c)| **c > 0).map(|(a, c)| (a, *c as f64 / m));
    let mean: f64 = freq().map(|(a, f)| f * values(a)).sum();
    if cells.len() < 2 {
        return (mean, 0.0);
    }
    let var: f64 = freq().map(|(a, f)| f * (values(a) - mean).powi(2)).sum::<f64>() * m / (m - 1.0);
    (mean, (var / m).sqrt())
}

pub fn sample_measurements(psi: &StateVector, cfg: &MeasurementConfig) -> Result<SampledEstimates> {
    sample_measurements_at(psi, cfg, 0)
}

/// Sampled estimates on random streams derived from `slot`; distinct slots
/// give independent draws for the same seed.
pub fn sample_measurements_at(psi: &StateVector, cfg: &MeasurementConfig, slot: u64) -> Result<SampledEstimates> {
    if cfg.samples == 0 {
        return Err(Error::InvalidParameter { name: "samples", reason: "need at least one sample".into() });
    }
    let (grid, _) = spatial_weights(psi)?;
    let n = grid.n;
    let phase = |a: usize| std::f64::consts::PI * cfg.kappa * (a + 1) as f64;
    let batch = |k: u64| sample_cells(psi, cfg.samples, cfg.seed, 3 * slot + k);

    let (mean_x, stderr_mean_x) = estimate(&batch(0), |a| grid.center_of(a + 1), n);
    let (re, se_re) = estimate(&batch(1), |a| phase(a).cos(), n);
    let (im, se_im) = estimate(&batch(2), |a| phase(a).sin(), n);
    let gamma_abs2 = re * re + im * im;
    let stderr_gamma_abs2 = 2.0 * ((re * se_re).powi(2) + (im * se_im).powi(2)).sqrt();
    Ok(SampledEstimates {
        samples: cfg.samples,
        mean_x,
        stderr_mean_x,
        gamma: Complex64::new(re, im),
        stderr_gamma_re: se_re,
        stderr_gamma_im: se_im,
        gamma_abs2,
        stderr_gamma_abs2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::tests::unit_basis;
    use crate::evolution::{init_state, InitSpec};

    #[test]
    fn delta_state_is_measured_exactly() {
        let b = unit_basis(200);
        let psi = init_state(InitSpec::DeltaCell { center: 0.37 }, &b).unwrap();
        let x = b.grid().unwrap().center_of(b.grid().unwrap().cell_of(0.37));
        for m in [1, 7, 1000] {
            let est = sample_measurements(&psi, &MeasurementConfig { samples: m, seed: 9, kappa: 0.1 }).unwrap();
            assert_eq!(est.mean_x, x);
            assert_eq!(est.stderr_mean_x, 0.0);
        }
    }

    #[test]
    fn flat_mean_within_clt_bound() {
        let b = unit_basis(200);
        let psi = init_state(InitSpec::Flat, &b).unwrap();
        let m = 100_000;
        let est = sample_measurements(&psi, &MeasurementConfig { samples: m, seed: 42, kappa: 0.1 }).unwrap();
        assert!(est.mean_x.abs() <= 3.0 / 3f64.sqrt() / (m as f64).sqrt());
    }

    #[test]
    fn same_seed_same_bits() {
        let b = unit_basis(64);
        let psi = init_state(InitSpec::Gaussian { center: -0.1, sigma: 0.2 }, &b).unwrap();
        let cfg = MeasurementConfig { samples: 5000, seed: 1234, kappa: 0.1 };
        assert_eq!(sample_measurements(&psi, &cfg).unwrap(), sample_measurements(&psi, &cfg).unwrap());
        let other = sample_measurements_at(&psi, &cfg, 1).unwrap();
        assert_ne!(other.mean_x, sample_measurements(&psi, &cfg).unwrap().mean_x);
    }

    #[test]
    fn zero_probability_cells_are_never_drawn() {
        let b = unit_basis(10);
        let mut psi = init_state(InitSpec::Flat, &b).unwrap();
        for a in [0, 3, 4, 9] {
            psi.amplitudes[a] = Complex64::new(0.0, 0.0);
        }
        let cells = sample_cells(&psi, 20_000, 5, 0);
        assert!(cells.iter().all(|c| ![0, 3, 4, 9].contains(c)));
    }

    #[test]
    fn zero_samples_rejected() {
        let psi = init_state(InitSpec::Flat, &unit_basis(8)).unwrap();
        assert!(sample_measurements(&psi, &MeasurementConfig { samples: 0, ..Default::default() }).is_err());
    }
}
