//! Attractor search from a flat start.

use super::{find_echo_time, init_state, sample_cells, EchoReport, InitSpec, MeasurementConfig};
use crate::basis::Grid;
use crate::error::{Error, Result};
use crate::propagator::PropagatorMatrix;

/// Random-stream slot of the histogram draw; far from the per-step slots.
const HISTOGRAM_SLOT: u64 = 1 << 40;

/// Peak acceptance on a cell histogram of probabilities.
///
/// The histogram is smoothed with a centred moving average. A cell is a
/// candidate when it is a local maximum of the smoothed histogram and
/// exceeds both `background_multiple / N` and `relative` times the tallest
/// smoothed value. Candidates closer than `min_separation` cells to a
/// taller accepted one are dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakRule {
    pub background_multiple: f64,
    pub relative: f64,
    pub window: usize,
    pub min_separation: usize,
    /// The reported cell is the raw maximum within this many cells of the smoothed one.
    pub refine_radius: usize,
}

impl Default for PeakRule {
    fn default() -> Self {
        Self { background_multiple: 3.0, relative: 0.25, window: 5, min_separation: 5, refine_radius: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    /// 1-based cell index.
    pub cell: usize,
    pub location: f64,
    /// Raw histogram value at `cell`.
    pub height: f64,
    /// Full width at half maximum of the smoothed histogram, in domain units.
    pub fwhm: f64,
}

fn smooth(hist: &[f64], window: usize) -> Vec<f64> {
    let n = hist.len();
    let k = window / 2;
    (0..n)
        .map(|a| {
            let span = &hist[a.saturating_sub(k)..(a + k + 1).min(n)];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect()
}

/// Peaks of a probability histogram over the cells of `grid`.
pub fn find_peaks(hist: &[f64], grid: &Grid, rule: &PeakRule) -> Vec<Peak> {
    let n = hist.len();
    if n == 0 {
        return Vec::new();
    }
    let s = smooth(hist, rule.window.max(1));
    let tallest = s.iter().copied().fold(0.0, f64::max);
    let cut = (rule.background_multiple / n as f64).max(rule.relative * tallest);
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&a| s[a] >= cut && s[a] >= s[a.saturating_sub(1)] && s[a] >= s[(a + 1).min(n - 1)])
        .collect();
    candidates.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for a in candidates {
        if kept.iter().all(|&b| a.abs_diff(b) >= rule.min_separation) {
            kept.push(a);
        }
    }
    kept.sort_unstable();

    kept.into_iter()
        .map(|a| {
            let lo = a.saturating_sub(rule.refine_radius);
            let hi = (a + rule.refine_radius).min(n - 1);
            let raw = (lo..=hi).fold(lo, |best, c| if hist[c] > hist[best] { c } else { best });
            let half = 0.5 * s[a];
            let mut left = a;
            while left > 0 && s[left - 1] >= half {
                left -= 1;
            }
            let mut right = a;
            while right + 1 < n && s[right + 1] >= half {
                right += 1;
            }
            Peak {
                cell: raw + 1,
                location: grid.center_of(raw + 1),
                height: hist[raw],
                fwhm: (right - left + 1) as f64 * grid.dx,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorReport {
    /// Step at which the histogram was measured.
    pub t_eval: usize,
    pub echo: EchoReport,
    /// Measured cell frequencies at `t_eval`.
    pub histogram: Vec<f64>,
    pub peaks: Vec<Peak>,
}

/// Starts flat, evolves to the echo time (or the horizon when there is
/// none), measures `cfg.samples` positions and reports histogram peaks.
pub fn find_attractors(u: &PropagatorMatrix, cfg: &MeasurementConfig, horizon: usize) -> Result<AttractorReport> {
    let grid = u.basis().grid()?;
    let psi0 = init_state(InitSpec::Flat, u.basis())?;
    let echo = find_echo_time(u, &psi0, cfg, horizon)?;
    let t_eval = echo.t_c.unwrap_or(horizon);
    let mut psi = psi0;
    for _ in 0..t_eval {
        psi.amplitudes = u.apply(&psi.amplitudes)?;
    }
    if cfg.samples == 0 {
        return Err(Error::InvalidParameter { name: "samples", reason: "need at least one sample".into() });
    }
    let mut counts = vec![0usize; grid.n];
    for c in sample_cells(&psi, cfg.samples, cfg.seed, HISTOGRAM_SLOT) {
        counts[c] += 1;
    }
    let histogram: Vec<f64> = counts.iter().map(|&c| c as f64 / cfg.samples as f64).collect();
    let peaks = find_peaks(&histogram, &grid, &PeakRule::default());
    if peaks.is_empty() {
        return Err(Error::NoPeaks);
    }
    Ok(AttractorReport { t_eval, echo, histogram, peaks })
}
