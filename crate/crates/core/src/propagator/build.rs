//! Truncated transfer matrix `V_ab = ∫ sqrt|X'(x)| e_a*(X(x)) e_b(x) dx`.

use std::num::NonZeroUsize;
use std::thread;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{PropagatorMatrix, Stage};
use crate::basis::{BasisKind, BasisSpec, Grid};
use crate::error::{Error, Result};
use crate::map_model::{Interval, MapSpec, MONOTONE_SCAN_POINTS};
use crate::quadrature::GaussLegendre;

pub const DEFAULT_QUAD_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Gauss-Legendre nodes per sub-interval (spatial) or per wavelength (Fourier).
    pub quad_order: usize,
    /// Number of worker threads; the result does not depend on it.
    pub workers: NonZeroUsize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { quad_order: DEFAULT_QUAD_ORDER, workers: NonZeroUsize::MIN }
    }
}

impl BuildOptions {
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = NonZeroUsize::new(workers).unwrap_or(NonZeroUsize::MIN);
        self
    }
}

pub fn compute_truncated_matrix(map: &MapSpec, basis: &BasisSpec, options: BuildOptions) -> Result<PropagatorMatrix> {
    if options.quad_order < 8 {
        return Err(Error::InvalidParameter {
            name: "quad_order",
            reason: format!("need at least 8 nodes, got {}", options.quad_order),
        });
    }
    let md = map.domain();
    let bd = basis.domain();
    for x in [bd.lo, bd.hi] {
        if !md.contains(x) {
            return Err(Error::Domain { x, lo: md.lo, hi: md.hi });
        }
    }
    map.monotone_sign()?;

    let n = basis.dim();
    let rule = GaussLegendre::new(options.quad_order);
    let columns: Vec<Vec<Complex64>> = match basis.kind() {
        BasisKind::Spatial => {
            let grid = basis.grid()?;
            parallel_columns(n, options.workers, |b| spatial_column(map, &grid, &rule, b))?
        }
        BasisKind::Fourier => {
            let nodes = fourier_nodes(map, basis, &rule);
            parallel_columns(n, options.workers, |b| Ok(fourier_column(basis, &nodes, b)))?
        }
    };
    let entries = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
    PropagatorMatrix::new(entries, Stage::Truncated, *basis, map.name())
}

/// Evaluates `column(b)` for `b = 0..n` on `workers` threads over contiguous chunks.
fn parallel_columns<F>(n: usize, workers: NonZeroUsize, column: F) -> Result<Vec<Vec<Complex64>>>
where
    F: Fn(usize) -> Result<Vec<Complex64>> + Sync,
{
    let workers = workers.get().min(n);
    if workers <= 1 {
        return (0..n).map(&column).collect();
    }
    let chunk = n.div_ceil(workers);
    let column = &column;
    thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|start| scope.spawn(move || (start..(start + chunk).min(n)).map(column).collect::<Result<Vec<_>>>()))
            .collect();
        let mut out = Vec::with_capacity(n);
        for h in handles {
            out.extend(h.join().expect("column worker panicked")?);
        }
        Ok(out)
    })
}

/// Column `b` (0-based) of the spatial matrix.
///
/// The cell is split at the preimages of every cell edge its image crosses;
/// on each piece the integrand is `sqrt|X'| / dx` times a single indicator.
fn spatial_column(map: &MapSpec, grid: &Grid, rule: &GaussLegendre, b: usize) -> Result<Vec<Complex64>> {
    let n = grid.n;
    let (x0, x1) = (grid.edge(b), grid.edge(b + 1));
    let (y0, y1) = (map.forward_unchecked(x0), map.forward_unchecked(x1));
    let (ylo, yhi) = (y0.min(y1), y0.max(y1));
    let slack = 1e-12 * grid.dx;

    let mut cuts = vec![x0, x1];
    for k in 0..=n {
        let e = grid.edge(k);
        if e > ylo + slack && e < yhi - slack {
            cuts.push(map.solve_bracketed(e, x0, x1, 0.0));
        }
    }
    cuts.sort_by(f64::total_cmp);

    let domain = Interval { lo: grid.edge(0), hi: grid.edge(n) };
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for w in cuts.windows(2) {
        let (s, t) = (w[0], w[1]);
        if t <= s {
            continue;
        }
        let ym = map.forward_unchecked(0.5 * (s + t));
        if ym <= domain.lo || ym >= domain.hi {
            continue;
        }
        let a = grid.cell_of(ym);
        let integral = rule.integrate_adaptive(s, t, 1e-15 * (t - s), |x| map.jacobian_unchecked(x).abs().sqrt())?;
        col[a - 1].re += integral / grid.dx;
    }
    Ok(col)
}

struct FourierNode {
    x: f64,
    image: f64,
    weight: f64,
}

/// Composite rule with `quad_order` nodes per shortest wavelength of the integrand;
/// nodes whose image leaves the domain are dropped.
fn fourier_nodes(map: &MapSpec, basis: &BasisSpec, rule: &GaussLegendre) -> Vec<FourierNode> {
    let dom = basis.domain();
    let max_mode = (1..=basis.dim()).map(|a| basis.mode(a).abs()).fold(0.0, f64::max);
    let jmax = dom
        .linspace(MONOTONE_SCAN_POINTS - 1)
        .map(|x| map.jacobian_unchecked(x).abs())
        .fold(0.0, f64::max);
    let pieces = (max_mode * (1.0 + jmax)).ceil().max(1.0) as usize;

    let mut cuts: Vec<f64> = dom.linspace(pieces).collect();
    let image = map.image();
    for edge in [dom.lo, dom.hi] {
        if edge > image.lo && edge < image.hi {
            if let Ok(x) = map.invert_point(edge, 0.0) {
                cuts.push(x);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut nodes = Vec::with_capacity(cuts.len() * rule.order());
    for w in cuts.windows(2) {
        for (x, wt) in rule.mapped(w[0], w[1]) {
            let image = map.forward_unchecked(x);
            if image < dom.lo || image > dom.hi {
                continue;
            }
            nodes.push(FourierNode { x, image, weight: wt * map.jacobian_unchecked(x).abs().sqrt() });
        }
    }
    nodes
}

fn fourier_column(basis: &BasisSpec, nodes: &[FourierNode], b: usize) -> Vec<Complex64> {
    let n = basis.dim();
    let eb: Vec<Complex64> = nodes.iter().map(|q| basis.fourier_value(b + 1, q.x) * q.weight).collect();
    (1..=n)
        .map(|a| {
            nodes
                .iter()
                .zip(&eb)
                .fold(Complex64::new(0.0, 0.0), |acc, (q, w)| acc + basis.fourier_value(a, q.image).conj() * w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::PolynomialMap;

    fn spatial(n: usize) -> BasisSpec {
        BasisSpec::spatial(n, Interval::unit()).unwrap()
    }

    #[test]
    fn identity_gives_identity() {
        let v = compute_truncated_matrix(&MapSpec::identity(Interval::unit()), &spatial(50), BuildOptions::default()).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v.entries()[(i, j)].re - expected).abs() < 1e-14);
                assert_eq!(v.entries()[(i, j)].im, 0.0);
            }
        }
        assert_eq!(v.stage(), Stage::Truncated);
    }

    #[test]
    fn integer_shift_is_a_truncated_permutation() {
        let basis = spatial(40);
        let k = 3;
        let map = MapSpec::shift(k as f64 * basis.dx(), Interval::new(-1.0, 2.0).unwrap());
        let v = compute_truncated_matrix(&map, &basis, BuildOptions::default()).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let expected = if i == j + k { 1.0 } else { 0.0 };
                assert!((v.entries()[(i, j)].re - expected).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn rejects_low_order_and_non_monotone_maps() {
        let opts = BuildOptions { quad_order: 4, ..Default::default() };
        assert!(compute_truncated_matrix(&MapSpec::sample(), &spatial(10), opts).is_err());
        let cubic = MapSpec::polynomial(&[0.0, 1.3, 0.0, -1.2], Interval::unit()).unwrap();
        assert!(matches!(
            compute_truncated_matrix(&cubic, &spatial(10), BuildOptions::default()),
            Err(Error::NonMonotone { .. })
        ));
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let map = PolynomialMap::SAMPLE.to_map(Interval::unit());
        for basis in [spatial(64), BasisSpec::fourier(24, Interval::unit()).unwrap()] {
            let one = compute_truncated_matrix(&map, &basis, BuildOptions::default()).unwrap();
            let many = compute_truncated_matrix(&map, &basis, BuildOptions::default().with_workers(5)).unwrap();
            assert!(one.entries().iter().zip(many.entries().iter()).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
        }
    }

    #[test]
    fn fourier_identity_is_identity() {
        let basis = BasisSpec::fourier(32, Interval::unit()).unwrap();
        let v = compute_truncated_matrix(&MapSpec::identity(Interval::unit()), &basis, BuildOptions::default()).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v.entries()[(i, j)] - expected).norm() < 1e-12);
            }
        }
    }
}
