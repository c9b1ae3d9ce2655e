//! Gauss-Legendre rules and an adaptive bisection driver.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Hard cap on sub-intervals for [`GaussLegendre::integrate_adaptive`].
pub const MAX_SUBINTERVALS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes and weights on `[-1, 1]`, found by Newton iteration on `P_n`
    /// from Chebyshev initial guesses.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(&t, &w)| (mid + half * t, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Bisects `[a, b]` until the rule on each piece agrees with the sum over
    /// its two halves to `tol` (scaled by the piece length).
    pub fn integrate_adaptive(&self, a: f64, b: f64, tol: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let total_len = (b - a).abs();
        let mut stack = vec![(a, b, self.integrate(a, b, &f))];
        let mut pieces = 1usize;
        let mut sum = 0.0;
        while let Some((lo, hi, whole)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            let left = self.integrate(lo, mid, &f);
            let right = self.integrate(mid, hi, &f);
            let local_tol = (tol * (hi - lo).abs() / total_len).max(4.0 * f64::EPSILON * whole.abs());
            if (left + right - whole).abs() <= local_tol {
                sum += left + right;
                continue;
            }
            pieces += 1;
            if pieces > MAX_SUBINTERVALS {
                return Err(Error::Quadrature { a, b, limit: MAX_SUBINTERVALS });
            }
            stack.push((mid, hi, right));
            stack.push((lo, mid, left));
        }
        Ok(sum)
    }
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}
