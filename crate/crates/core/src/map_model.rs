//! One-dimensional invertible maps and their classical reference dynamics.
//!
//! A [`MapSpec`] bundles the forward rule `X(x)`, its Jacobian `X'(x)`, an
//! optional closed-form inverse and the closed interval on which the map is
//! studied. Everything the unitary emulation is validated against (orbits,
//! density push-forward, fixed points) lives here.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A real function of one real variable, shareable across threads.
pub type Rule = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Points used by the Jacobian sign scan.
pub const MONOTONE_SCAN_POINTS: usize = 1000;
/// Points used when bracketing roots and preimages.
pub const BRACKET_SCAN_POINTS: usize = 2000;
/// Newton refinements allowed after bisection.
pub const MAX_NEWTON_STEPS: usize = 50;
/// Central finite-difference step for derivative checks.
pub const FD_STEP: f64 = 1e-6;
/// |J| below this is treated as singular.
pub const SINGULAR_JACOBIAN: f64 = 1e-14;

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter {
                name: "domain",
                reason: format!("need finite lo < hi, got [{lo}, {hi}]"),
            });
        }
        Ok(Self { lo, hi })
    }

    /// The symmetric interval `[-1, 1]`.
    pub const fn unit() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Membership with a relative slack of 1e-12 of the width at both ends.
    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * self.width();
        x >= self.lo - slack && x <= self.hi + slack
    }

    /// `n + 1` equally spaced points covering the interval.
    pub fn linspace(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let h = self.width() / n as f64;
        (0..=n).map(move |i| if i == n { self.hi } else { self.lo + h * i as f64 })
    }
}

/// A differentiable invertible map on a closed interval.
#[derive(Clone)]
pub struct MapSpec {
    name: String,
    forward: Rule,
    jacobian: Rule,
    inverse: Option<Rule>,
    domain: Interval,
}

impl fmt::Debug for MapSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("has_inverse", &self.inverse.is_some())
            .finish()
    }
}

impl MapSpec {
    pub fn new(
        name: impl Into<String>,
        domain: Interval,
        forward: impl Fn(f64) -> f64 + Send + Sync + 'static,
        jacobian: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            forward: Arc::new(forward),
            jacobian: Arc::new(jacobian),
            inverse: None,
            domain,
        }
    }

    /// Attaches a closed-form inverse, used by [`MapSpec::invert_point`].
    pub fn with_inverse(mut self, inverse: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn identity(domain: Interval) -> Self {
        Self::new("identity", domain, |x| x, |_| 1.0).with_inverse(|y| y)
    }

    /// `X(x) = slope * x + offset`.
    pub fn linear(slope: f64, offset: f64, domain: Interval) -> Self {
        Self::new(
            format!("linear({slope},{offset})"),
            domain,
            move |x| slope * x + offset,
            move |_| slope,
        )
        .with_inverse(move |y| (y - offset) / slope)
    }

    /// Translation by `shift`; an integer number of cells gives a permutation.
    pub fn shift(shift: f64, domain: Interval) -> Self {
        Self::linear(1.0, shift, domain).with_name(format!("shift({shift})"))
    }

    /// Polynomial with coefficients in ascending order, `c0 + c1 x + c2 x^2 + ...`.
    pub fn polynomial(coeffs: &[f64], domain: Interval) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParameter {
                name: "coefficients",
                reason: "empty coefficient list".into(),
            });
        }
        let c: Arc<[f64]> = coeffs.into();
        let d: Arc<[f64]> = coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, ck)| k as f64 * ck)
            .collect::<Vec<_>>()
            .into();
        let name = format!(
            "polynomial({})",
            coeffs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        );
        Ok(Self::new(name, domain, move |x| horner(&c, x), move |x| horner(&d, x)))
    }

    /// The quadratic sample map on `[-1, 1]` with its single attracting fixed point near -0.22.
    pub fn sample() -> Self {
        PolynomialMap::SAMPLE.to_map(Interval::unit()).with_name("sample_quadratic")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn has_inverse(&self) -> bool {
        self.inverse.is_some()
    }

    /// Raw forward rule without domain checks.
    pub fn forward_unchecked(&self, x: f64) -> f64 {
        (self.forward)(x)
    }

    /// Raw Jacobian without domain checks.
    pub fn jacobian_unchecked(&self, x: f64) -> f64 {
        (self.jacobian)(x)
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain { x, lo: self.domain.lo, hi: self.domain.hi })
        }
    }

    pub fn eval_forward(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok((self.forward)(x))
    }

    pub fn eval_jacobian(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let j = (self.jacobian)(x);
        if j.abs() < SINGULAR_JACOBIAN || !j.is_finite() {
            return Err(Error::SingularJacobian { x, value: j });
        }
        Ok(j)
    }

    /// Sign of the Jacobian on the domain, or [`Error::NonMonotone`] if it changes.
    pub fn monotone_sign(&self) -> Result<f64> {
        let mut sign = 0.0;
        for x in self.domain.linspace(MONOTONE_SCAN_POINTS - 1) {
            let j = (self.jacobian)(x);
            if j.abs() < SINGULAR_JACOBIAN || !j.is_finite() {
                return Err(Error::SingularJacobian { x, value: j });
            }
            let s = j.signum();
            if sign == 0.0 {
                sign = s;
            } else if s != sign {
                return Err(Error::NonMonotone { x });
            }
        }
        Ok(sign)
    }

    /// Image `X(domain)` of a monotone map.
    pub fn image(&self) -> Interval {
        let a = (self.forward)(self.domain.lo);
        let b = (self.forward)(self.domain.hi);
        Interval { lo: a.min(b), hi: a.max(b) }
    }

    /// Solves `X(x) = xbar` for `x` in the domain.
    ///
    /// Uses the closed-form inverse when one is attached; otherwise brackets
    /// the preimage on a uniform scan, bisects, and polishes with Newton steps.
    pub fn invert_point(&self, xbar: f64, tol: f64) -> Result<f64> {
        self.monotone_sign()?;
        let image = self.image();
        if !image.contains(xbar) {
            return Err(Error::NotInImage { y: xbar, lo: image.lo, hi: image.hi });
        }
        if let Some(inv) = &self.inverse {
            return Ok(inv(xbar).clamp(self.domain.lo, self.domain.hi));
        }
        let xbar = xbar.clamp(image.lo, image.hi);
        let grid: Vec<f64> = self.domain.linspace(BRACKET_SCAN_POINTS - 1).collect();
        let mut prev = (self.forward)(grid[0]) - xbar;
        if prev == 0.0 {
            return Ok(grid[0]);
        }
        for w in grid.windows(2) {
            let next = (self.forward)(w[1]) - xbar;
            if next == 0.0 {
                return Ok(w[1]);
            }
            if prev.signum() != next.signum() {
                return Ok(self.solve_bracketed(xbar, w[0], w[1], tol));
            }
            prev = next;
        }
        Err(Error::NotInImage { y: xbar, lo: image.lo, hi: image.hi })
    }

    /// Preimage of `y` inside a bracket `[lo, hi]` on which `X - y` changes sign.
    pub(crate) fn solve_bracketed(&self, y: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
        let f = |x: f64| (self.forward)(x) - y;
        let mut flo = f(lo);
        if flo == 0.0 {
            return lo;
        }
        if f(hi) == 0.0 {
            return hi;
        }
        // coarse bisection, then Newton with bisection fallback
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm == 0.0 {
                return mid;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..MAX_NEWTON_STEPS {
            let fx = f(x);
            if fx.abs() <= tol.max(f64::EPSILON * y.abs()) {
                return x;
            }
            if fx.signum() == flo.signum() {
                lo = x;
            } else {
                hi = x;
            }
            let step = fx / (self.jacobian)(x);
            let candidate = x - step;
            x = if candidate > lo && candidate < hi { candidate } else { 0.5 * (lo + hi) };
            if hi - lo <= f64::EPSILON * x.abs().max(1.0) {
                break;
            }
        }
        x
    }

    /// Roots of `X(x) = x` on the domain with their multipliers.
    pub fn find_fixed_points(&self, tol: f64) -> Result<Vec<FixedPointReport>> {
        let g = |x: f64| (self.forward)(x) - x;
        let grid: Vec<f64> = self.domain.linspace(BRACKET_SCAN_POINTS - 1).collect();
        let values: Vec<f64> = grid.iter().map(|&x| g(x)).collect();
        let scale = grid.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if values.iter().all(|v| v.abs() <= 1e-13 * scale) {
            return Err(Error::DegenerateMap);
        }

        let mut roots: Vec<f64> = Vec::new();
        for i in 0..grid.len() {
            if values[i] == 0.0 {
                roots.push(grid[i]);
                continue;
            }
            if i + 1 < grid.len() && values[i + 1] != 0.0 && values[i].signum() != values[i + 1].signum() {
                let (mut lo, mut hi) = (grid[i], grid[i + 1]);
                let mut glo = values[i];
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    let gm = g(mid);
                    if gm == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if gm.signum() == glo.signum() {
                        lo = mid;
                        glo = gm;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }

        let mut reports: Vec<FixedPointReport> = Vec::new();
        for x in roots {
            if reports.last().is_some_and(|r| (r.location - x).abs() < 10.0 * tol) {
                continue;
            }
            let multiplier = (self.jacobian)(x);
            reports.push(FixedPointReport {
                location: x,
                multiplier,
                classification: Stability::from_multiplier(multiplier),
            });
        }
        Ok(reports)
    }

    /// `[x0, X(x0), ..., X^steps(x0)]`.
    pub fn classical_orbit(&self, x0: f64, steps: usize) -> Result<Vec<f64>> {
        self.check_domain(x0)?;
        let mut orbit = Vec::with_capacity(steps + 1);
        orbit.push(x0);
        let mut x = x0;
        for step in 1..=steps {
            x = (self.forward)(x);
            if !self.domain.contains(x) || !x.is_finite() {
                return Err(Error::OrbitEscaped { step, x });
            }
            orbit.push(x);
        }
        Ok(orbit)
    }

    /// Push-forward of a cell-centred density: `F(X^-1(x)) / |J(X^-1(x))|`.
    ///
    /// Cells whose centres fall outside the image get zero.
    pub fn push_forward_density(&self, density: &GridFunction) -> Result<GridFunction> {
        self.monotone_sign()?;
        let image = self.image();
        let values = density
            .centers()
            .map(|x| {
                if !image.contains(x) {
                    return Ok(0.0);
                }
                let pre = self.invert_point(x, 1e-13)?;
                Ok(density.at(pre) / (self.jacobian)(pre).abs())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridFunction { domain: density.domain, values })
    }

    /// Pointwise density after `steps` push-forwards of `density`, inverting
    /// the map exactly at every step (no interpolation).
    pub fn push_forward_pointwise(
        &self,
        density: &dyn Fn(f64) -> f64,
        steps: usize,
        x: f64,
    ) -> Result<f64> {
        self.monotone_sign()?;
        let image = self.image();
        let mut y = x;
        let mut factor = 1.0;
        for _ in 0..steps {
            if !image.contains(y) {
                return Ok(0.0);
            }
            let pre = self.invert_point(y, 1e-14)?;
            factor /= (self.jacobian)(pre).abs();
            y = pre;
        }
        Ok(density(y) * factor)
    }

    /// Lift to the area-preserving map on `(x, p)`.
    pub fn extend_map(&self) -> Result<ExtendedMap> {
        self.monotone_sign()?;
        Ok(ExtendedMap { base: self.clone() })
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `X(x) = a x^2 + b x + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PolynomialMap {
    pub const SAMPLE: PolynomialMap = PolynomialMap { a: 0.25123, b: 0.60123, c: -0.10123 };

    /// Builds the map, with the inverse branch matching the Jacobian sign at the domain midpoint.
    pub fn to_map(&self, domain: Interval) -> MapSpec {
        let Self { a, b, c } = *self;
        let mid = 0.5 * (domain.lo + domain.hi);
        let s = (2.0 * a * mid + b).signum();
        MapSpec::new(
            format!("quadratic({a},{b},{c})"),
            domain,
            move |x| (a * x + b) * x + c,
            move |x| 2.0 * a * x + b,
        )
        .with_inverse(move |y| {
            if a == 0.0 {
                return (y - c) / b;
            }
            // 2(y - c) / (b + s sqrt(D)) avoids cancellation near the vertex-free branch
            let disc = (b * b - 4.0 * a * (c - y)).max(0.0);
            2.0 * (y - c) / (b + s * disc.sqrt())
        })
    }
}

/// `X(x) = x - eta * f'(x)`.
#[derive(Clone)]
pub struct GradientDescentMap {
    pub eta: f64,
    pub grad_f: Rule,
    pub grad2_f: Rule,
}

impl GradientDescentMap {
    pub fn new(
        eta: f64,
        grad_f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        grad2_f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { eta, grad_f: Arc::new(grad_f), grad2_f: Arc::new(grad2_f) }
    }

    /// `f(x) = (x^2 - 1/4)^2`, minima at +-0.5.
    pub fn double_well(eta: f64) -> Self {
        Self::new(eta, |x| 4.0 * x * (x * x - 0.25), |x| 12.0 * x * x - 1.0)
    }

    pub fn to_map(&self, name: impl Into<String>, domain: Interval) -> MapSpec {
        let (eta, g, h) = (self.eta, self.grad_f.clone(), self.grad2_f.clone());
        MapSpec::new(name, domain, move |x| x - eta * g(x), move |x| 1.0 - eta * h(x))
    }
}

/// Domain on which the double-well descent map with `eta = 0.3` stays monotone.
pub const DOUBLE_WELL_DOMAIN: Interval = Interval { lo: -0.55, hi: 0.55 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Attracting,
    Repelling,
    Marginal,
}

impl Stability {
    fn from_multiplier(lambda: f64) -> Self {
        let m = lambda.abs();
        if (m - 1.0).abs() <= 1e-12 {
            Stability::Marginal
        } else if m < 1.0 {
            Stability::Attracting
        } else {
            Stability::Repelling
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    pub location: f64,
    pub multiplier: f64,
    pub classification: Stability,
}

/// `(x, p) -> (X(x), p / J(x))`, whose Jacobian determinant is identically one.
#[derive(Debug, Clone)]
pub struct ExtendedMap {
    pub base: MapSpec,
}

impl ExtendedMap {
    pub fn apply(&self, x: f64, p: f64) -> Result<(f64, f64)> {
        let j = self.base.eval_jacobian(x)?;
        Ok((self.base.forward_unchecked(x), p / j))
    }

    /// 2x2 Jacobian `[[dxbar/dx, dxbar/dp], [dpbar/dx, dpbar/dp]]`.
    ///
    /// Diagonal entries are analytic; `dpbar/dx` is a central difference.
    pub fn jacobian_matrix(&self, x: f64, p: f64) -> Result<[[f64; 2]; 2]> {
        let j = self.base.eval_jacobian(x)?;
        let h = FD_STEP;
        let dom = self.base.domain();
        let (xl, xr) = ((x - h).max(dom.lo), (x + h).min(dom.hi));
        let dpdx = (p / self.base.jacobian_unchecked(xr) - p / self.base.jacobian_unchecked(xl)) / (xr - xl);
        Ok([[j, 0.0], [dpdx, 1.0 / j]])
    }

    pub fn determinant(&self, x: f64, p: f64) -> Result<f64> {
        let m = self.jacobian_matrix(x, p)?;
        Ok(m[0][0] * m[1][1] - m[0][1] * m[1][0])
    }
}

/// Cell-centred samples of a density on a uniform partition of an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub domain: Interval,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn from_fn(domain: Interval, cells: usize, f: impl Fn(f64) -> f64) -> Self {
        let dx = domain.width() / cells as f64;
        let values = (0..cells).map(|i| f(domain.lo + (i as f64 + 0.5) * dx)).collect();
        Self { domain, values }
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        self.domain.width() / self.values.len() as f64
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        let dx = self.dx();
        (0..self.cells()).map(move |i| self.domain.lo + (i as f64 + 0.5) * dx)
    }

    /// Linear interpolation between cell centres; flat in the outer half cells; zero outside.
    pub fn at(&self, x: f64) -> f64 {
        if !self.domain.contains(x) {
            return 0.0;
        }
        let n = self.cells();
        let u = (x - self.domain.lo) / self.dx() - 0.5;
        if u <= 0.0 {
            return self.values[0];
        }
        if u >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let i = u.floor() as usize;
        let w = u - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Midpoint-rule integral.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quadratic_fixed_point() -> f64 {
        // oracle: smaller root of A x^2 + (B - 1) x + C = 0
        let PolynomialMap { a, b, c } = PolynomialMap::SAMPLE;
        let bb = b - 1.0;
        (-bb - (bb * bb - 4.0 * a * c).sqrt()) / (2.0 * a)
    }

    #[test]
    fn forward_examples() {
        let id = MapSpec::identity(Interval::unit());
        assert_eq!(id.eval_forward(0.3).unwrap(), 0.3);
        assert_abs_diff_eq!(MapSpec::sample().eval_forward(0.5).unwrap(), 0.2621925, epsilon = 1e-15);
        let gd = GradientDescentMap::new(0.1, |x| 2.0 * x, |_| 2.0).to_map("gd", Interval::unit());
        assert_abs_diff_eq!(gd.eval_forward(1.0).unwrap(), 0.8, epsilon = 1e-15);
        assert!(matches!(MapSpec::sample().eval_forward(1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn jacobian_examples() {
        let id = MapSpec::identity(Interval::unit());
        assert_eq!(id.eval_jacobian(-0.7).unwrap(), 1.0);
        let m = MapSpec::sample();
        assert_abs_diff_eq!(m.eval_jacobian(0.0).unwrap(), 0.60123, epsilon = 1e-15);
        let xc = quadratic_fixed_point();
        assert_abs_diff_eq!(m.eval_jacobian(xc).unwrap(), 0.4894, epsilon = 1e-4);
        let flat = MapSpec::new("flat", Interval::unit(), |_| 0.0, |_| 0.0);
        assert!(matches!(flat.eval_jacobian(0.0), Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn inversion_examples() {
        let id = MapSpec::identity(Interval::unit());
        assert_eq!(id.invert_point(0.4, 1e-12).unwrap(), 0.4);

        let m = MapSpec::sample();
        assert_abs_diff_eq!(m.invert_point(0.2621925, 1e-12).unwrap(), 0.5, epsilon = 1e-9);

        // same map without the closed form goes through bisection + Newton
        let PolynomialMap { a, b, c } = PolynomialMap::SAMPLE;
        let numeric = MapSpec::polynomial(&[c, b, a], Interval::unit()).unwrap();
        assert!(!numeric.has_inverse());
        assert_abs_diff_eq!(numeric.invert_point(0.2621925, 1e-12).unwrap(), 0.5, epsilon = 1e-9);

        let lin = MapSpec::new("lin", Interval::new(-2.0, 2.0).unwrap(), |x| 0.5 * x + 0.1, |_| 0.5);
        assert_abs_diff_eq!(lin.invert_point(0.6, 1e-12).unwrap(), 1.0, epsilon = 1e-12);

        assert!(matches!(m.invert_point(0.9, 1e-12), Err(Error::NotInImage { .. })));
        let cubic = MapSpec::polynomial(&[0.0, 1.3, 0.0, -1.2], Interval::unit()).unwrap();
        assert!(matches!(cubic.invert_point(0.0, 1e-12), Err(Error::NonMonotone { .. })));
    }

    #[test]
    fn fixed_points_of_sample_map() {
        let reports = MapSpec::sample().find_fixed_points(1e-12).unwrap();
        assert_eq!(reports.len(), 1);
        let r = reports[0];
        assert_abs_diff_eq!(r.location, quadratic_fixed_point(), epsilon = 1e-10);
        assert_abs_diff_eq!(r.location, -0.2226, epsilon = 1e-4);
        assert_abs_diff_eq!(r.multiplier, 0.4894, epsilon = 1e-4);
        assert_eq!(r.classification, Stability::Attracting);
    }

    #[test]
    fn fixed_point_edge_cases() {
        let shifted = MapSpec::new("plus_one", Interval::unit(), |x| x + 1.0, |_| 1.0);
        assert!(shifted.find_fixed_points(1e-10).unwrap().is_empty());
        assert_eq!(
            MapSpec::identity(Interval::unit()).find_fixed_points(1e-10),
            Err(Error::DegenerateMap)
        );
        let dw = GradientDescentMap::double_well(0.3).to_map("dw", DOUBLE_WELL_DOMAIN);
        let fps = dw.find_fixed_points(1e-12).unwrap();
        let locs: Vec<f64> = fps.iter().map(|r| r.location).collect();
        assert_eq!(locs.len(), 3);
        assert_abs_diff_eq!(locs[0], -0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(locs[1], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(locs[2], 0.5, epsilon = 1e-10);
        assert_eq!(fps[0].classification, Stability::Attracting);
        assert_eq!(fps[1].classification, Stability::Repelling);
        assert_abs_diff_eq!(fps[2].multiplier, 0.4, epsilon = 1e-9);
    }

    #[test]
    fn orbits() {
        let id = MapSpec::identity(Interval::unit());
        assert!(id.classical_orbit(0.2, 5).unwrap().iter().all(|&x| x == 0.2));
        let m = MapSpec::sample();
        let o = m.classical_orbit(0.5, 1).unwrap();
        assert_eq!(o.len(), 2);
        assert_abs_diff_eq!(o[1], 0.2621925, epsilon = 1e-15);
        let long = m.classical_orbit(0.5, 30).unwrap();
        assert!((long[30] - quadratic_fixed_point()).abs() < 1e-6);

        let escaping = MapSpec::new("plus_half", Interval::unit(), |x| x + 0.5, |_| 1.0);
        assert_eq!(
            escaping.classical_orbit(0.0, 5),
            Err(Error::OrbitEscaped { step: 3, x: 1.5 })
        );
    }

    #[test]
    fn orbit_converges_monotonically_near_attractor() {
        let xc = quadratic_fixed_point();
        let orbit = MapSpec::sample().classical_orbit(0.5, 40).unwrap();
        let dist: Vec<f64> = orbit.iter().map(|x| (x - xc).abs()).collect();
        let start = dist.iter().position(|&d| d < 0.1).unwrap();
        assert!(dist[start..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn push_forward_identity_and_halving() {
        let dom = Interval::unit();
        let f = GridFunction::from_fn(dom, 200, |x| (-(x * x) / 0.02).exp());
        let same = MapSpec::identity(dom).push_forward_density(&f).unwrap();
        for (a, b) in same.values.iter().zip(&f.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }

        let flat = GridFunction::from_fn(dom, 200, |_| 0.5);
        let half = MapSpec::linear(0.5, 0.0, dom).push_forward_density(&flat).unwrap();
        for (x, v) in half.centers().zip(&half.values) {
            let expected = if x.abs() < 0.5 { 2.0 * 0.5 } else { 0.0 };
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn push_forward_conserves_mass_for_sample_map() {
        let dom = Interval::unit();
        let f = GridFunction::from_fn(dom, 400, |x| (-(x - 0.2) * (x - 0.2) / (2.0 * 0.1 * 0.1)).exp());
        let g = MapSpec::sample().push_forward_density(&f).unwrap();
        // Riemann-sum oracle on both sides
        assert!((g.mass() / f.mass() - 1.0).abs() < 0.01);
    }

    #[test]
    fn pointwise_push_forward_matches_grid_version_once() {
        let dom = Interval::unit();
        let rho = |x: f64| (-(x - 0.5) * (x - 0.5) / 0.005).exp();
        let m = MapSpec::sample();
        let grid = m.push_forward_density(&GridFunction::from_fn(dom, 2000, rho)).unwrap();
        for x in [0.1, 0.2621925, 0.3] {
            let exact = m.push_forward_pointwise(&rho, 1, x).unwrap();
            assert_abs_diff_eq!(exact, grid.at(x), epsilon = 2e-3);
        }
    }

    #[test]
    fn extended_map_examples() {
        let dom = Interval::unit();
        let e = MapSpec::identity(dom).extend_map().unwrap();
        assert_eq!(e.apply(0.3, 0.7).unwrap(), (0.3, 0.7));
        assert_abs_diff_eq!(e.determinant(0.3, 0.7).unwrap(), 1.0, epsilon = 1e-15);

        let d = MapSpec::linear(2.0, 0.0, dom).extend_map().unwrap();
        assert_eq!(d.apply(0.25, 1.0).unwrap(), (0.5, 0.5));
        assert_abs_diff_eq!(d.determinant(0.25, 1.0).unwrap(), 1.0, epsilon = 1e-15);

        let flat = MapSpec::new("flat", dom, |_| 0.0, |_| 0.0);
        assert!(matches!(flat.extend_map(), Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn grid_function_interpolation() {
        let g = GridFunction { domain: Interval::unit(), values: vec![1.0, 3.0] };
        assert_eq!(g.at(-0.5), 1.0);
        assert_eq!(g.at(0.0), 2.0);
        assert_eq!(g.at(0.9), 3.0);
        assert_eq!(g.at(1.5), 0.0);
        assert_eq!(g.mass(), 4.0);
    }
}
