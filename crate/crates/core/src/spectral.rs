//! Cyclic Fourier analysis and synthesis on point grids over `[-π, π)`.
//!
//! On the standard odd grid `θ_l = (2l − n − 1)π/n`, `l = 1..=n`, the
//! Riemann-sum coefficients of any trigonometric polynomial of order at most
//! `(n − 1)/2` coincide with its true Fourier coefficients, so analysis and
//! synthesis are exact inverses there. Other strictly increasing grids are
//! accepted by [`analyze`] through a general cyclic Riemann sum, with a
//! warning, but lose that guarantee.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

/// Grids larger than this use compensated summation.
const COMPENSATED_THRESHOLD: usize = 10_000;

/// Reduces an angle to `[-π, π)`. Angles already in range are returned as is.
pub fn wrap_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let r = (theta + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// Sample locations on the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    theta: Vec<f64>,
    /// Riemann weights (summing to one) for non-standard grids.
    weights: Option<Vec<f64>>,
}

impl Grid {
    /// The standard grid with `n` points; `n` must be odd and at least 3.
    pub fn standard(n: usize) -> Result<Grid> {
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::InvalidGridSize(n));
        }
        let theta = (1..=n)
            .map(|l| (2.0 * l as f64 - n as f64 - 1.0) * PI / n as f64)
            .collect();
        Ok(Grid {
            theta,
            weights: None,
        })
    }

    /// An explicit grid. It must hold at least three strictly increasing,
    /// finite angles spanning less than one full turn. A grid that matches
    /// the standard odd grid to 1e-12 is treated as standard; anything else
    /// is accepted with a warning and uses cyclic trapezoid weights.
    pub fn explicit(theta: Vec<f64>) -> Result<Grid> {
        let n = theta.len();
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 angles, got {n}")));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("grid angles".into()));
        }
        if theta.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("angles must be strictly increasing".into()));
        }
        let span = theta[n - 1] - theta[0];
        if span >= TAU {
            return Err(Error::InvalidGrid(format!(
                "angles span {span} which is not less than 2π"
            )));
        }
        if n % 2 == 1 {
            let std = Grid::standard(n)?;
            if std
                .theta
                .iter()
                .zip(&theta)
                .all(|(a, b)| (a - b).abs() <= 1e-12)
            {
                return Ok(std);
            }
        }
        log::warn!(
            "non-standard grid with {n} points: Fourier coefficients are approximate \
             and trigonometric interpolation is unavailable"
        );
        let weights = (0..n)
            .map(|l| {
                let prev = if l == 0 { theta[n - 1] - TAU } else { theta[l - 1] };
                let next = if l == n - 1 { theta[0] + TAU } else { theta[l + 1] };
                (next - prev) / (2.0 * TAU)
            })
            .collect();
        Ok(Grid {
            theta,
            weights: Some(weights),
        })
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Whether this is the standard odd grid.
    pub fn is_standard(&self) -> bool {
        self.weights.is_none()
    }

    /// Largest order `(n − 1)/2` for which coefficients are identifiable.
    pub fn max_order(&self) -> usize {
        (self.n() - 1) / 2
    }
}

/// One observed contour: a point per grid location.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSamples {
    pub grid: Grid,
    pub points: Vec<Vec2>,
}

impl ContourSamples {
    pub fn new(grid: Grid, points: Vec<Vec2>) -> Result<Self> {
        if points.len() != grid.n() {
            return Err(Error::LengthMismatch {
                index: 0,
                expected: grid.n(),
                got: points.len(),
            });
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("contour coordinates".into()));
        }
        Ok(ContourSamples { grid, points })
    }
}

/// Vector-valued cosine/sine coefficients up to some order `J`.
///
/// `mu` holds `μ_0..=μ_J`, `nu` holds `ν_1..=ν_J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoeffsRepr", into = "CoeffsRepr")]
pub struct FourierCoeffs {
    mu: Vec<Vec2>,
    nu: Vec<Vec2>,
}

#[derive(Serialize, Deserialize)]
struct CoeffsRepr {
    order: usize,
    mu: Vec<Vec2>,
    nu: Vec<Vec2>,
}

impl TryFrom<CoeffsRepr> for FourierCoeffs {
    type Error = Error;
    fn try_from(r: CoeffsRepr) -> Result<Self> {
        let c = FourierCoeffs::new(r.mu, r.nu)?;
        if c.order() != r.order {
            return Err(Error::InvalidCoefficients(format!(
                "declared order {} but {} cosine terms",
                r.order,
                c.mu.len()
            )));
        }
        Ok(c)
    }
}

impl From<FourierCoeffs> for CoeffsRepr {
    fn from(c: FourierCoeffs) -> Self {
        CoeffsRepr {
            order: c.order(),
            mu: c.mu,
            nu: c.nu,
        }
    }
}

impl FourierCoeffs {
    pub fn new(mu: Vec<Vec2>, nu: Vec<Vec2>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidCoefficients("mu must hold at least μ_0".into()));
        }
        if nu.len() + 1 != mu.len() {
            return Err(Error::InvalidCoefficients(format!(
                "expected {} sine terms for {} cosine terms, got {}",
                mu.len() - 1,
                mu.len(),
                nu.len()
            )));
        }
        if mu.iter().chain(&nu).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Fourier coefficients".into()));
        }
        Ok(FourierCoeffs { mu, nu })
    }

    pub fn zeros(order: usize) -> Self {
        FourierCoeffs {
            mu: vec![Vec2::ZERO; order + 1],
            nu: vec![Vec2::ZERO; order],
        }
    }

    pub fn order(&self) -> usize {
        self.nu.len()
    }

    /// `μ_j`, or zero beyond the stored order.
    pub fn mu(&self, j: usize) -> Vec2 {
        self.mu.get(j).copied().unwrap_or(Vec2::ZERO)
    }

    /// `ν_j`, or zero for `j = 0` and beyond the stored order.
    pub fn nu(&self, j: usize) -> Vec2 {
        if j == 0 {
            Vec2::ZERO
        } else {
            self.nu.get(j - 1).copied().unwrap_or(Vec2::ZERO)
        }
    }

    pub fn set_mu(&mut self, j: usize, v: Vec2) {
        self.mu[j] = v;
    }

    /// Panics for `j = 0`, which has no sine term.
    pub fn set_nu(&mut self, j: usize, v: Vec2) {
        self.nu[j - 1] = v;
    }

    pub fn mu_slice(&self) -> &[Vec2] {
        &self.mu
    }

    pub fn nu_slice(&self) -> &[Vec2] {
        &self.nu
    }

    /// Copy truncated or zero-padded to `order`.
    pub fn with_order(&self, order: usize) -> FourierCoeffs {
        let mut out = FourierCoeffs::zeros(order);
        for j in 0..=order.min(self.order()) {
            out.mu[j] = self.mu[j];
            if j > 0 {
                out.nu[j - 1] = self.nu[j - 1];
            }
        }
        out
    }

    /// Componentwise `f(a, b)` over the longer of the two orders.
    pub fn zip_with(&self, other: &FourierCoeffs, f: impl Fn(Vec2, Vec2) -> Vec2) -> FourierCoeffs {
        let order = self.order().max(other.order());
        FourierCoeffs {
            mu: (0..=order).map(|j| f(self.mu(j), other.mu(j))).collect(),
            nu: (1..=order).map(|j| f(self.nu(j), other.nu(j))).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> FourierCoeffs {
        FourierCoeffs {
            mu: self.mu.iter().map(|&v| v * s).collect(),
            nu: self.nu.iter().map(|&v| v * s).collect(),
        }
    }

    /// Squared norm of the order-`j` pair: `‖μ_j‖² + ‖ν_j‖²`.
    pub fn power(&self, j: usize) -> f64 {
        self.mu(j).norm_sq() + self.nu(j).norm_sq()
    }
}

/// Neumaier-compensated accumulator.
#[derive(Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Sums `terms` in iteration order, compensated when `compensated` is set.
fn ordered_sum(terms: impl Iterator<Item = Vec2>, compensated: bool) -> Vec2 {
    if compensated {
        let (mut x, mut y) = (Compensated::default(), Compensated::default());
        for v in terms {
            x.add(v.x);
            y.add(v.y);
        }
        Vec2::new(x.value(), y.value())
    } else {
        terms.sum()
    }
}

/// Precomputed cosine/sine tables for repeated analysis on one grid.
#[derive(Debug, Clone)]
pub struct Analyzer {
    n: usize,
    order: usize,
    weights: Option<Vec<f64>>,
    /// Row `j − 1` holds `cos(jθ_l)` for all `l`.
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Analyzer {
    /// Tables up to `order`, truncated with a warning to `(n − 1)/2`.
    pub fn new(grid: &Grid, order: usize) -> Analyzer {
        let max = grid.max_order();
        let order = if order > max {
            log::warn!(
                "requested order {order} exceeds (n-1)/2 = {max} for n = {}; truncating",
                grid.n()
            );
            max
        } else {
            order
        };
        let n = grid.n();
        let mut cos = Vec::with_capacity(order * n);
        let mut sin = Vec::with_capacity(order * n);
        for j in 1..=order {
            for &t in grid.theta() {
                let (s, c) = (j as f64 * t).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Analyzer {
            n,
            order,
            weights: grid.weights.clone(),
            cos,
            sin,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Riemann-sum coefficients `F_0 = (1/n)ΣX^l`, `F_j = (2/n)ΣX^l cos(jθ_l)`,
    /// `G_j = (2/n)ΣX^l sin(jθ_l)`; panics if `points` has the wrong length.
    pub fn analyze(&self, points: &[Vec2]) -> FourierCoeffs {
        assert_eq!(points.len(), self.n, "point count does not match grid");
        let n = self.n;
        let compensated = n > COMPENSATED_THRESHOLD;
        let weighted = |basis: Option<&[f64]>| -> Vec2 {
            match (&self.weights, basis) {
                (None, None) => ordered_sum(points.iter().copied(), compensated) / n as f64,
                (None, Some(b)) => {
                    ordered_sum(points.iter().zip(b).map(|(&p, &c)| p * c), compensated)
                        * (2.0 / n as f64)
                }
                (Some(w), None) => {
                    ordered_sum(points.iter().zip(w).map(|(&p, &wl)| p * wl), compensated)
                }
                (Some(w), Some(b)) => {
                    ordered_sum(
                        points.iter().zip(w).zip(b).map(|((&p, &wl), &c)| p * (wl * c)),
                        compensated,
                    ) * 2.0
                }
            }
        };
        let mut mu = Vec::with_capacity(self.order + 1);
        let mut nu = Vec::with_capacity(self.order);
        mu.push(weighted(None));
        for j in 1..=self.order {
            let row = (j - 1) * n..j * n;
            mu.push(weighted(Some(&self.cos[row.clone()])));
            nu.push(weighted(Some(&self.sin[row])));
        }
        FourierCoeffs { mu, nu }
    }
}

/// Riemann-sum Fourier coefficients of `samples` up to order `order`.
///
/// Orders above `(n − 1)/2` are truncated with a logged warning.
pub fn analyze(samples: &ContourSamples, order: usize) -> FourierCoeffs {
    Analyzer::new(&samples.grid, order).analyze(&samples.points)
}

/// `μ_0 + Σ_j [μ_j cos(jθ) + ν_j sin(jθ)]`.
pub fn synthesize(coeffs: &FourierCoeffs, theta: f64) -> Vec2 {
    let theta = wrap_angle(theta);
    let mut acc = coeffs.mu[0];
    for j in 1..=coeffs.order() {
        let (s, c) = (j as f64 * theta).sin_cos();
        acc += coeffs.mu[j] * c + coeffs.nu[j - 1] * s;
    }
    acc
}

/// `d/dθ` of [`synthesize`]: `Σ_j j[−μ_j sin(jθ) + ν_j cos(jθ)]`.
pub fn synthesize_deriv(coeffs: &FourierCoeffs, theta: f64) -> Vec2 {
    let theta = wrap_angle(theta);
    let mut acc = Vec2::ZERO;
    for j in 1..=coeffs.order() {
        let (s, c) = (j as f64 * theta).sin_cos();
        acc += (coeffs.nu[j - 1] * c - coeffs.mu[j] * s) * j as f64;
    }
    acc
}

/// Dirichlet-type smoother `S_l(θ) = 1/n + (2/n) Σ_{j=1}^{J} cos(j(θ − θ_l))`.
///
/// `l` is zero-based.
pub fn smoother_weight(grid: &Grid, l: usize, order: usize, theta: f64) -> f64 {
    let n = grid.n() as f64;
    let d = theta - grid.theta[l];
    let s: f64 = (1..=order).map(|j| (j as f64 * d).cos()).sum();
    1.0 / n + 2.0 * s / n
}

/// Row-major `n × n` matrix with entry `[l][k] = S_k(θ_l)`.
pub fn smoother_matrix(grid: &Grid, order: usize) -> Vec<f64> {
    let n = grid.n();
    let mut out = Vec::with_capacity(n * n);
    for l in 0..n {
        for k in 0..n {
            out.push(smoother_weight(grid, k, order, grid.theta[l]));
        }
    }
    out
}

/// The unique order-`(n − 1)/2` trigonometric polynomial through a contour
/// sampled on the standard odd grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigInterpolant {
    coeffs: FourierCoeffs,
}

impl TrigInterpolant {
    pub fn new(samples: &ContourSamples) -> Result<Self> {
        Self::from_points(&samples.grid, &samples.points)
    }

    pub fn from_points(grid: &Grid, points: &[Vec2]) -> Result<Self> {
        if !grid.is_standard() {
            return Err(Error::NonStandardGrid);
        }
        if points.len() != grid.n() {
            return Err(Error::LengthMismatch {
                index: 0,
                expected: grid.n(),
                got: points.len(),
            });
        }
        let coeffs = Analyzer::new(grid, grid.max_order()).analyze(points);
        Ok(TrigInterpolant { coeffs })
    }

    pub fn coeffs(&self) -> &FourierCoeffs {
        &self.coeffs
    }

    pub fn eval(&self, theta: f64) -> Vec2 {
        synthesize(&self.coeffs, theta)
    }

    pub fn deriv(&self, theta: f64) -> Vec2 {
        synthesize_deriv(&self.coeffs, theta)
    }
}

/// Value of the trigonometric interpolant of `samples` at `theta`.
pub fn trig_interpolate(samples: &ContourSamples, theta: f64) -> Result<Vec2> {
    Ok(TrigInterpolant::new(samples)?.eval(theta))
}

/// Derivative of the trigonometric interpolant of `samples` at `theta`.
pub fn trig_interpolate_deriv(samples: &ContourSamples, theta: f64) -> Result<Vec2> {
    Ok(TrigInterpolant::new(samples)?.deriv(theta))
}

/// `(1/π)∫‖a(θ) − b(θ)‖² dθ` evaluated through Parseval's identity:
/// `2‖Δμ_0‖² + Σ_j (‖Δμ_j‖² + ‖Δν_j‖²)`. The shorter list is zero-padded.
pub fn parseval_distance(a: &FourierCoeffs, b: &FourierCoeffs) -> f64 {
    let order = a.order().max(b.order());
    let head = 2.0 * (a.mu(0) - b.mu(0)).norm_sq();
    (1..=order).fold(head, |acc, j| {
        acc + (a.mu(j) - b.mu(j)).norm_sq() + (a.nu(j) - b.nu(j)).norm_sq()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn circle(grid: &Grid) -> ContourSamples {
        let pts = grid.theta().iter().map(|&t| Vec2::new(t.cos(), t.sin())).collect();
        ContourSamples::new(grid.clone(), pts).unwrap()
    }

    #[test]
    fn standard_grid_values() {
        let g = Grid::standard(3).unwrap();
        assert_abs_diff_eq!(g.theta()[0], -2.0 * PI / 3.0, epsilon = 1e-15);
        assert_eq!(g.theta()[1], 0.0);
        assert_abs_diff_eq!(g.theta()[2], 2.0 * PI / 3.0, epsilon = 1e-15);

        let g5 = Grid::standard(5).unwrap();
        assert_abs_diff_eq!(g5.theta()[0], -4.0 * PI / 5.0, epsilon = 1e-15);
        for w in g5.theta().windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], TAU / 5.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn even_or_small_grid_is_rejected() {
        for n in [0, 1, 2, 4, 126] {
            let err = Grid::standard(n).unwrap_err();
            assert!(matches!(err, Error::InvalidGridSize(m) if m == n));
            assert!(err.to_string().contains("odd"));
        }
    }

    #[test]
    fn explicit_grid_detects_standard() {
        let std = Grid::standard(7).unwrap();
        let g = Grid::explicit(std.theta().to_vec()).unwrap();
        assert!(g.is_standard());
        let uneven: Vec<f64> = (0..126).map(|l| -PI + l as f64 / 20.0).collect();
        let g = Grid::explicit(uneven).unwrap();
        assert!(!g.is_standard());
        let total: f64 = g.weights.as_ref().unwrap().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert!(Grid::explicit(vec![0.0, 1.0, 1.0]).is_err());
        assert!(Grid::explicit(vec![-3.2, 0.0, 3.2]).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(0.3), 0.3);
        assert_abs_diff_eq!(wrap_angle(0.3 + 4.0 * TAU), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.3 - TAU), -0.3, epsilon = 1e-12);
        for k in -50..50 {
            let w = wrap_angle(k as f64 * 0.77);
            assert!((-PI..PI).contains(&w));
        }
    }

    #[test]
    fn analyze_circle() {
        let g = Grid::standard(31).unwrap();
        let c = analyze(&circle(&g), 2);
        assert_abs_diff_eq!(c.mu(0).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((c.mu(1) - Vec2::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((c.nu(1) - Vec2::new(0.0, 1.0)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.power(2), 0.0, epsilon = 1e-28);
    }

    #[test]
    fn analyze_constant() {
        let g = Grid::standard(9).unwrap();
        let s = ContourSamples::new(g, vec![Vec2::new(2.5, -1.0); 9]).unwrap();
        let c = analyze(&s, 4);
        assert_abs_diff_eq!((c.mu(0) - Vec2::new(2.5, -1.0)).norm(), 0.0, epsilon = 1e-14);
        for j in 1..=4 {
            assert_abs_diff_eq!(c.power(j), 0.0, epsilon = 1e-28);
        }
    }

    #[test]
    fn analyze_truncates_high_order() {
        let g = Grid::standard(7).unwrap();
        assert_eq!(analyze(&circle(&g), 10).order(), 3);
    }

    #[test]
    fn synthesize_examples() {
        let mut c = FourierCoeffs::zeros(3);
        c.set_mu(0, Vec2::new(1.0, 2.0));
        assert_eq!(synthesize(&c, 0.77), Vec2::new(1.0, 2.0));
        let mut circ = FourierCoeffs::zeros(1);
        circ.set_mu(1, Vec2::new(1.0, 0.0));
        circ.set_nu(1, Vec2::new(0.0, 1.0));
        assert_eq!(synthesize(&circ, 0.0), Vec2::new(1.0, 0.0));
        let d = synthesize_deriv(&circ, 0.0);
        assert_abs_diff_eq!((d - Vec2::new(0.0, 1.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn smoother_at_node_and_oracle() {
        let g = Grid::standard(31).unwrap();
        let j = 10;
        assert_abs_diff_eq!(
            smoother_weight(&g, 4, j, g.theta()[4]),
            (1.0 + 2.0 * j as f64) / 31.0,
            epsilon = 1e-15
        );
        // naive summation oracle at θ = 0.3, l = 5 (one-based)
        let theta_l = -32.0 * PI / 31.0 + TAU * 5.0 / 31.0;
        let mut naive = 1.0 / 31.0;
        for jj in 1..=10 {
            naive += 2.0 / 31.0 * (jj as f64 * (0.3 - theta_l)).cos();
        }
        assert_abs_diff_eq!(smoother_weight(&g, 4, j, 0.3), naive, epsilon = 1e-14);
    }

    #[test]
    fn interpolant_hits_samples() {
        let g = Grid::standard(11).unwrap();
        let pts: Vec<Vec2> = (0..11)
            .map(|l| Vec2::new((l * l) as f64 * 0.1, (l as f64).sin()))
            .collect();
        let s = ContourSamples::new(g.clone(), pts.clone()).unwrap();
        let interp = TrigInterpolant::new(&s).unwrap();
        for (l, &t) in g.theta().iter().enumerate() {
            assert_abs_diff_eq!((interp.eval(t) - pts[l]).norm(), 0.0, epsilon = 1e-12);
        }
        let constant = ContourSamples::new(g, vec![Vec2::new(3.0, 4.0); 11]).unwrap();
        let ci = TrigInterpolant::new(&constant).unwrap();
        assert_abs_diff_eq!((ci.eval(1.234) - Vec2::new(3.0, 4.0)).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ci.deriv(1.234).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn interpolation_needs_standard_grid() {
        let g = Grid::explicit(vec![-3.0, -1.0, 0.5, 2.0]).unwrap();
        let s = ContourSamples::new(g, vec![Vec2::ZERO; 4]).unwrap();
        assert!(matches!(trig_interpolate(&s, 0.0), Err(Error::NonStandardGrid)));
    }

    #[test]
    fn parseval_examples() {
        let mut a = FourierCoeffs::zeros(0);
        a.set_mu(0, Vec2::new(1.0, 0.0));
        assert_eq!(parseval_distance(&a, &FourierCoeffs::zeros(3)), 2.0);
        assert_eq!(parseval_distance(&a, &a), 0.0);
    }

    #[test]
    fn contour_validation() {
        let g = Grid::standard(3).unwrap();
        assert!(ContourSamples::new(g.clone(), vec![Vec2::ZERO; 2]).is_err());
        assert!(ContourSamples::new(g, vec![Vec2::ZERO, Vec2::new(f64::NAN, 0.0), Vec2::ZERO]).is_err());
    }

    #[test]
    fn coeffs_validation_and_serde() {
        assert!(FourierCoeffs::new(vec![Vec2::ZERO; 2], vec![]).is_err());
        let mut c = FourierCoeffs::zeros(2);
        c.set_nu(2, Vec2::new(0.1, 0.2));
        let json = serde_json::to_string(&c).unwrap();
        let back: FourierCoeffs = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        let bad = r#"{"order":3,"mu":[[0,0],[0,0]],"nu":[[0,0]]}"#;
        assert!(serde_json::from_str::<FourierCoeffs>(bad).is_err());
    }

    #[test]
    fn compensated_path_matches_plain_on_large_grid() {
        let g = Grid::standard(10_001).unwrap();
        let pts: Vec<Vec2> = g.theta().iter().map(|&t| Vec2::new(t.cos() + 1.0, (2.0 * t).sin())).collect();
        let c = Analyzer::new(&g, 3).analyze(&pts);
        assert_abs_diff_eq!((c.mu(0) - Vec2::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!((c.mu(1) - Vec2::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!((c.nu(2) - Vec2::new(0.0, 1.0)).norm(), 0.0, epsilon = 1e-13);
    }
}
