//! Circle diffeomorphisms as time-one flows of trigonometric velocity fields.
//!
//! The field `f_w(x) = Σ_{j=0}^{2m} w_j t_j(x)` interpolates the weights
//! `w_j` at `2m + 1` equidistant knots `x_j = −π + 2πj/(2m+1)` through the
//! trigonometric cardinal functions `t_j`. Pinning `w_0 = 0` makes
//! `f_w(±π) = 0`, so the flow of `x' = f_w(x)` maps `[−π, π]` onto itself.
//! The inverse map is the flow of `−f_w`.
//!
//! Integration is classical fixed-step RK4. Parameter sensitivities of the
//! flow are obtained by integrating the variational equation jointly with
//! the state, so they are the exact derivatives of the discrete map.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Weights of a velocity field with `2m + 1` knots; `w_0 ≡ 0` is implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct DiffeoSpec {
    m: usize,
    /// `w_1..=w_{2m}`.
    w: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    m: usize,
    w: Vec<f64>,
}

impl TryFrom<SpecRepr> for DiffeoSpec {
    type Error = Error;
    fn try_from(r: SpecRepr) -> Result<Self> {
        DiffeoSpec::new(r.m, r.w)
    }
}

impl From<DiffeoSpec> for SpecRepr {
    fn from(s: DiffeoSpec) -> Self {
        SpecRepr { m: s.m, w: s.w }
    }
}

impl DiffeoSpec {
    pub fn new(m: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != 2 * m {
            return Err(Error::InvalidParameter(format!(
                "m = {m} needs {} weights, got {}",
                2 * m,
                w.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("diffeomorphism weights".into()));
        }
        Ok(DiffeoSpec { m, w })
    }

    pub fn identity(m: usize) -> Self {
        DiffeoSpec { m, w: vec![0.0; 2 * m] }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `w_1..=w_{2m}`.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn knots(&self) -> Vec<f64> {
        knots(self.m)
    }

    /// The spec with weights `−w`, whose flow is the inverse map.
    pub fn negated(&self) -> DiffeoSpec {
        DiffeoSpec {
            m: self.m,
            w: self.w.iter().map(|v| -v).collect(),
        }
    }
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Fixed RK4 steps over `t ∈ [0, 1]`.
    pub steps: usize,
}

impl FlowConfig {
    pub const METHOD: &'static str = "rk4-fixed";

    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter("integrator needs at least one step".into()));
        }
        Ok(FlowConfig { steps })
    }
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { steps: 100 }
    }
}

/// Knots `x_i = −π + 2πi/(2m+1)`, `i = 0..=2m`.
pub fn knots(m: usize) -> Vec<f64> {
    let count = 2 * m + 1;
    (0..count).map(|i| -PI + TAU * i as f64 / count as f64).collect()
}

/// Cardinal function `t_j(x) = Π_{k≠j} sin((x − x_k)/2) / Π_{k≠j} sin((x_j − x_k)/2)`.
pub fn cardinal_basis(knots: &[f64], j: usize, x: f64) -> f64 {
    let mut num = 1.0;
    let mut den = 1.0;
    for (k, &xk) in knots.iter().enumerate() {
        if k != j {
            num *= ((x - xk) / 2.0).sin();
            den *= ((knots[j] - xk) / 2.0).sin();
        }
    }
    num / den
}

/// `t_j'(x) = Σ_{k≠j} cos((x − x_k)/2) Π_{i≠j,k} sin((x − x_i)/2) / (2 Π_{k≠j} sin((x_j − x_k)/2))`.
pub fn cardinal_basis_deriv(knots: &[f64], j: usize, x: f64) -> f64 {
    let mut den = 1.0;
    for (k, &xk) in knots.iter().enumerate() {
        if k != j {
            den *= ((knots[j] - xk) / 2.0).sin();
        }
    }
    let mut num = 0.0;
    for (k, &xk) in knots.iter().enumerate() {
        if k == j {
            continue;
        }
        let mut prod = ((x - xk) / 2.0).cos();
        for (i, &xi) in knots.iter().enumerate() {
            if i != j && i != k {
                prod *= ((x - xi) / 2.0).sin();
            }
        }
        num += prod;
    }
    num / (2.0 * den)
}

/// `f_w(x)` through the product formula.
pub fn velocity(spec: &DiffeoSpec, x: f64) -> f64 {
    let knots = spec.knots();
    spec.w
        .iter()
        .enumerate()
        .map(|(i, w)| w * cardinal_basis(&knots, i + 1, x))
        .sum()
}

/// Fast evaluation of `f_w`, `f_w'` and the basis values.
///
/// On equidistant knots each cardinal function is a normalized Dirichlet
/// kernel, `t_j(x) = (1 + 2Σ_{k=1}^{m} cos(k(x − x_j)))/(2m+1)`, so the field
/// is an order-`m` trigonometric polynomial with precomputable coefficients.
#[derive(Debug, Clone)]
pub struct VelocityField {
    m: usize,
    /// `cos(k x_j)`, `sin(k x_j)` for `j = 1..=2m`, `k = 1..=m`, row per `j`.
    knot_cos: Vec<f64>,
    knot_sin: Vec<f64>,
    a0: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl VelocityField {
    pub fn new(spec: &DiffeoSpec) -> Self {
        let m = spec.m;
        let knots = spec.knots();
        let scale = 1.0 / (2 * m + 1) as f64;
        let mut knot_cos = Vec::with_capacity(2 * m * m);
        let mut knot_sin = Vec::with_capacity(2 * m * m);
        for &xj in &knots[1..] {
            for k in 1..=m {
                let (s, c) = (k as f64 * xj).sin_cos();
                knot_cos.push(c);
                knot_sin.push(s);
            }
        }
        let a0 = spec.w.iter().sum::<f64>() * scale;
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m];
        for (j, &wj) in spec.w.iter().enumerate() {
            for k in 0..m {
                a[k] += 2.0 * scale * wj * knot_cos[j * m + k];
                b[k] += 2.0 * scale * wj * knot_sin[j * m + k];
            }
        }
        VelocityField {
            m,
            knot_cos,
            knot_sin,
            a0,
            a,
            b,
        }
    }

    fn harmonics(&self, x: f64, cos: &mut [f64], sin: &mut [f64]) {
        for k in 0..self.m {
            let (s, c) = ((k + 1) as f64 * x).sin_cos();
            cos[k] = c;
            sin[k] = s;
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut f = self.a0;
        for k in 0..self.m {
            let (s, c) = ((k + 1) as f64 * x).sin_cos();
            f += self.a[k] * c + self.b[k] * s;
        }
        f
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let mut d = 0.0;
        for k in 0..self.m {
            let kf = (k + 1) as f64;
            let (s, c) = (kf * x).sin_cos();
            d += kf * (self.b[k] * c - self.a[k] * s);
        }
        d
    }

    /// `t_i(x)` for `i = 1..=2m`, written into `out`.
    fn basis_into(&self, cos: &[f64], sin: &[f64], out: &mut [f64]) {
        let m = self.m;
        let scale = 1.0 / (2 * m + 1) as f64;
        for (j, o) in out.iter_mut().enumerate() {
            let row = j * m..(j + 1) * m;
            let s: f64 = cos
                .iter()
                .zip(&self.knot_cos[row.clone()])
                .map(|(c, kc)| c * kc)
                .sum::<f64>()
                + sin.iter().zip(&self.knot_sin[row]).map(|(s, ks)| s * ks).sum::<f64>();
            *o = scale * (1.0 + 2.0 * s);
        }
    }
}

/// One classical RK4 step of `y' = rhs(y)` with step `h`, using `k` as
/// scratch space of five state-sized buffers.
fn rk4_step<F: FnMut(&[f64], &mut [f64])>(y: &mut [f64], h: f64, k: &mut [Vec<f64>; 5], rhs: &mut F) {
    let [k1, k2, k3, k4, tmp] = k;
    rhs(y, k1);
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    rhs(tmp, k2);
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    rhs(tmp, k3);
    for i in 0..y.len() {
        tmp[i] = y[i] + h * k3[i];
    }
    rhs(tmp, k4);
    for i in 0..y.len() {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates `x' = sign·f(x)` from `x(0) = theta` to `t = 1`, optionally
/// with the sensitivities `u_i' = sign·(f'(x) u_i + t_i(x))`.
fn integrate(field: &VelocityField, sign: f64, cfg: FlowConfig, theta: f64, sensitivities: bool) -> (f64, Vec<f64>) {
    let m = field.m;
    let dim = if sensitivities { 1 + 2 * m } else { 1 };
    let mut y = vec![0.0; dim];
    y[0] = theta;
    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut cos = vec![0.0; m];
    let mut sin = vec![0.0; m];
    let mut basis = vec![0.0; 2 * m];
    let h = 1.0 / cfg.steps as f64;
    let mut rhs = |state: &[f64], out: &mut [f64]| {
        let x = state[0];
        field.harmonics(x, &mut cos, &mut sin);
        let mut f = field.a0;
        let mut df = 0.0;
        for k in 0..m {
            let kf = (k + 1) as f64;
            f += field.a[k] * cos[k] + field.b[k] * sin[k];
            df += kf * (field.b[k] * cos[k] - field.a[k] * sin[k]);
        }
        out[0] = sign * f;
        if state.len() > 1 {
            field.basis_into(&cos, &sin, &mut basis);
            for i in 0..2 * m {
                out[1 + i] = sign * (df * state[1 + i] + basis[i]);
            }
        }
    };
    for _ in 0..cfg.steps {
        rk4_step(&mut y, h, &mut scratch, &mut rhs);
    }
    let x = y[0];
    y.remove(0);
    (x, y)
}

/// `φ_w(θ)`: time-one flow of `x' = f_w(x)` from `x(0) = θ`.
pub fn flow(spec: &DiffeoSpec, cfg: FlowConfig, theta: f64) -> f64 {
    if spec.m == 0 {
        return theta;
    }
    integrate(&VelocityField::new(spec), 1.0, cfg, theta, false).0
}

/// `φ_{−w}(θ)`, the inverse of [`flow`].
pub fn inverse_flow(spec: &DiffeoSpec, cfg: FlowConfig, theta: f64) -> f64 {
    if spec.m == 0 {
        return theta;
    }
    integrate(&VelocityField::new(spec), -1.0, cfg, theta, false).0
}

/// `φ_w` evaluated at many angles with one field setup.
pub fn flow_many(spec: &DiffeoSpec, cfg: FlowConfig, thetas: &[f64]) -> Vec<f64> {
    if spec.m == 0 {
        return thetas.to_vec();
    }
    let field = VelocityField::new(spec);
    thetas
        .iter()
        .map(|&t| integrate(&field, 1.0, cfg, t, false).0)
        .collect()
}

/// `φ_{−w}(θ)` together with `∂φ_{−w}(θ)/∂w_i` for `i = 1..=2m`.
///
/// The sensitivities solve `u' = f'_{−w}(x) u − t_i(x)`, `u(0) = 0`, along
/// the trajectory of `x' = f_{−w}(x)`.
pub fn inverse_flow_sensitivities(spec: &DiffeoSpec, cfg: FlowConfig, theta: f64) -> (f64, Vec<f64>) {
    if spec.m == 0 {
        return (theta, Vec::new());
    }
    integrate(&VelocityField::new(spec), -1.0, cfg, theta, true)
}

/// Like [`inverse_flow_sensitivities`] over many angles, sharing one field.
pub fn inverse_flow_sensitivities_many(
    spec: &DiffeoSpec,
    cfg: FlowConfig,
    thetas: &[f64],
) -> Vec<(f64, Vec<f64>)> {
    if spec.m == 0 {
        return thetas.iter().map(|&t| (t, Vec::new())).collect();
    }
    let field = VelocityField::new(spec);
    thetas
        .iter()
        .map(|&t| integrate(&field, -1.0, cfg, t, true))
        .collect()
}

/// `∂φ_{−w}(θ)/∂w_i` for one weight index `i ∈ 1..=2m`.
pub fn flow_sensitivity(spec: &DiffeoSpec, cfg: FlowConfig, theta: f64, i: usize) -> Result<f64> {
    if i == 0 || i > 2 * spec.m {
        return Err(Error::InvalidParameter(format!(
            "weight index {i} outside 1..={}",
            2 * spec.m
        )));
    }
    Ok(inverse_flow_sensitivities(spec, cfg, theta).1[i - 1])
}

/// Number of angles used by [`check_monotone`].
pub const MONOTONE_TEST_POINTS: usize = 501;

/// Verifies that both `φ_w` and `φ_{−w}` are strictly increasing on an
/// equidistant test grid over `[−π, π]`.
pub fn check_monotone(spec: &DiffeoSpec, cfg: FlowConfig) -> Result<()> {
    if spec.m == 0 {
        return Ok(());
    }
    let thetas: Vec<f64> = (0..MONOTONE_TEST_POINTS)
        .map(|i| -PI + TAU * i as f64 / (MONOTONE_TEST_POINTS - 1) as f64)
        .collect();
    let field = VelocityField::new(spec);
    for sign in [1.0, -1.0] {
        let image: Vec<f64> = thetas
            .iter()
            .map(|&t| integrate(&field, sign, cfg, t, false).0)
            .collect();
        if let Some(i) = image.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneFlow(format!(
                "image of {:.6} is not below image of {:.6} with {} steps",
                thetas[i],
                thetas[i + 1],
                cfg.steps
            )));
        }
    }
    Ok(())
}
