//! Joint estimation of root shifts and reparametrisations.
//!
//! Each contour `X_t`, extended off the grid by trigonometric interpolation,
//! is read at `φ_{−w_t}(θ_k) + α_t` and smoothed to order `J`:
//!
//! ```text
//! Γ̂_t(θ) = Σ_k X_t(φ_{−w_t}(θ_k) + α_t) S_k(θ),    Γ̂_n = mean_t Γ̂_t
//! M = Σ_t Σ_l ‖Γ̂_t(θ_l) − Γ̂_n(θ_l)‖²
//! ```
//!
//! `M` is minimized by projected gradient descent with Armijo backtracking.
//! A common shift or reparametrisation of all contours leaves `M` unchanged,
//! so `α_0 = 0` always holds and either `w_0 = 0` or `Σ_t w_t = 0`.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffeo::{check_monotone, inverse_flow_sensitivities_many, DiffeoSpec, FlowConfig};
use crate::spectral::{smoother_matrix, synthesize, wrap_angle, Analyzer, TrigInterpolant};
use crate::{ContourStack, Error, FourierCoeffs, Result, Vec2};

/// Which identifiability constraint the weights satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    /// The first contour is not reparametrised.
    #[default]
    W0Zero,
    /// Weight vectors average to zero over contours.
    MeanZero,
}

/// Shifts and diffeomorphism weights for every contour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentParams {
    pub alphas: Vec<f64>,
    pub weights: Vec<DiffeoSpec>,
}

impl AlignmentParams {
    pub fn identity(count: usize, m: usize) -> Self {
        AlignmentParams {
            alphas: vec![0.0; count],
            weights: vec![DiffeoSpec::identity(m); count],
        }
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn m(&self) -> usize {
        self.weights.first().map_or(0, |w| w.m())
    }

    /// Flattened as all shifts followed by each contour's weight block.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.alphas.clone();
        for w in &self.weights {
            v.extend_from_slice(w.weights());
        }
        v
    }

    pub fn from_vector(v: &[f64], count: usize, m: usize) -> Result<Self> {
        if v.len() != count * (1 + 2 * m) {
            return Err(Error::InvalidParameter(format!(
                "parameter vector has length {}, expected {}",
                v.len(),
                count * (1 + 2 * m)
            )));
        }
        let alphas = v[..count].to_vec();
        let weights = v[count..]
            .chunks(2 * m.max(1))
            .take(count)
            .map(|c| DiffeoSpec::new(m, c[..2 * m].to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let weights = if m == 0 {
            vec![DiffeoSpec::identity(0); count]
        } else {
            weights
        };
        Ok(AlignmentParams { alphas, weights })
    }

    /// Checks the anchoring constraints to within `tol`.
    pub fn check(&self, mode: ConstraintMode, tol: f64) -> Result<()> {
        if self.alphas.first().is_some_and(|a| a.abs() > tol) {
            return Err(Error::InvalidParameter("α_0 must be 0".into()));
        }
        match mode {
            ConstraintMode::W0Zero => {
                if self.weights.first().is_some_and(|w| w.weights().iter().any(|v| v.abs() > tol)) {
                    return Err(Error::InvalidParameter("w_0 must be 0".into()));
                }
            }
            ConstraintMode::MeanZero => {
                for i in 0..2 * self.m() {
                    let s: f64 = self.weights.iter().map(|w| w.weights()[i]).sum();
                    if s.abs() > tol {
                        return Err(Error::InvalidParameter(format!(
                            "weights must sum to zero over contours (component {} sums to {s})",
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The average per-point misfit `sqrt(M/((T+1)n))`, in data units.
pub fn average_error(objective: f64, contours: usize, n: usize) -> f64 {
    (objective / (contours * n) as f64).sqrt()
}

/// Precomputed state for evaluating `M` and its gradient on one stack.
#[derive(Debug, Clone)]
pub struct Aligner {
    stack: ContourStack,
    interpolants: Vec<TrigInterpolant>,
    /// Row-major `S_k(θ_l)`.
    smoother: Vec<f64>,
    analyzer: Analyzer,
    order: usize,
    flow: FlowConfig,
}

/// Objective value with the analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: Vec<f64>,
}

struct ContourTerms {
    smoothed: Vec<Vec2>,
    deriv: Vec<Vec2>,
    sens: Vec<Vec<f64>>,
}

impl Aligner {
    /// Requires the standard odd grid; `order` is capped at `(n − 1)/2`.
    pub fn new(stack: &ContourStack, order: usize, flow: FlowConfig) -> Result<Self> {
        let grid = stack.grid();
        if !grid.is_standard() {
            return Err(Error::NonStandardGrid);
        }
        let order = order.min(grid.max_order());
        let interpolants = stack
            .contours()
            .iter()
            .map(|c| TrigInterpolant::from_points(grid, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Aligner {
            stack: stack.clone(),
            interpolants,
            smoother: smoother_matrix(grid, order),
            analyzer: Analyzer::new(grid, order),
            order,
            flow,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn stack(&self) -> &ContourStack {
        &self.stack
    }

    fn n(&self) -> usize {
        self.stack.grid().n()
    }

    fn validate(&self, params: &AlignmentParams) -> Result<()> {
        if params.len() != self.stack.len() || params.weights.len() != self.stack.len() {
            return Err(Error::InvalidParameter(format!(
                "{} parameter blocks for {} contours",
                params.len(),
                self.stack.len()
            )));
        }
        let m = params.m();
        if params.weights.iter().any(|w| w.m() != m) {
            return Err(Error::InvalidParameter("all weight vectors need the same m".into()));
        }
        Ok(())
    }

    /// Angles `φ_{−w_t}(θ_k) + α_t`, wrapped into `[−π, π)`.
    pub fn read_angles(&self, params: &AlignmentParams, t: usize) -> Vec<f64> {
        let spec = &params.weights[t];
        let theta = self.stack.grid().theta();
        let warped = crate::diffeo::flow_many(&spec.negated(), self.flow, theta);
        warped.iter().map(|&z| wrap_angle(z + params.alphas[t])).collect()
    }

    /// The transformed contour `Y_t` sampled on the grid.
    pub fn transformed(&self, params: &AlignmentParams, t: usize) -> Vec<Vec2> {
        self.read_angles(params, t)
            .iter()
            .map(|&z| self.interpolants[t].eval(z))
            .collect()
    }

    /// Order-`J` coefficients of the smoothed contour `Γ̂_t`.
    pub fn smoothed_coeffs(&self, params: &AlignmentParams, t: usize) -> FourierCoeffs {
        self.analyzer.analyze(&self.transformed(params, t))
    }

    /// `Γ̂_t(θ)` at an arbitrary angle.
    pub fn smoothed_curve(&self, params: &AlignmentParams, t: usize, theta: f64) -> Vec2 {
        synthesize(&self.smoothed_coeffs(params, t), theta)
    }

    /// `M`, evaluated through Fourier analysis and synthesis of each `Y_t`.
    pub fn objective(&self, params: &AlignmentParams) -> Result<f64> {
        self.validate(params)?;
        let theta = self.stack.grid().theta();
        let curves: Vec<Vec<Vec2>> = (0..self.stack.len())
            .into_par_iter()
            .map(|t| {
                let c = self.smoothed_coeffs(params, t);
                theta.iter().map(|&th| synthesize(&c, th)).collect()
            })
            .collect();
        Ok(spread(&curves))
    }

    fn contour_terms(&self, params: &AlignmentParams, t: usize) -> ContourTerms {
        let n = self.n();
        let theta = self.stack.grid().theta();
        let flows = inverse_flow_sensitivities_many(&params.weights[t], self.flow, theta);
        let mut values = Vec::with_capacity(n);
        let mut deriv = Vec::with_capacity(n);
        let mut sens = Vec::with_capacity(n);
        for (x, u) in flows {
            let z = wrap_angle(x + params.alphas[t]);
            values.push(self.interpolants[t].eval(z));
            deriv.push(self.interpolants[t].deriv(z));
            sens.push(u);
        }
        let smoothed = (0..n)
            .map(|l| {
                let row = &self.smoother[l * n..(l + 1) * n];
                row.iter().zip(&values).map(|(&s, &v)| v * s).sum()
            })
            .collect();
        ContourTerms {
            smoothed,
            deriv,
            sens,
        }
    }

    /// `M` and its gradient with respect to every shift and weight, without
    /// applying any constraint. Layout follows [`AlignmentParams::to_vector`].
    pub fn evaluate_unconstrained(&self, params: &AlignmentParams) -> Result<Evaluation> {
        self.validate(params)?;
        let n = self.n();
        let count = self.stack.len();
        let m = params.m();
        let terms: Vec<ContourTerms> = (0..count)
            .into_par_iter()
            .map(|t| self.contour_terms(params, t))
            .collect();
        let mean: Vec<Vec2> = (0..n)
            .map(|l| terms.iter().map(|c| c.smoothed[l]).sum::<Vec2>() / count as f64)
            .collect();
        let mut objective = 0.0;
        let mut gradient = vec![0.0; count * (1 + 2 * m)];
        for (t, term) in terms.iter().enumerate() {
            let resid: Vec<Vec2> = term.smoothed.iter().zip(&mean).map(|(&g, &mu)| g - mu).collect();
            objective += resid.iter().map(|r| r.norm_sq()).sum::<f64>();
            for k in 0..n {
                // q_k = Σ_l S_k(θ_l) r_l
                let q: Vec2 = (0..n).map(|l| resid[l] * self.smoother[l * n + k]).sum();
                let dk = 2.0 * q.dot(term.deriv[k]);
                gradient[t] += dk;
                for i in 0..2 * m {
                    gradient[count + t * 2 * m + i] += dk * term.sens[k][i];
                }
            }
        }
        Ok(Evaluation {
            objective,
            gradient,
        })
    }

    /// Like [`Aligner::evaluate_unconstrained`], with the gradient projected
    /// onto the constraint set of `mode`.
    pub fn evaluate(&self, params: &AlignmentParams, mode: ConstraintMode) -> Result<Evaluation> {
        let mut e = self.evaluate_unconstrained(params)?;
        project(&mut e.gradient, self.stack.len(), params.m(), mode);
        Ok(e)
    }

    /// Descent from `start` (identity when `None`).
    pub fn optimize(&self, start: Option<AlignmentParams>, opts: &AlignOptions) -> Result<AlignmentResult> {
        let count = self.stack.len();
        let m = opts.m;
        let identity = AlignmentParams::identity(count, m);
        let identity_objective = self.objective(&identity)?;
        let mut params = match start {
            Some(p) => p,
            None if opts.grid_search_shifts.is_some() => {
                let k = opts.grid_search_shifts.unwrap_or(DEFAULT_SHIFT_CANDIDATES);
                let mut p = identity.clone();
                p.alphas = self.grid_search_shifts(k);
                p
            }
            None => identity,
        };
        self.validate(&params)?;
        if params.m() != m {
            return Err(Error::InvalidParameter(format!(
                "start has m = {}, options have m = {m}",
                params.m()
            )));
        }
        params.check(opts.mode, 1e-12)?;

        let mut x = params.to_vector();
        let mut eval = self.evaluate(&params, opts.mode)?;
        // Line search, trace and result all use the Fourier-path value of M.
        let mut current = self.objective(&params)?;
        let mut trace = vec![current];
        let mut status = AlignStatus::MaxIterations;
        let mut step = opts.line_search.initial_step;
        let mut iterations = 0;
        while iterations < opts.max_iter {
            let gnorm_sq: f64 = eval.gradient.iter().map(|g| g * g).sum();
            if gnorm_sq.sqrt() < opts.tol {
                status = AlignStatus::Converged;
                break;
            }
            let mut accepted = None;
            for _ in 0..opts.line_search.max_backtracks {
                let mut trial: Vec<f64> = x.iter().zip(&eval.gradient).map(|(a, g)| a - step * g).collect();
                normalize(&mut trial, count, m, opts.mode);
                let trial_params = AlignmentParams::from_vector(&trial, count, m)?;
                let value = self.objective(&trial_params)?;
                if value <= current - opts.line_search.slope * step * gnorm_sq {
                    accepted = Some((trial, trial_params, value));
                    break;
                }
                step *= opts.line_search.shrink;
            }
            let Some((trial, trial_params, value)) = accepted else {
                status = AlignStatus::Stalled;
                break;
            };
            iterations += 1;
            x = trial;
            params = trial_params;
            eval = self.evaluate(&params, opts.mode)?;
            current = value;
            trace.push(current);
            step = if opts.line_search.warm_start {
                (step / opts.line_search.shrink).min(opts.line_search.initial_step)
            } else {
                opts.line_search.initial_step
            };
        }
        for w in &params.weights {
            check_monotone(w, self.flow)?;
        }
        let aligned_contours = (0..count).map(|t| self.transformed(&params, t)).collect();
        let mut aligned = ContourStack::new(self.stack.grid().clone(), aligned_contours)?;
        if let Some(labels) = self.stack.labels() {
            aligned = aligned.with_labels(labels.to_vec())?;
        }
        Ok(AlignmentResult {
            objective: current,
            identity_objective,
            params,
            trace,
            iterations,
            status,
            aligned,
        })
    }

    /// For each contour `t ≥ 1`, the shift among `k` equidistant candidates
    /// `−π + 2πi/k` that best matches contour 0 before any warping.
    ///
    /// With identity warps the smoothed contour shifted by `α` has
    /// coefficients rotated by `jα`, and the grid sum of a squared
    /// order-`J` polynomial is exact, so each candidate costs `O(J)`.
    pub fn grid_search_shifts(&self, k: usize) -> Vec<f64> {
        let k = k.max(1);
        let base: Vec<FourierCoeffs> = self
            .stack
            .contours()
            .iter()
            .map(|c| self.analyzer.analyze(c))
            .collect();
        let reference = &base[0];
        let mut alphas = vec![0.0; self.stack.len()];
        for (t, coeffs) in base.iter().enumerate().skip(1) {
            let mut best = (f64::INFINITY, 0.0);
            for i in 0..k {
                let alpha = -PI + TAU * i as f64 / k as f64;
                let d = crate::spectral::parseval_distance(&rotate(coeffs, alpha), reference);
                if d < best.0 {
                    best = (d, alpha);
                }
            }
            alphas[t] = best.1;
        }
        alphas
    }
}

/// Coefficients of `θ ↦ c(θ + α)`.
fn rotate(c: &FourierCoeffs, alpha: f64) -> FourierCoeffs {
    let mut out = c.clone();
    for j in 1..=c.order() {
        let (s, co) = (j as f64 * alpha).sin_cos();
        out.set_mu(j, c.mu(j) * co + c.nu(j) * s);
        out.set_nu(j, c.nu(j) * co - c.mu(j) * s);
    }
    out
}

/// `Σ_t Σ_l ‖c_t(θ_l) − mean_t c_t(θ_l)‖²`.
fn spread(curves: &[Vec<Vec2>]) -> f64 {
    let count = curves.len() as f64;
    let n = curves[0].len();
    let mean: Vec<Vec2> = (0..n)
        .map(|l| curves.iter().map(|c| c[l]).sum::<Vec2>() / count)
        .collect();
    curves
        .iter()
        .map(|c| c.iter().zip(&mean).map(|(&a, &b)| (a - b).norm_sq()).sum::<f64>())
        .sum()
}

fn project(gradient: &mut [f64], count: usize, m: usize, mode: ConstraintMode) {
    gradient[0] = 0.0;
    let w = &mut gradient[count..];
    match mode {
        ConstraintMode::W0Zero => {
            for g in w.iter_mut().take(2 * m) {
                *g = 0.0;
            }
        }
        ConstraintMode::MeanZero => center_blocks(w, count, m),
    }
}

fn center_blocks(w: &mut [f64], count: usize, m: usize) {
    for i in 0..2 * m {
        let mean = (0..count).map(|t| w[t * 2 * m + i]).sum::<f64>() / count as f64;
        for t in 0..count {
            w[t * 2 * m + i] -= mean;
        }
    }
}

/// Wraps shifts and re-imposes the weight constraint after a step.
fn normalize(x: &mut [f64], count: usize, m: usize, mode: ConstraintMode) {
    x[0] = 0.0;
    for a in &mut x[1..count] {
        *a = wrap_angle(*a);
    }
    match mode {
        ConstraintMode::W0Zero => {
            for v in x[count..count + 2 * m].iter_mut() {
                *v = 0.0;
            }
        }
        ConstraintMode::MeanZero => center_blocks(&mut x[count..], count, m),
    }
}

/// Armijo backtracking settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub initial_step: f64,
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub slope: f64,
    pub max_backtracks: usize,
    /// Start each search from twice the previously accepted step (capped at
    /// `initial_step`) instead of from `initial_step`.
    pub warm_start: bool,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            initial_step: 1.0,
            shrink: 0.5,
            slope: 1e-4,
            max_backtracks: 60,
            warm_start: true,
        }
    }
}

/// Default number of shift candidates for the coarse search.
pub const DEFAULT_SHIFT_CANDIDATES: usize = 36;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignOptions {
    /// Smoothing order `J`.
    pub order: usize,
    /// Weight half-count; `0` aligns shifts only.
    pub m: usize,
    pub mode: ConstraintMode,
    pub max_iter: usize,
    /// Stop once the projected gradient norm falls below this.
    pub tol: f64,
    pub line_search: LineSearch,
    /// Candidate count for the coarse shift search, if enabled.
    pub grid_search_shifts: Option<usize>,
    pub flow: FlowConfig,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            order: 10,
            m: 0,
            mode: ConstraintMode::W0Zero,
            max_iter: 500,
            tol: 1e-6,
            line_search: LineSearch::default(),
            grid_search_shifts: None,
            flow: FlowConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignStatus {
    Converged,
    MaxIterations,
    /// No step length gave sufficient decrease.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub params: AlignmentParams,
    pub objective: f64,
    /// `M` at identity parameters.
    pub identity_objective: f64,
    /// `M` at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: AlignStatus,
    /// The transformed contours `Y_t` on the grid.
    pub aligned: ContourStack,
}

/// Aligns `stack` (at least two contours on the standard grid).
pub fn align(stack: &ContourStack, opts: &AlignOptions) -> Result<AlignmentResult> {
    if stack.len() < 2 {
        return Err(Error::InsufficientReplicates { contours: stack.len() });
    }
    Aligner::new(stack, opts.order, opts.flow)?.optimize(None, opts)
}

/// `M` for a stack at given parameters.
pub fn objective(stack: &ContourStack, params: &AlignmentParams, order: usize) -> Result<f64> {
    Aligner::new(stack, order, FlowConfig::default())?.objective(params)
}

/// Projected gradient of `M` at given parameters.
pub fn gradient(stack: &ContourStack, params: &AlignmentParams, order: usize, mode: ConstraintMode) -> Result<Vec<f64>> {
    Ok(Aligner::new(stack, order, FlowConfig::default())?
        .evaluate(params, mode)?
        .gradient)
}

/// `Γ̂_t(θ)` for one contour.
pub fn smoothed_curve_t(stack: &ContourStack, params: &AlignmentParams, order: usize, t: usize, theta: f64) -> Result<Vec2> {
    let aligner = Aligner::new(stack, order, FlowConfig::default())?;
    aligner.validate(params)?;
    Ok(aligner.smoothed_curve(params, t, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use approx::assert_abs_diff_eq;

    fn lobed(theta: f64) -> Vec2 {
        Vec2::new(
            2.0 * theta.cos() + 0.4 * (2.0 * theta).cos() + 0.1 * (3.0 * theta).sin(),
            1.5 * theta.sin() - 0.3 * (2.0 * theta).sin() + 0.2 * (3.0 * theta).cos(),
        )
    }

    fn shifted_stack(n: usize, shifts: &[f64]) -> ContourStack {
        let g = Grid::standard(n).unwrap();
        let contours = shifts
            .iter()
            .map(|&a| g.theta().iter().map(|&t| lobed(t - a)).collect())
            .collect();
        ContourStack::new(g, contours).unwrap()
    }

    #[test]
    fn identical_contours_zero_objective_and_gradient() {
        let stack = shifted_stack(21, &[0.0, 0.0, 0.0]);
        let params = AlignmentParams::identity(3, 2);
        let a = Aligner::new(&stack, 6, FlowConfig::default()).unwrap();
        let e = a.evaluate_unconstrained(&params).unwrap();
        assert_abs_diff_eq!(e.objective, 0.0, epsilon = 1e-24);
        assert!(e.gradient.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn objective_paths_agree() {
        let stack = shifted_stack(21, &[0.0, 0.4, -1.0]);
        let a = Aligner::new(&stack, 6, FlowConfig::default()).unwrap();
        let mut params = AlignmentParams::identity(3, 1);
        params.alphas = vec![0.0, 0.2, -0.3];
        params.weights[1] = DiffeoSpec::new(1, vec![0.1, -0.05]).unwrap();
        params.weights[2] = DiffeoSpec::new(1, vec![-0.02, 0.08]).unwrap();
        let direct = a.objective(&params).unwrap();
        let via_gradient = a.evaluate_unconstrained(&params).unwrap().objective;
        assert!((direct - via_gradient).abs() <= 1e-10 * direct.max(1.0));
    }

    #[test]
    fn identity_alignment_matches_single_contour_estimate() {
        let stack = shifted_stack(15, &[0.0, 0.7]);
        let params = AlignmentParams::identity(2, 2);
        let single = ContourStack::new(stack.grid().clone(), vec![stack.contours()[1].clone()]).unwrap();
        let fit = crate::estimator::fit(&single, 4).unwrap();
        for &th in &[-2.0, 0.1, 1.7] {
            let a = smoothed_curve_t(&stack, &params, 4, 1, th).unwrap();
            let b = crate::estimator::estimate_curve(&fit, th);
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pure_shift_reads_shifted_curve() {
        let stack = shifted_stack(15, &[0.0, 0.0]);
        let mut params = AlignmentParams::identity(2, 0);
        params.alphas[1] = 0.6;
        for &th in &[-2.0, 0.1, 1.7] {
            let got = smoothed_curve_t(&stack, &params, 7, 1, th).unwrap();
            assert_abs_diff_eq!((got - lobed(th + 0.6)).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_contours_are_invariant() {
        let g = Grid::standard(11).unwrap();
        let stack = ContourStack::new(g, vec![vec![Vec2::new(1.0, 2.0); 11]; 2]).unwrap();
        let mut params = AlignmentParams::identity(2, 1);
        params.alphas[1] = 1.1;
        params.weights[1] = DiffeoSpec::new(1, vec![0.3, -0.2]).unwrap();
        let v = smoothed_curve_t(&stack, &params, 3, 1, 0.4).unwrap();
        assert_abs_diff_eq!((v - Vec2::new(1.0, 2.0)).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let stack = shifted_stack(21, &[0.0, 0.3, -0.5]);
        let a = Aligner::new(&stack, 6, FlowConfig::default()).unwrap();
        let mut params = AlignmentParams::identity(3, 1);
        params.alphas = vec![0.05, 0.1, -0.2];
        params.weights[0] = DiffeoSpec::new(1, vec![0.02, 0.03]).unwrap();
        params.weights[1] = DiffeoSpec::new(1, vec![0.1, -0.05]).unwrap();
        params.weights[2] = DiffeoSpec::new(1, vec![-0.07, 0.04]).unwrap();
        let e = a.evaluate_unconstrained(&params).unwrap();
        let x = params.to_vector();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fp = a.objective(&AlignmentParams::from_vector(&xp, 3, 1).unwrap()).unwrap();
            let fm = a.objective(&AlignmentParams::from_vector(&xm, 3, 1).unwrap()).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - e.gradient[i]).abs() <= 1e-5 * e.gradient[i].abs().max(1e-3), "{i}: {fd} vs {}", e.gradient[i]);
        }
    }

    #[test]
    fn common_shift_direction_is_flat() {
        let stack = shifted_stack(21, &[0.0, 0.0, 0.0]);
        let a = Aligner::new(&stack, 6, FlowConfig::default()).unwrap();
        let mut params = AlignmentParams::identity(3, 0);
        params.alphas = vec![0.3, -0.2, 0.5];
        let e = a.evaluate_unconstrained(&params).unwrap();
        let total: f64 = e.gradient[..3].iter().sum();
        assert_abs_diff_eq!(total, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn projection_respects_modes() {
        let mut g = vec![1.0, 2.0, 3.0, 0.5, 0.7, 1.5, 0.1, -0.4, 0.2];
        project(&mut g.clone(), 3, 1, ConstraintMode::W0Zero);
        let mut a = g.clone();
        project(&mut a, 3, 1, ConstraintMode::W0Zero);
        assert_eq!(&a[..5], &[0.0, 2.0, 3.0, 0.0, 0.0]);
        project(&mut g, 3, 1, ConstraintMode::MeanZero);
        assert_eq!(g[0], 0.0);
        assert_abs_diff_eq!(g[3] + g[5] + g[7], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[4] + g[6] + g[8], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_iterations_returns_start() {
        let stack = shifted_stack(15, &[0.0, 0.5]);
        let opts = AlignOptions {
            order: 5,
            max_iter: 0,
            ..AlignOptions::default()
        };
        let r = align(&stack, &opts).unwrap();
        assert_eq!(r.params, AlignmentParams::identity(2, 0));
        assert_eq!(r.trace, vec![r.identity_objective]);
        assert_eq!(r.objective, r.identity_objective);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn recovers_known_shifts() {
        let truth = [0.0, 1.9, -2.4];
        let stack = shifted_stack(31, &truth);
        let opts = AlignOptions {
            order: 8,
            grid_search_shifts: Some(DEFAULT_SHIFT_CANDIDATES),
            ..AlignOptions::default()
        };
        let r = align(&stack, &opts).unwrap();
        for (a, b) in r.params.alphas.iter().zip(truth) {
            assert!((a - b).abs() < 0.01, "{:?}", r.params.alphas);
        }
        assert!(r.objective < 1e-6 * r.trace[0]);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        let refit = crate::estimator::fit(&r.aligned, 8).unwrap();
        assert!(refit.noise_variances().unwrap().iter().all(|&v| v < 1e-10));
    }

    #[test]
    fn single_contour_rejected() {
        let stack = shifted_stack(9, &[0.0]);
        assert!(align(&stack, &AlignOptions::default()).is_err());
    }

    #[test]
    fn params_vector_round_trip_and_checks() {
        let mut p = AlignmentParams::identity(3, 2);
        p.alphas[2] = 0.4;
        p.weights[1] = DiffeoSpec::new(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let v = p.to_vector();
        assert_eq!(AlignmentParams::from_vector(&v, 3, 2).unwrap(), p);
        assert!(p.check(ConstraintMode::W0Zero, 0.0).is_ok());
        assert!(p.check(ConstraintMode::MeanZero, 1e-12).is_err());
        let shift_only = AlignmentParams::identity(2, 0);
        assert_eq!(AlignmentParams::from_vector(&shift_only.to_vector(), 2, 0).unwrap(), shift_only);
    }

    #[test]
    fn average_error_metric() {
        assert_eq!(format!("{:.2}", average_error(1195.048, 3, 73)), "2.34");
        assert_eq!(format!("{:.2}", average_error(568.0997, 3, 73)), "1.61");
    }
}
