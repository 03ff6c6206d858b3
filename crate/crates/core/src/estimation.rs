//! Minimum S-divergence estimation for scalar discrete models.
//!
//! The minimized objective is the `theta`-dependent part of
//! `S(r_n, f_theta) / (1 + alpha)`:
//!
//! ```text
//! H_n(theta) = 1/(1+alpha) [ 1/A sum f^(1+alpha) - (1+alpha)/(A B) sum f^B r^A ]
//! ```
//!
//! whose derivative is `-sum K(delta_n) f^(1+alpha) u_theta`. Sums run over
//! the model support truncated by [`TruncationPolicy`], always extended to
//! the largest observed point. Powers are assembled as `exp(c * ln f)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{DivergenceParams, PmfVector, Regime};
use crate::error::{Error, Result};
use crate::models::{check_support, check_theta, truncation_point, DiscreteModel, ParamSpace, TruncationPolicy};
use crate::table::FrequencyTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence requires `|H_n'(theta)| <= grad_tol * scale`, where
    /// `scale` is the sum of absolute gradient contributions.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub truncation: TruncationPolicy,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-9,
            max_iter: 200,
            truncation: TruncationPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedOutcome {
    Converged,
    IterationLimit,
    /// The iterate ran into the edge of the search range.
    Boundary,
    /// Bracket collapsed to rounding level before the gradient test passed.
    Stalled,
    /// Objective or gradient not finite at the start point.
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTrace {
    pub start: f64,
    pub start_objective: Option<f64>,
    pub theta: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub outcome: SeedOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: f64,
    /// `H_n` at `theta_hat`.
    pub objective: f64,
    pub grad_norm: f64,
    pub grad_scale: f64,
    pub iterations: usize,
    pub seeds_tried: usize,
    pub converged: bool,
    pub std_error: Option<f64>,
    pub seeds: Vec<SeedTrace>,
}

#[derive(Debug, Clone, Copy)]
struct Evaluation {
    value: f64,
    grad: f64,
    hess: f64,
    scale: f64,
}

/// `H_n` for a fixed sample, model and `(alpha, lambda)`.
pub struct Objective<'a> {
    model: &'a dyn DiscreteModel,
    params: DivergenceParams,
    freqs: Vec<(u64, f64)>,
    policy: TruncationPolicy,
}

impl<'a> Objective<'a> {
    /// `freqs` are `(x, r(x))` pairs; zero entries are dropped.
    pub fn new(
        model: &'a dyn DiscreteModel,
        mut freqs: Vec<(u64, f64)>,
        params: DivergenceParams,
        policy: TruncationPolicy,
    ) -> Result<Self> {
        freqs.retain(|e| e.1 > 0.0);
        freqs.sort_by_key(|e| e.0);
        if freqs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for &(x, r) in &freqs {
            check_support(model, x)?;
            if !r.is_finite() {
                return Err(Error::invalid(format!("non-finite frequency at {x}")));
            }
        }
        let data_max = freqs.last().map(|e| e.0).unwrap_or(0);
        Ok(Self {
            model,
            params,
            freqs,
            policy: policy.with_data_max(data_max.max(policy.data_max)),
        })
    }

    pub fn from_table(
        model: &'a dyn DiscreteModel,
        data: &FrequencyTable,
        params: DivergenceParams,
        policy: TruncationPolicy,
    ) -> Result<Self> {
        Self::new(model, data.relative(), params, policy)
    }

    /// Objective against an exact pmf `g` instead of sample frequencies; its
    /// minimizer is the best-fitting parameter for `g`.
    pub fn from_pmf(
        model: &'a dyn DiscreteModel,
        g: &PmfVector,
        params: DivergenceParams,
        policy: TruncationPolicy,
    ) -> Result<Self> {
        Self::new(model, g.nonzero(), params, policy)
    }

    pub fn model(&self) -> &'a dyn DiscreteModel {
        self.model
    }

    pub fn params(&self) -> &DivergenceParams {
        &self.params
    }

    pub fn frequencies(&self) -> &[(u64, f64)] {
        &self.freqs
    }

    pub fn value(&self, theta: f64) -> Result<f64> {
        self.evaluate(theta).map(|e| e.value)
    }

    pub fn gradient(&self, theta: f64) -> Result<f64> {
        self.evaluate(theta).map(|e| e.grad)
    }

    pub fn hessian(&self, theta: f64) -> Result<f64> {
        self.evaluate(theta).map(|e| e.hess)
    }

    /// Sum of absolute gradient contributions at `theta`.
    pub fn gradient_scale(&self, theta: f64) -> Result<f64> {
        self.evaluate(theta).map(|e| e.scale)
    }

    fn evaluate(&self, theta: f64) -> Result<Evaluation> {
        check_theta(self.model, theta)?;
        let upper = truncation_point(self.model, theta, &self.policy)?;
        let alpha1 = 1.0 + self.params.alpha;
        let (a, b) = (self.params.a_eff(), self.params.b_eff());
        let regime = self.params.regime;

        let (mut s1, mut g1, mut h1, mut abs1) = (0.0, 0.0, 0.0, 0.0);
        let (mut s2, mut g2, mut h2, mut abs2) = (0.0, 0.0, 0.0, 0.0);
        let mut observed = self.freqs.iter().peekable();

        for x in self.model.support_origin()..=upper {
            let r = match observed.peek() {
                Some(&&(ox, r)) if ox == x => {
                    observed.next();
                    r
                }
                _ => 0.0,
            };
            let lf = self.model.ln_pmf_unchecked(theta, x);
            let u1 = self.model.score_unchecked(theta, x, 1);
            let u2 = self.model.score_unchecked(theta, x, 2);
            let f1a = (alpha1 * lf).exp();
            s1 += f1a;
            g1 += f1a * u1;
            h1 += f1a * (alpha1 * u1 * u1 + u2);
            abs1 += f1a * u1.abs();

            if regime == Regime::ALimitZero {
                if r == 0.0 {
                    return Err(undefined(x, &self.params));
                }
                let d = lf - r.ln();
                s2 += f1a * d;
                g2 += f1a * u1 * d;
                h2 += f1a * ((alpha1 * u1 * u1 + u2) * d + u1 * u1);
                abs2 += f1a * (u1 * d).abs();
                continue;
            }
            if r == 0.0 {
                if a < 0.0 {
                    return Err(undefined(x, &self.params));
                }
                continue;
            }
            let lr = r.ln();
            let w = (b * lf + a * lr).exp();
            g2 += w * u1;
            h2 += w * (b * u1 * u1 + u2);
            abs2 += w * u1.abs();
            s2 += if regime == Regime::BLimitZero {
                (alpha1 * lr).exp() * lf
            } else {
                w
            };
        }

        Ok(match regime {
            Regime::Generic => Evaluation {
                value: (s1 / a - alpha1 / (a * b) * s2) / alpha1,
                grad: (g1 - g2) / a,
                hess: (h1 - h2) / a,
                scale: (abs1 + abs2) / a.abs(),
            },
            Regime::BLimitZero => Evaluation {
                value: (s1 / alpha1 - s2) / alpha1,
                grad: (g1 - g2) / a,
                hess: (h1 - h2) / a,
                scale: (abs1 + abs2) / a.abs(),
            },
            Regime::ALimitZero => Evaluation {
                value: (s2 - s1 / alpha1) / alpha1,
                grad: g2,
                hess: h2,
                scale: abs2,
            },
        })
    }
}

fn undefined(x: u64, params: &DivergenceParams) -> Error {
    Error::UndefinedDivergence {
        cell: x,
        reason: format!(
            "empty cell with (alpha, lambda) = ({}, {}), A = {}",
            params.alpha, params.lambda, params.a
        ),
    }
}

pub fn objective_hn(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    theta: f64,
    params: &DivergenceParams,
) -> Result<f64> {
    Objective::from_table(model, data, *params, TruncationPolicy::default())?.value(theta)
}

pub fn gradient_hn(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    theta: f64,
    params: &DivergenceParams,
) -> Result<f64> {
    Objective::from_table(model, data, *params, TruncationPolicy::default())?.gradient(theta)
}

/// Map between the parameter interval and the real line.
#[derive(Debug, Clone, Copy)]
enum Reparam {
    Log { lower: f64 },
    Logit { lower: f64, width: f64 },
    Identity,
}

impl Reparam {
    fn for_space(space: ParamSpace) -> Self {
        match (space.lower.is_finite(), space.upper.is_finite()) {
            (true, false) => Reparam::Log { lower: space.lower },
            (true, true) => Reparam::Logit {
                lower: space.lower,
                width: space.upper - space.lower,
            },
            _ => Reparam::Identity,
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self {
            Reparam::Log { .. } => (1e-10f64.ln(), 1e5f64.ln()),
            Reparam::Logit { .. } => (-35.0, 35.0),
            Reparam::Identity => (-1e8, 1e8),
        }
    }

    fn to_eta(self, theta: f64) -> f64 {
        match self {
            Reparam::Log { lower } => (theta - lower).ln(),
            Reparam::Logit { lower, width } => {
                let p = (theta - lower) / width;
                (p / (1.0 - p)).ln()
            }
            Reparam::Identity => theta,
        }
    }

    /// `(theta, dtheta/deta, d2theta/deta2)`
    fn map(&self, eta: f64) -> (f64, f64, f64) {
        match *self {
            Reparam::Log { lower } => {
                let e = eta.exp();
                (lower + e, e, e)
            }
            Reparam::Logit { lower, width } => {
                let p = 1.0 / (1.0 + (-eta).exp());
                let d1 = width * p * (1.0 - p);
                (lower + width * p, d1, d1 * (1.0 - 2.0 * p))
            }
            Reparam::Identity => (eta, 1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    eta: f64,
    theta: f64,
    value: f64,
    grad: f64,
    scale: f64,
    g_eta: f64,
    h_eta: f64,
}

const MAX_STEP: f64 = 2.0;
const MAX_HALVINGS: usize = 60;

struct Solver<'o, 'a> {
    objective: &'o Objective<'a>,
    reparam: Reparam,
    options: FitOptions,
}

impl Solver<'_, '_> {
    /// `Ok(None)` when the objective is not finite at `eta`.
    fn point(&self, eta: f64) -> Result<Option<Point>> {
        let (theta, d1, d2) = self.reparam.map(eta);
        if !self.objective.model.param_space().contains(theta) {
            return Ok(None);
        }
        let e = self.objective.evaluate(theta)?;
        if !(e.value.is_finite() && e.grad.is_finite() && e.hess.is_finite()) {
            return Ok(None);
        }
        Ok(Some(Point {
            eta,
            theta,
            value: e.value,
            grad: e.grad,
            scale: e.scale,
            g_eta: e.grad * d1,
            h_eta: e.hess * d1 * d1 + e.grad * d2,
        }))
    }

    fn converged(&self, p: &Point) -> bool {
        p.grad == 0.0 || p.grad.abs() <= self.options.grad_tol * p.scale
    }

    fn trace(&self, start: f64, start_value: Option<f64>, p: &Point, iterations: usize, outcome: SeedOutcome) -> SeedTrace {
        SeedTrace {
            start,
            start_objective: start_value,
            theta: p.theta,
            objective: p.value,
            grad_norm: p.grad.abs(),
            iterations,
            outcome,
        }
    }

    /// Local minimization from `start`: descent until the gradient changes
    /// sign, then safeguarded Newton inside the bracket.
    fn run(&self, start: f64) -> Result<SeedTrace> {
        let (lo, hi) = self.reparam.bounds();
        let eta0 = self.reparam.to_eta(start).clamp(lo, hi);
        let Some(mut cur) = self.point(eta0)? else {
            return Ok(SeedTrace {
                start,
                start_objective: None,
                theta: start,
                objective: f64::NAN,
                grad_norm: f64::NAN,
                iterations: 0,
                outcome: SeedOutcome::NonFinite,
            });
        };
        let start_value = Some(cur.value);
        let mut iters = 0;
        let mut trial = 0.5;

        // Descent phase.
        let (mut left, mut right) = loop {
            if self.converged(&cur) {
                return Ok(self.trace(start, start_value, &cur, iters, SeedOutcome::Converged));
            }
            if iters >= self.options.max_iter {
                return Ok(self.trace(start, start_value, &cur, iters, SeedOutcome::IterationLimit));
            }
            iters += 1;
            let dir = -cur.g_eta.signum();
            let newton = cur.h_eta > 0.0;
            let mut step = if newton { -cur.g_eta / cur.h_eta } else { dir * trial };
            step = step.clamp(-MAX_STEP, MAX_STEP);
            if step == 0.0 {
                step = dir * f64::EPSILON * (1.0 + cur.eta.abs());
            }
            let mut next = None;
            for _ in 0..MAX_HALVINGS {
                let eta = (cur.eta + step).clamp(lo, hi);
                if eta == cur.eta {
                    break;
                }
                match self.point(eta)? {
                    Some(p) if p.g_eta.signum() != cur.g_eta.signum() || p.value <= cur.value => {
                        next = Some(p);
                        break;
                    }
                    _ => step *= 0.5,
                }
            }
            let Some(p) = next else {
                return Ok(self.trace(start, start_value, &cur, iters, SeedOutcome::Boundary));
            };
            if p.g_eta == 0.0 {
                return Ok(self.trace(start, start_value, &p, iters, SeedOutcome::Converged));
            }
            if p.g_eta.signum() != cur.g_eta.signum() {
                break if p.eta > cur.eta { (cur, p) } else { (p, cur) };
            }
            if !newton {
                trial = (trial * 2.0).min(MAX_STEP);
            }
            cur = p;
        };

        // Bracketed phase: g_eta(left) < 0 < g_eta(right).
        let mut best = if left.grad.abs() / left.scale <= right.grad.abs() / right.scale {
            left
        } else {
            right
        };
        let mut widths = [f64::INFINITY; 2];
        loop {
            if self.converged(&best) {
                return Ok(self.trace(start, start_value, &best, iters, SeedOutcome::Converged));
            }
            let width = right.eta - left.eta;
            if width <= 4.0 * f64::EPSILON * (1.0 + best.eta.abs()) {
                return Ok(self.trace(start, start_value, &best, iters, SeedOutcome::Stalled));
            }
            if iters >= self.options.max_iter {
                return Ok(self.trace(start, start_value, &best, iters, SeedOutcome::IterationLimit));
            }
            iters += 1;
            let mid = 0.5 * (left.eta + right.eta);
            let slow = width > 0.5 * widths[0];
            widths = [widths[1], width];
            let candidate = if best.h_eta > 0.0 && !slow {
                let n = best.eta - best.g_eta / best.h_eta;
                if n > left.eta && n < right.eta {
                    n
                } else {
                    mid
                }
            } else {
                mid
            };
            let p = match self.point(candidate)? {
                Some(p) => p,
                None => match self.point(mid)? {
                    Some(p) => p,
                    None => {
                        return Ok(self.trace(start, start_value, &best, iters, SeedOutcome::NonFinite))
                    }
                },
            };
            if p.g_eta < 0.0 {
                left = p;
            } else if p.g_eta > 0.0 {
                right = p;
            }
            best = p;
        }
    }
}

/// Deterministic multi-start set: closed-form MLE, MLE without the largest
/// observed point, a median-matching value and five points spread evenly on
/// the unconstrained scale.
pub fn start_points(model: &dyn DiscreteModel, freqs: &[(u64, f64)]) -> Vec<f64> {
    let mut starts = Vec::new();
    starts.extend(model.mle(freqs));
    if freqs.len() >= 2 {
        let trimmed = &freqs[..freqs.len() - 1];
        let mass: f64 = trimmed.iter().map(|e| e.1).sum();
        let renorm: Vec<(u64, f64)> = trimmed.iter().map(|&(x, r)| (x, r / mass)).collect();
        starts.extend(model.mle(&renorm));
    }
    let mut seen = 0.0;
    if let Some(&(median, _)) = freqs.iter().find(|e| {
        seen += e.1;
        seen >= 0.5
    }) {
        starts.extend(model.median_matching(median as f64));
    }
    let space = model.param_space();
    let reparam = Reparam::for_space(space);
    let (lo, hi) = match reparam {
        Reparam::Log { lower } => {
            let top = freqs.last().map(|e| e.0).unwrap_or(1).max(1) as f64 + 1.0;
            ((lower + 0.05).ln(), (lower + top).ln())
        }
        Reparam::Logit { .. } => (-3.0, 3.0),
        Reparam::Identity => (-10.0, 10.0),
    };
    for i in 0..5 {
        let eta = lo + (hi - lo) * i as f64 / 4.0;
        starts.push(reparam.map(eta).0);
    }
    let mut unique: Vec<f64> = Vec::with_capacity(starts.len());
    for s in starts {
        if space.contains(s) && !unique.iter().any(|u| (u - s).abs() <= 1e-9 * u.abs().max(1e-12)) {
            unique.push(s);
        }
    }
    unique
}

/// Minimizes an objective from every start point and keeps the converged
/// local minimum with the lowest objective.
pub fn fit_objective(objective: &Objective<'_>, options: &FitOptions) -> Result<FitResult> {
    let solver = Solver {
        objective,
        reparam: Reparam::for_space(objective.model.param_space()),
        options: *options,
    };
    let starts = start_points(objective.model, &objective.freqs);
    let mut seeds = Vec::with_capacity(starts.len());
    for start in starts {
        seeds.push(solver.run(start)?);
    }
    let best = seeds
        .iter()
        .filter(|s| s.outcome == SeedOutcome::Converged)
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .cloned();
    let Some(best) = best else {
        return Err(Error::NonConvergence { trace: seeds });
    };
    let grad = objective.gradient(best.theta)?;
    let grad_scale = objective.gradient_scale(best.theta)?;
    Ok(FitResult {
        theta_hat: best.theta,
        objective: best.objective,
        grad_norm: grad.abs(),
        grad_scale,
        iterations: best.iterations,
        seeds_tried: seeds.len(),
        converged: true,
        std_error: None,
        seeds,
    })
}

pub fn fit(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    params: &DivergenceParams,
    options: &FitOptions,
) -> Result<FitResult> {
    let objective = Objective::from_table(model, data, *params, options.truncation)?;
    fit_objective(&objective, options)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CellOutcome {
    Fitted(FitResult),
    Inadmissible { reason: String },
    NotConverged { seeds: Vec<SeedTrace> },
    Failed { reason: String },
}

impl CellOutcome {
    pub fn theta_hat(&self) -> Option<f64> {
        match self {
            CellOutcome::Fitted(fit) => Some(fit.theta_hat),
            _ => None,
        }
    }

    fn from_result(result: Result<FitResult>) -> Self {
        match result {
            Ok(fit) => CellOutcome::Fitted(fit),
            Err(Error::UndefinedDivergence { cell, reason }) => CellOutcome::Inadmissible {
                reason: format!("x = {cell}: {reason}"),
            },
            Err(Error::NonConvergence { trace }) => CellOutcome::NotConverged { seeds: trace },
            Err(e) => CellOutcome::Failed {
                reason: e.to_string(),
            },
        }
    }
}

/// Fits over a `lambda x alpha` grid: rows follow `lambdas`, columns `alphas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitGrid {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub cells: Vec<Vec<CellOutcome>>,
}

impl FitGrid {
    pub fn cell(&self, lambda: f64, alpha: f64) -> Option<&CellOutcome> {
        let i = self.lambdas.iter().position(|&l| l == lambda)?;
        let j = self.alphas.iter().position(|&a| a == alpha)?;
        Some(&self.cells[i][j])
    }
}

pub fn fit_grid(
    data: &FrequencyTable,
    model: &dyn DiscreteModel,
    alphas: &[f64],
    lambdas: &[f64],
    options: &FitOptions,
) -> Result<FitGrid> {
    if alphas.is_empty() || lambdas.is_empty() {
        return Err(Error::invalid("grid needs at least one alpha and one lambda"));
    }
    let pairs: Vec<(f64, f64)> = lambdas
        .iter()
        .flat_map(|&l| alphas.iter().map(move |&a| (l, a)))
        .collect();
    let flat: Vec<CellOutcome> = pairs
        .par_iter()
        .map(|&(lambda, alpha)| {
            CellOutcome::from_result(
                DivergenceParams::new(alpha, lambda).and_then(|p| fit(data, model, &p, options)),
            )
        })
        .collect();
    let cells = flat.chunks(alphas.len()).map(<[CellOutcome]>::to_vec).collect();
    Ok(FitGrid {
        alphas: alphas.to_vec(),
        lambdas: lambdas.to_vec(),
        cells,
    })
}
