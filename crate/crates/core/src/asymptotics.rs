//! Asymptotic variance of the minimum S-divergence estimator.
//!
//! At the model the sandwich `J^-1 V J^-1` uses
//! `J = sum u^2 f^(1+alpha)`, `xi = sum u f^(1+alpha)` and
//! `V = sum u^2 f^(1+2 alpha) - xi^2`, none of which involve `lambda`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{power_log_ratio, DivergenceParams, PmfVector};
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::models::{check_theta, fisher_information, truncation_point, DiscreteModel, NeumaierSum, TruncationPolicy};
use crate::table::FrequencyTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMoments {
    pub j: f64,
    pub xi: f64,
    pub v: f64,
}

/// Score-weighted tails decay slower than the mass, so moment sums run
/// further out than the default truncation.
const MOMENT_TOLERANCE: f64 = 1e-16;

fn moment_policy() -> TruncationPolicy {
    TruncationPolicy {
        mass_tolerance: MOMENT_TOLERANCE,
        ..TruncationPolicy::default()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// `J`, `xi` and `V` at `f_theta` from truncated sums.
pub fn model_moments(model: &dyn DiscreteModel, theta: f64, alpha: f64) -> Result<ModelMoments> {
    check_alpha(alpha)?;
    check_theta(model, theta)?;
    let upper = truncation_point(model, theta, &moment_policy())?;
    let (mut j, mut xi, mut w) = (NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default());
    for x in model.support_origin()..=upper {
        let lf = model.ln_pmf_unchecked(theta, x);
        let u = model.score_unchecked(theta, x, 1);
        let f1 = ((1.0 + alpha) * lf).exp();
        j.add(u * u * f1);
        xi.add(u * f1);
        w.add(u * u * ((1.0 + 2.0 * alpha) * lf).exp());
    }
    let xi = xi.total();
    Ok(ModelMoments {
        j: j.total(),
        xi,
        v: w.total() - xi * xi,
    })
}

pub fn model_j(model: &dyn DiscreteModel, theta: f64, alpha: f64) -> Result<f64> {
    model_moments(model, theta, alpha).map(|m| m.j)
}

pub fn model_v(model: &dyn DiscreteModel, theta: f64, alpha: f64) -> Result<f64> {
    model_moments(model, theta, alpha).map(|m| m.v)
}

pub fn xi(model: &dyn DiscreteModel, theta: f64, alpha: f64) -> Result<f64> {
    model_moments(model, theta, alpha).map(|m| m.xi)
}

/// Closed forms for the Geometric model on `{1, 2, ...}` with
/// `q = 1 - theta`, `s = q^(1+alpha)`, `t = 1 - s`.
pub fn geometric_closed_form(theta: f64, alpha: f64) -> ModelMoments {
    let j_at = |a: f64| {
        let q = 1.0 - theta;
        let s = q.powf(1.0 + a);
        let t = 1.0 - s;
        theta.powf(a - 1.0) * (q * q * t * t - 2.0 * theta * q * s * t + theta * theta * s * (1.0 + s))
            / (q * q * t * t * t)
    };
    let q = 1.0 - theta;
    let t = 1.0 - q.powf(1.0 + alpha);
    let xi = theta.powf(alpha) * (1.0 - q.powf(alpha)) / (t * t);
    ModelMoments {
        j: j_at(alpha),
        xi,
        v: j_at(2.0 * alpha) - xi * xi,
    }
}

/// Asymptotic variance of `sqrt(n) (theta_hat - theta)` at the model.
pub fn sandwich_variance(model: &dyn DiscreteModel, theta: f64, alpha: f64) -> Result<f64> {
    let m = model_moments(model, theta, alpha)?;
    sandwich(m.j, m.v)
}

fn sandwich(j: f64, v: f64) -> Result<f64> {
    if j.is_nan() || j <= 0.0 {
        return Err(Error::DegenerateInformation { j });
    }
    Ok(v / (j * j))
}

/// Asymptotic relative efficiency against the MLE, in percent.
pub fn are(model: &dyn DiscreteModel, theta: f64, alpha: f64) -> Result<f64> {
    let s = sandwich_variance(model, theta, alpha)?;
    Ok(100.0 / fisher_information(model, theta)? / s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub model: String,
    pub theta: f64,
    pub alpha: f64,
    pub j: f64,
    pub v: f64,
    pub xi: f64,
    pub sandwich: f64,
    pub fisher: f64,
    pub are_percent: f64,
}

pub fn report(model: &dyn DiscreteModel, theta: f64, alpha: f64) -> Result<AsymptoticReport> {
    let m = model_moments(model, theta, alpha)?;
    let s = sandwich(m.j, m.v)?;
    let fisher = fisher_information(model, theta)?;
    Ok(AsymptoticReport {
        model: model.name().to_string(),
        theta,
        alpha,
        j: m.j,
        v: m.v,
        xi: m.xi,
        sandwich: s,
        fisher,
        are_percent: 100.0 / fisher / s,
    })
}

/// ARE percentages, rows follow `thetas` and columns `alphas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreTable {
    pub model: String,
    pub thetas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub fn are_table(model: &dyn DiscreteModel, thetas: &[f64], alphas: &[f64]) -> Result<AreTable> {
    let values = thetas
        .par_iter()
        .map(|&theta| alphas.iter().map(|&a| are(model, theta, a)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(AreTable {
        model: model.name().to_string(),
        thetas: thetas.to_vec(),
        alphas: alphas.to_vec(),
        values,
    })
}

/// `J_g` and `V_g` when the data come from `g` and `theta_g` is the
/// best-fitting parameter for `g`.
///
/// `J_g` is the derivative of the estimating equation
/// `sum K(delta) f^(1+alpha) u` with `delta = g/f - 1`, so it also picks up
/// the `(1+alpha) u^2` from differentiating `f^(1+alpha)`. `V_g` is the
/// variance under `g` of `K'(delta) f^alpha u`.
pub fn general_jg_vg(
    g: &PmfVector,
    model: &dyn DiscreteModel,
    theta_g: f64,
    params: &DivergenceParams,
) -> Result<(f64, f64)> {
    check_theta(model, theta_g)?;
    let policy = moment_policy().with_data_max(g.end().saturating_sub(1));
    let upper = truncation_point(model, theta_g, &policy)?;
    let (a, b) = (params.a_eff(), params.b_eff());
    let alpha1 = 1.0 + params.alpha;
    let (mut j, mut m1, mut m2) = (NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default());
    for x in model.support_origin().min(g.origin())..=upper {
        let gx = g.mass(x);
        if x < model.support_origin() {
            if gx > 0.0 {
                return Err(Error::BelowSupport {
                    model: model.name(),
                    x,
                    origin: model.support_origin(),
                });
            }
            continue;
        }
        let lf = model.ln_pmf_unchecked(theta_g, x);
        let u = model.score_unchecked(theta_g, x, 1);
        let u2 = model.score_unchecked(theta_g, x, 2);
        let f1 = (alpha1 * lf).exp();
        let k = if gx > 0.0 {
            power_log_ratio(a, gx.ln() - lf)
        } else if a > 0.0 {
            -1.0 / a
        } else {
            return Err(Error::UndefinedDivergence {
                cell: x,
                reason: format!("g has no mass here and A = {a}"),
            });
        };
        j.add(-k * f1 * (alpha1 * u * u + u2));
        if gx > 0.0 {
            let lg = gx.ln();
            // K'(delta) f^alpha g = g^A f^B and K'(delta) f^alpha = g^(A-1) f^B
            j.add((a * lg + b * lf).exp() * u * u);
            let psi = ((a - 1.0) * lg + b * lf).exp() * u;
            m1.add(gx * psi);
            m2.add(gx * psi * psi);
        }
    }
    let mean = m1.total();
    Ok((j.total(), m2.total() - mean * mean))
}

/// Sandwich variance `J_g^-1 V_g J_g^-1` under `g`.
pub fn general_sandwich(
    g: &PmfVector,
    model: &dyn DiscreteModel,
    theta_g: f64,
    params: &DivergenceParams,
) -> Result<f64> {
    let (j, v) = general_jg_vg(g, model, theta_g, params)?;
    sandwich(j, v)
}

/// Model-based standard error of a fitted parameter.
pub fn std_error(fit: &FitResult, data: &FrequencyTable, model: &dyn DiscreteModel, alpha: f64) -> Result<f64> {
    Ok((sandwich_variance(model, fit.theta_hat, alpha)? / data.n() as f64).sqrt())
}
