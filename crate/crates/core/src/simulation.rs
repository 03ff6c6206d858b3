//! Monte Carlo checks of the estimator's large-sample behaviour.
//!
//! Replicate `i` of a plan draws its data from a ChaCha8 stream keyed by
//! `(seed, i)`, so results do not depend on scheduling and plans that differ
//! only in `(alpha, lambda)` see the same datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::asymptotics::sandwich_variance;
use crate::divergence::DivergenceParams;
use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions};
use crate::models::{check_support, check_theta, Model, NeumaierSum, Sampler};
use crate::table::FrequencyTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contamination {
    pub epsilon: f64,
    pub location: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPlan {
    pub model: Model,
    pub theta_true: f64,
    pub n: u64,
    pub replicates: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub contamination: Option<Contamination>,
    pub seed: u64,
}

impl SimPlan {
    pub fn validate(&self) -> Result<()> {
        let m = self.model.family();
        check_theta(m, self.theta_true)?;
        DivergenceParams::new(self.alpha, self.lambda)?;
        if self.n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        if let Some(c) = self.contamination {
            if !(0.0..1.0).contains(&c.epsilon) {
                return Err(Error::invalid(format!("epsilon must lie in [0, 1), got {}", c.epsilon)));
            }
            check_support(m, c.location)?;
        }
        Ok(())
    }

    fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", content = "theta_hat", rename_all = "snake_case")]
pub enum ReplicateOutcome {
    Fitted(f64),
    Inadmissible,
    NotConverged,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityTest {
    /// Anderson-Darling statistic with the small-sample correction for
    /// estimated mean and variance.
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub plan: SimPlan,
    pub successes: usize,
    pub failure_count: usize,
    pub inadmissible: usize,
    pub not_converged: usize,
    pub mean_theta_hat: f64,
    /// `None` with fewer than two successful replicates.
    pub sd_theta_hat: Option<f64>,
    /// Sample variance of `sqrt(n) (theta_hat - theta)`.
    pub empirical_var_scaled: Option<f64>,
    /// Model-case sandwich variance at `theta_true`.
    pub theoretical_sandwich: f64,
    pub normality: Option<NormalityTest>,
}

/// Dataset of replicate `index`.
pub fn replicate_data(plan: &SimPlan, sampler: &Sampler<'_>, index: u64) -> Result<FrequencyTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(index);
    let draws = (0..plan.n).map(|_| match plan.contamination {
        Some(c) if rng.random::<f64>() < c.epsilon => c.location,
        _ => sampler.draw(&mut rng),
    });
    FrequencyTable::from_observations(draws.collect::<Vec<_>>())
}

fn replicate(plan: &SimPlan, sampler: &Sampler<'_>, params: &DivergenceParams, index: u64) -> ReplicateOutcome {
    let Ok(data) = replicate_data(plan, sampler, index) else {
        return ReplicateOutcome::Failed;
    };
    match fit(&data, plan.model.family(), params, &FitOptions::default()) {
        Ok(r) => ReplicateOutcome::Fitted(r.theta_hat),
        Err(Error::UndefinedDivergence { .. }) => ReplicateOutcome::Inadmissible,
        Err(Error::NonConvergence { .. }) => ReplicateOutcome::NotConverged,
        Err(_) => ReplicateOutcome::Failed,
    }
}

/// Per-replicate outcomes in replicate order.
pub fn run_replicates(plan: &SimPlan) -> Result<Vec<ReplicateOutcome>> {
    plan.validate()?;
    let params = DivergenceParams::new(plan.alpha, plan.lambda)?;
    let sampler = Sampler::new(plan.model.family(), plan.theta_true)?;
    Ok((0..plan.replicates as u64)
        .into_par_iter()
        .map(|i| replicate(plan, &sampler, &params, i))
        .collect())
}

pub fn run_plan(plan: &SimPlan) -> Result<SimReport> {
    let outcomes = run_replicates(plan)?;
    summarize(plan, &outcomes)
}

fn summarize(plan: &SimPlan, outcomes: &[ReplicateOutcome]) -> Result<SimReport> {
    let thetas: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match o {
            ReplicateOutcome::Fitted(t) => Some(*t),
            _ => None,
        })
        .collect();
    if thetas.is_empty() {
        return Err(Error::AllReplicatesFailed {
            replicates: plan.replicates,
        });
    }
    let count = |want: ReplicateOutcome| outcomes.iter().filter(|o| **o == want).count();
    let k = thetas.len() as f64;
    let mut sum = NeumaierSum::default();
    thetas.iter().for_each(|t| sum.add(*t));
    let mean = sum.total() / k;
    let var = (thetas.len() >= 2).then(|| {
        let mut ss = NeumaierSum::default();
        thetas.iter().for_each(|t| ss.add((t - mean) * (t - mean)));
        ss.total() / (k - 1.0)
    });
    let normality = match var {
        Some(v) if thetas.len() >= 8 && v > 0.0 => {
            let sd = v.sqrt();
            let z: Vec<f64> = thetas.iter().map(|t| (t - mean) / sd).collect();
            Some(anderson_darling(&z))
        }
        _ => None,
    };
    Ok(SimReport {
        plan: plan.clone(),
        successes: thetas.len(),
        failure_count: outcomes.len() - thetas.len(),
        inadmissible: count(ReplicateOutcome::Inadmissible),
        not_converged: count(ReplicateOutcome::NotConverged),
        mean_theta_hat: mean,
        sd_theta_hat: var.map(f64::sqrt),
        empirical_var_scaled: var.map(|v| v * plan.n as f64),
        theoretical_sandwich: sandwich_variance(plan.model.family(), plan.theta_true, plan.alpha)?,
        normality,
    })
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Anderson-Darling test of standardized values against N(0, 1) when mean
/// and variance were estimated from the same values.
pub fn anderson_darling(z: &[f64]) -> NormalityTest {
    let mut z = z.to_vec();
    z.sort_by(f64::total_cmp);
    let n = z.len();
    let nf = n as f64;
    let mut acc = NeumaierSum::default();
    for i in 0..n {
        let lower = std_normal_cdf(z[i]).ln();
        let upper = std_normal_cdf(-z[n - 1 - i]).ln();
        acc.add((2.0 * i as f64 + 1.0) * (lower + upper));
    }
    let a2 = -nf - acc.total() / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    NormalityTest {
        statistic: a,
        p_value: p.clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCheck {
    pub lambdas: Vec<f64>,
    pub variances: Vec<f64>,
    /// Largest pairwise difference of the scaled variances, relative to
    /// their mean.
    pub max_rel_diff: f64,
    pub noise_band: f64,
    pub within_band: bool,
    pub reports: Vec<SimReport>,
}

/// Runs `base` once per `lambda` on shared datasets and compares the
/// scaled variances. The band is three standard deviations of the
/// difference of two independent variance estimates from `R` replicates,
/// `3 sqrt(2) sqrt(2/(R-1))`; shared datasets only make the difference
/// less variable.
pub fn lambda_independence_check(base: &SimPlan, lambdas: &[f64]) -> Result<LambdaCheck> {
    if lambdas.is_empty() {
        return Err(Error::invalid("need at least one lambda"));
    }
    let reports = lambdas
        .iter()
        .map(|&l| run_plan(&base.with_lambda(l)))
        .collect::<Result<Vec<_>>>()?;
    let variances: Vec<f64> = reports
        .iter()
        .map(|r| r.empirical_var_scaled.unwrap_or(f64::NAN))
        .collect();
    let r = base.replicates as f64;
    let noise_band = if base.replicates >= 2 {
        3.0 * 2f64.sqrt() * (2.0 / (r - 1.0)).sqrt()
    } else {
        f64::INFINITY
    };
    let mean = variances.iter().sum::<f64>() / variances.len() as f64;
    let mut max_diff: f64 = 0.0;
    for (i, a) in variances.iter().enumerate() {
        for b in &variances[i + 1..] {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    let max_rel_diff = if lambdas.len() == 1 { 0.0 } else { max_diff / mean };
    Ok(LambdaCheck {
        lambdas: lambdas.to_vec(),
        variances,
        max_rel_diff,
        noise_band,
        within_band: max_rel_diff <= noise_band,
        reports,
    })
}
