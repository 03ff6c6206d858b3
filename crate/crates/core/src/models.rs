//! Discrete parametric families.
//!
//! A model supplies its log-pmf, the first three derivatives of the log-pmf
//! in `theta`, an open parameter interval and the first support point.
//! Everything else in the crate (truncation, sampling, objectives,
//! asymptotic variances) is generic over [`DiscreteModel`].
//!
//! All evaluation is done in log space; callers assemble series terms as
//! `exp(c * ln_pmf)` so powers of `x!` never overflow.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::table::FrequencyTable;

/// Open interval `(lower, upper)` of admissible parameter values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub lower: f64,
    pub upper: f64,
}

impl ParamSpace {
    pub fn contains(&self, theta: f64) -> bool {
        theta.is_finite() && theta > self.lower && theta < self.upper
    }
}

pub trait DiscreteModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn param_space(&self) -> ParamSpace;

    fn support_origin(&self) -> u64;

    /// `ln f_theta(x)` without domain checks.
    fn ln_pmf_unchecked(&self, theta: f64, x: u64) -> f64;

    /// `d^order/dtheta^order ln f_theta(x)` for `order` in 1..=3, without
    /// domain checks.
    fn score_unchecked(&self, theta: f64, x: u64, order: u8) -> f64;

    fn fisher_closed_form(&self, _theta: f64) -> Option<f64> {
        None
    }

    /// Closed-form maximum likelihood estimate from relative frequencies.
    fn mle(&self, _freqs: &[(u64, f64)]) -> Option<f64> {
        None
    }

    /// Parameter whose model median is (approximately) `median`.
    fn median_matching(&self, _median: f64) -> Option<f64> {
        None
    }

    /// Log-concave pmfs have non-increasing ratios `f(x+1)/f(x)`, which
    /// lets truncation bound the tail geometrically.
    fn log_concave(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Poisson;

impl DiscreteModel for Poisson {
    fn name(&self) -> &'static str {
        "poisson"
    }

    fn param_space(&self) -> ParamSpace {
        ParamSpace {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    fn support_origin(&self) -> u64 {
        0
    }

    fn ln_pmf_unchecked(&self, theta: f64, x: u64) -> f64 {
        if x == 0 {
            return -theta;
        }
        x as f64 * theta.ln() - theta - ln_factorial(x)
    }

    fn score_unchecked(&self, theta: f64, x: u64, order: u8) -> f64 {
        let x = x as f64;
        match order {
            1 => x / theta - 1.0,
            2 => -x / (theta * theta),
            _ => 2.0 * x / (theta * theta * theta),
        }
    }

    fn fisher_closed_form(&self, theta: f64) -> Option<f64> {
        Some(1.0 / theta)
    }

    fn mle(&self, freqs: &[(u64, f64)]) -> Option<f64> {
        let mean: f64 = freqs.iter().map(|&(x, r)| x as f64 * r).sum();
        (mean > 0.0).then_some(mean)
    }

    fn median_matching(&self, median: f64) -> Option<f64> {
        // Poisson median is close to theta + 1/3 for moderate theta.
        Some((median - 1.0 / 3.0).max(0.05))
    }
    fn log_concave(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometric;

impl DiscreteModel for Geometric {
    fn name(&self) -> &'static str {
        "geometric"
    }

    fn param_space(&self) -> ParamSpace {
        ParamSpace {
            lower: 0.0,
            upper: 1.0,
        }
    }

    fn support_origin(&self) -> u64 {
        1
    }

    fn ln_pmf_unchecked(&self, theta: f64, x: u64) -> f64 {
        let k = (x - 1) as f64;
        if k == 0.0 {
            return theta.ln();
        }
        theta.ln() + k * (-theta).ln_1p()
    }

    fn score_unchecked(&self, theta: f64, x: u64, order: u8) -> f64 {
        let k = (x - 1) as f64;
        let q = 1.0 - theta;
        match order {
            1 => 1.0 / theta - k / q,
            2 => -1.0 / (theta * theta) - k / (q * q),
            _ => 2.0 / (theta * theta * theta) - 2.0 * k / (q * q * q),
        }
    }

    fn fisher_closed_form(&self, theta: f64) -> Option<f64> {
        Some(1.0 / (theta * theta * (1.0 - theta)))
    }

    fn mle(&self, freqs: &[(u64, f64)]) -> Option<f64> {
        let mean: f64 = freqs.iter().map(|&(x, r)| x as f64 * r).sum();
        let theta = 1.0 / mean;
        (theta > 0.0 && theta < 1.0).then_some(theta)
    }

    fn median_matching(&self, median: f64) -> Option<f64> {
        // P(X <= m) = 1 - (1 - theta)^m = 1/2
        let theta = 1.0 - 0.5f64.powf(1.0 / median.max(1.0));
        (theta > 0.0 && theta < 1.0).then_some(theta)
    }
    fn log_concave(&self) -> bool {
        true
    }
}

/// Shipped models, selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Poisson,
    Geometric,
}

impl Model {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "poisson" => Ok(Model::Poisson),
            "geometric" => Ok(Model::Geometric),
            other => Err(Error::invalid(format!("unknown model '{other}'"))),
        }
    }

    pub fn family(&self) -> &'static dyn DiscreteModel {
        match self {
            Model::Poisson => &Poisson,
            Model::Geometric => &Geometric,
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.family().name())
    }
}

pub(crate) fn check_theta(model: &dyn DiscreteModel, theta: f64) -> Result<()> {
    let space = model.param_space();
    if space.contains(theta) {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            model: model.name(),
            theta,
            lower: space.lower,
            upper: space.upper,
        })
    }
}

pub(crate) fn check_support(model: &dyn DiscreteModel, x: u64) -> Result<()> {
    if x < model.support_origin() {
        Err(Error::BelowSupport {
            model: model.name(),
            x,
            origin: model.support_origin(),
        })
    } else {
        Ok(())
    }
}

pub fn ln_pmf(model: &dyn DiscreteModel, theta: f64, x: u64) -> Result<f64> {
    check_theta(model, theta)?;
    check_support(model, x)?;
    Ok(model.ln_pmf_unchecked(theta, x))
}

pub fn pmf(model: &dyn DiscreteModel, theta: f64, x: u64) -> Result<f64> {
    ln_pmf(model, theta, x).map(f64::exp)
}

pub fn score(model: &dyn DiscreteModel, theta: f64, x: u64, order: u8) -> Result<f64> {
    if !(1..=3).contains(&order) {
        return Err(Error::invalid(format!(
            "score order must be 1, 2 or 3, got {order}"
        )));
    }
    check_theta(model, theta)?;
    check_support(model, x)?;
    Ok(model.score_unchecked(theta, x, order))
}

/// Fisher information, from the closed form when the model has one and
/// from the truncated series otherwise.
pub fn fisher_information(model: &dyn DiscreteModel, theta: f64) -> Result<f64> {
    check_theta(model, theta)?;
    match model.fisher_closed_form(theta) {
        Some(i) => Ok(i),
        None => fisher_information_series(model, theta, &TruncationPolicy::default()),
    }
}

/// `sum_x u_theta(x)^2 f_theta(x)` over the truncated support.
pub fn fisher_information_series(
    model: &dyn DiscreteModel,
    theta: f64,
    policy: &TruncationPolicy,
) -> Result<f64> {
    check_theta(model, theta)?;
    let upper = truncation_point(model, theta, policy)?;
    let mut acc = NeumaierSum::default();
    for x in model.support_origin()..=upper {
        let u = model.score_unchecked(theta, x, 1);
        acc.add(u * u * model.ln_pmf_unchecked(theta, x).exp());
    }
    Ok(acc.total())
}

/// How infinite supports are cut down to finite sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub mass_tolerance: f64,
    pub hard_cap: u64,
    /// Largest observed support point; always inside the truncated range.
    pub data_max: u64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            mass_tolerance: 1e-12,
            hard_cap: 1_000_000,
            data_max: 0,
        }
    }
}

impl TruncationPolicy {
    pub fn with_data_max(mut self, data_max: u64) -> Self {
        self.data_max = data_max;
        self
    }
}

/// Smallest `T >= data_max` with `sum_{x <= T} f_theta(x) >= 1 - mass_tolerance`.
///
/// For log-concave models the tail past `T` is also bounded by
/// `f(T+1) / (1 - f(T+1)/f(T))`; once that bound is within tolerance the
/// mass condition holds even when rounding keeps the running sum short of it.
pub fn truncation_point(
    model: &dyn DiscreteModel,
    theta: f64,
    policy: &TruncationPolicy,
) -> Result<u64> {
    check_theta(model, theta)?;
    let target = 1.0 - policy.mass_tolerance;
    let mut mass = NeumaierSum::default();
    let mut x = model.support_origin();
    loop {
        if x > policy.hard_cap {
            return Err(Error::Truncation {
                cap: policy.hard_cap,
                achieved_mass: mass.total(),
            });
        }
        let lf = model.ln_pmf_unchecked(theta, x);
        mass.add(lf.exp());
        if x >= policy.data_max {
            if mass.total() >= target {
                return Ok(x);
            }
            if model.log_concave() {
                let next = model.ln_pmf_unchecked(theta, x + 1);
                let ratio = (next - lf).exp();
                if ratio < 1.0 && next.exp() / (1.0 - ratio) <= policy.mass_tolerance {
                    return Ok(x);
                }
            }
        }
        x += 1;
    }
}

/// Inversion sampler over a cumulative table of the pmf.
#[derive(Clone)]
pub struct Sampler<'a> {
    model: &'a dyn DiscreteModel,
    theta: f64,
    cdf: Vec<f64>,
    cap: u64,
}

impl<'a> Sampler<'a> {
    pub fn new(model: &'a dyn DiscreteModel, theta: f64) -> Result<Self> {
        let policy = TruncationPolicy::default();
        let upper = truncation_point(model, theta, &policy)?;
        let mut acc = NeumaierSum::default();
        let cdf = (model.support_origin()..=upper)
            .map(|x| {
                acc.add(model.ln_pmf_unchecked(theta, x).exp());
                acc.total()
            })
            .collect();
        Ok(Self {
            model,
            theta,
            cdf,
            cap: policy.hard_cap,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        let origin = self.model.support_origin();
        if idx < self.cdf.len() {
            return origin + idx as u64;
        }
        // Beyond the table (probability below the truncation tolerance).
        let mut cum = *self.cdf.last().unwrap_or(&0.0);
        let mut x = origin + self.cdf.len() as u64;
        while x < self.cap {
            cum += self.model.ln_pmf_unchecked(self.theta, x).exp();
            if cum > u {
                break;
            }
            x += 1;
        }
        x
    }
}

/// `n` i.i.d. draws from `f_theta`, aggregated.
pub fn sample(model: &dyn DiscreteModel, theta: f64, n: u64, seed: u64) -> Result<FrequencyTable> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let sampler = Sampler::new(model, theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FrequencyTable::from_observations((0..n).map(|_| sampler.draw(&mut rng)))
}

/// Compensated summation; the truncation and series code relies on it to
/// keep `1 - mass` meaningful near `1e-12`.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}
