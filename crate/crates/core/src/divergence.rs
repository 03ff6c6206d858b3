//! The two-parameter S-divergence family and its estimating-equation kernel.
//!
//! With `A = 1 + lambda (1 - alpha)` and `B = alpha - lambda (1 - alpha)`,
//!
//! ```text
//! S(g, f) = 1/A sum f^(1+alpha) - (1+alpha)/(A B) sum f^B g^A + 1/B sum g^(1+alpha)
//! ```
//!
//! with logarithmic limit forms when `A = 0` or `B = 0`. `alpha = 0` gives
//! the Cressie-Read power divergences, `lambda = 0` the density power
//! divergences and `alpha = 1` the squared L2 distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DiscreteModel, TruncationPolicy};

/// Exponents with `|A|` or `|B|` at or below this use the limit formulas.
pub const LIMIT_THRESHOLD: f64 = 1e-12;

/// Below this `|c L|`, `expm1(c L) / c` is replaced by its first-order
/// expansion.
const SERIES_SWITCH: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Generic,
    ALimitZero,
    BLimitZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceParams {
    pub alpha: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub regime: Regime,
}

impl DivergenceParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite, got {lambda}")));
        }
        let a = 1.0 + lambda * (1.0 - alpha);
        let b = alpha - lambda * (1.0 - alpha);
        debug_assert!((a + b - (1.0 + alpha)).abs() <= 1e-14 * (1.0 + lambda.abs()));
        let regime = if a.abs() <= LIMIT_THRESHOLD {
            Regime::ALimitZero
        } else if b.abs() <= LIMIT_THRESHOLD {
            Regime::BLimitZero
        } else {
            Regime::Generic
        };
        Ok(Self {
            alpha,
            lambda,
            a,
            b,
            regime,
        })
    }

    /// `A`, snapped to zero in the `A -> 0` regime.
    pub(crate) fn a_eff(&self) -> f64 {
        if self.regime == Regime::ALimitZero {
            0.0
        } else {
            self.a
        }
    }

    /// `B`, snapped to zero in the `B -> 0` regime.
    pub(crate) fn b_eff(&self) -> f64 {
        if self.regime == Regime::BLimitZero {
            0.0
        } else {
            self.b
        }
    }
}

/// `(e^(c l) - 1) / c`, continuous at `c = 0` where it equals `l`.
pub(crate) fn power_log_ratio(c: f64, l: f64) -> f64 {
    let cl = c * l;
    if c == 0.0 {
        l
    } else if cl.abs() < SERIES_SWITCH {
        l * (1.0 + 0.5 * cl)
    } else {
        cl.exp_m1() / c
    }
}

/// A probability vector on `origin, origin + 1, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfVector {
    origin: u64,
    masses: Vec<f64>,
}

impl PmfVector {
    pub fn new(origin: u64, masses: Vec<f64>) -> Result<Self> {
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::invalid("pmf masses must be finite and nonnegative"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("pmf masses sum to {total}, not 1")));
        }
        Ok(Self { origin, masses })
    }

    /// Model masses on `support_origin..=T`, `T` from the truncation policy.
    pub fn from_model(
        model: &dyn DiscreteModel,
        theta: f64,
        policy: &TruncationPolicy,
    ) -> Result<Self> {
        let upper = crate::models::truncation_point(model, theta, policy)?;
        let origin = model.support_origin();
        let masses = (origin..=upper)
            .map(|x| model.ln_pmf_unchecked(theta, x).exp())
            .collect();
        Self::new(origin, masses)
    }

    /// Relative frequencies on the dense range `origin..=max`.
    pub fn from_frequencies(origin: u64, freqs: &[(u64, f64)]) -> Result<Self> {
        let end = freqs.iter().map(|e| e.0).max().unwrap_or(origin).max(origin);
        let mut masses = vec![0.0; (end - origin + 1) as usize];
        for &(x, r) in freqs {
            if x < origin {
                return Err(Error::invalid(format!("support point {x} below origin {origin}")));
            }
            masses[(x - origin) as usize] += r;
        }
        Self::new(origin, masses)
    }

    pub fn origin(&self) -> u64 {
        self.origin
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// One past the last support point carried.
    pub fn end(&self) -> u64 {
        self.origin + self.masses.len() as u64
    }

    pub fn mass(&self, x: u64) -> f64 {
        if x < self.origin {
            return 0.0;
        }
        self.masses
            .get((x - self.origin) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    /// Nonzero cells as `(x, mass)`.
    pub fn nonzero(&self) -> Vec<(u64, f64)> {
        (self.origin..self.end())
            .map(|x| (x, self.mass(x)))
            .filter(|e| e.1 > 0.0)
            .collect()
    }
}

/// Contribution of one support point to `S(g, f)`.
///
/// For `g, f > 0` this is `f^B g^A [phi_A(L) + phi_B(-L)]` with
/// `L = ln(f/g)` and `phi_c(L) = (e^(cL) - 1)/c`, an algebraic rearrangement
/// of the defining sum that stays accurate as `A` or `B` approach zero.
pub(crate) fn cell(g: f64, f: f64, params: &DivergenceParams, x: u64) -> Result<f64> {
    let one_alpha = 1.0 + params.alpha;
    let (a, b) = (params.a_eff(), params.b_eff());
    match (g > 0.0, f > 0.0) {
        (false, false) => Ok(0.0),
        (true, true) => {
            let (lg, lf) = (g.ln(), f.ln());
            let l = lf - lg;
            let weight = (b * lf + a * lg).exp();
            Ok(weight * (power_log_ratio(a, l) + power_log_ratio(b, -l)))
        }
        (false, true) => {
            if a > 0.0 {
                Ok(f.powf(one_alpha) / a)
            } else {
                Err(Error::UndefinedDivergence {
                    cell: x,
                    reason: format!("empty data cell with model mass and A = {}", params.a),
                })
            }
        }
        (true, false) => {
            if b > 0.0 {
                Ok(g.powf(one_alpha) / b)
            } else {
                Err(Error::UndefinedDivergence {
                    cell: x,
                    reason: format!("empty model cell with data mass and B = {}", params.b),
                })
            }
        }
    }
}

/// `S_(alpha, lambda)(g, f)` over the union of the two supports.
pub fn s_divergence(g: &PmfVector, f: &PmfVector, params: &DivergenceParams) -> Result<f64> {
    let start = g.origin().min(f.origin());
    let end = g.end().max(f.end());
    let mut acc = crate::models::NeumaierSum::default();
    for x in start..end {
        acc.add(cell(g.mass(x), f.mass(x), params, x)?);
    }
    Ok(acc.total())
}

/// `K(delta) = ((delta + 1)^A - 1) / A`, or `ln(delta + 1)` when `A -> 0`.
pub fn kernel_k(delta: f64, params: &DivergenceParams) -> Result<f64> {
    let a = params.a_eff();
    check_delta(delta, a)?;
    if delta == -1.0 {
        return if a > 0.0 {
            Ok(-1.0 / a)
        } else {
            Err(Error::KernelSingularity { delta, a: params.a })
        };
    }
    Ok(power_log_ratio(a, delta.ln_1p()))
}

/// `K'(delta) = (delta + 1)^(A - 1)` and `K''(delta) = (A - 1)(delta + 1)^(A - 2)`.
pub fn kernel_k_deriv(delta: f64, params: &DivergenceParams, order: u8) -> Result<f64> {
    let a = params.a_eff();
    check_delta(delta, a)?;
    let (coef, exponent) = match order {
        1 => (1.0, a - 1.0),
        2 => (a - 1.0, a - 2.0),
        _ => {
            return Err(Error::invalid(format!(
                "kernel derivative order must be 1 or 2, got {order}"
            )))
        }
    };
    if delta == -1.0 {
        return if coef == 0.0 || exponent > 0.0 {
            Ok(0.0)
        } else if exponent == 0.0 {
            Ok(coef)
        } else {
            Err(Error::KernelSingularity { delta, a: params.a })
        };
    }
    Ok(coef * (exponent * delta.ln_1p()).exp())
}

fn check_delta(delta: f64, a: f64) -> Result<()> {
    if delta.is_nan() || delta < -1.0 {
        return Err(Error::KernelSingularity { delta, a });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pv(m: &[f64]) -> PmfVector {
        PmfVector::new(0, m.to_vec()).unwrap()
    }

    fn random_pmf(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    /// Cressie-Read power divergence, coded from its own definition.
    fn power_divergence(g: &[f64], f: &[f64], lambda: f64) -> f64 {
        if lambda == 0.0 {
            return g.iter().zip(f).map(|(g, f)| g * (g / f).ln()).sum();
        }
        if lambda == -1.0 {
            return f.iter().zip(g).map(|(f, g)| f * (f / g).ln()).sum();
        }
        let s: f64 = g
            .iter()
            .zip(f)
            .map(|(g, f)| g * ((g / f).powf(lambda) - 1.0))
            .sum();
        s / (lambda * (lambda + 1.0))
    }

    /// Density power divergence, coded from its own definition.
    fn density_power_divergence(g: &[f64], f: &[f64], alpha: f64) -> f64 {
        if alpha == 0.0 {
            return g.iter().zip(f).map(|(g, f)| g * (g / f).ln()).sum();
        }
        g.iter()
            .zip(f)
            .map(|(g, f)| {
                f.powf(1.0 + alpha) - (1.0 + alpha) / alpha * f.powf(alpha) * g
                    + g.powf(1.0 + alpha) / alpha
            })
            .sum()
    }

    /// Direct transcription of the defining three-sum form (generic regime).
    fn brute_force(g: &[f64], f: &[f64], alpha: f64, lambda: f64) -> f64 {
        let a = 1.0 + lambda * (1.0 - alpha);
        let b = alpha - lambda * (1.0 - alpha);
        let s1: f64 = f.iter().map(|f| f.powf(1.0 + alpha)).sum();
        let s2: f64 = f.iter().zip(g).map(|(f, g)| f.powf(b) * g.powf(a)).sum();
        let s3: f64 = g.iter().map(|g| g.powf(1.0 + alpha)).sum();
        s1 / a - (1.0 + alpha) / (a * b) * s2 + s3 / b
    }

    #[test]
    fn params_and_regimes() {
        let p = DivergenceParams::new(0.5, -0.5).unwrap();
        assert_eq!(p.a, 0.75);
        assert_eq!(p.b, 0.75);
        assert_eq!(p.regime, Regime::Generic);
        assert_eq!(DivergenceParams::new(0.0, -1.0).unwrap().regime, Regime::ALimitZero);
        assert_eq!(DivergenceParams::new(0.0, 0.0).unwrap().regime, Regime::BLimitZero);
        assert_eq!(DivergenceParams::new(0.5, 1.0).unwrap().regime, Regime::BLimitZero);
        assert_eq!(DivergenceParams::new(0.6, 1.5).unwrap().regime, Regime::BLimitZero);
        assert!(DivergenceParams::new(1.5, 0.0).is_err());
        assert!(DivergenceParams::new(-0.1, 0.0).is_err());
        assert!(DivergenceParams::new(0.5, f64::NAN).is_err());
        for (alpha, lambda) in [(0.3, 0.7), (0.0, -3.0), (1.0, 5.0), (0.9, -1.0)] {
            let p = DivergenceParams::new(alpha, lambda).unwrap();
            assert!((p.a + p.b - (1.0 + alpha)).abs() <= 1e-14);
        }
    }

    #[test]
    fn self_divergence_is_zero() {
        let g = pv(&[0.2, 0.5, 0.3]);
        let p = DivergenceParams::new(0.3, 0.7).unwrap();
        assert!(s_divergence(&g, &g, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn alpha_one_is_squared_l2_for_any_lambda() {
        let g = pv(&[0.7, 0.3]);
        let f = pv(&[0.5, 0.5]);
        let l2 = 0.2f64.powi(2) * 2.0;
        for lambda in [-0.5, 2.0] {
            let p = DivergenceParams::new(1.0, lambda).unwrap();
            assert_relative_eq!(s_divergence(&g, &f, &p).unwrap(), l2, max_relative = 1e-12);
        }
    }

    #[test]
    fn pearson_and_kullback_leibler_values() {
        let g = pv(&[0.7, 0.3]);
        let f = pv(&[0.5, 0.5]);
        let pcs = s_divergence(&g, &f, &DivergenceParams::new(0.0, 1.0).unwrap()).unwrap();
        assert_relative_eq!(pcs, 0.08, max_relative = 1e-12);
        assert_relative_eq!(pcs, brute_force(g.masses(), f.masses(), 0.0, 1.0), max_relative = 1e-12);
        let kld = s_divergence(&g, &f, &DivergenceParams::new(0.0, 0.0).unwrap()).unwrap();
        // 0.7 ln 1.4 + 0.3 ln 0.6, to 40 digits with an arbitrary-precision calculator.
        assert_relative_eq!(kld, 0.082_282_878_505_051_78, max_relative = 1e-12);
    }

    #[test]
    fn cell_form_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g = random_pmf(&mut rng, 8);
            let f = random_pmf(&mut rng, 8);
            let alpha = rng.random::<f64>();
            let lambda = -1.0 + 3.0 * rng.random::<f64>();
            let p = DivergenceParams::new(alpha, lambda).unwrap();
            let s = s_divergence(&pv(&g), &pv(&f), &p).unwrap();
            let bf = brute_force(&g, &f, alpha, lambda);
            assert!((s - bf).abs() <= 1e-9 * bf.abs().max(1e-3), "{s} vs {bf}");
        }
    }

    #[test]
    fn nonnegativity_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let g = random_pmf(&mut rng, 11);
            let f = random_pmf(&mut rng, 11);
            let p = DivergenceParams::new(rng.random(), -1.0 + 3.0 * rng.random::<f64>()).unwrap();
            let s = s_divergence(&pv(&g), &pv(&f), &p).unwrap();
            assert!(s > 1e-12, "{s}");
            assert!(s_divergence(&pv(&g), &pv(&g), &p).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn family_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let g = random_pmf(&mut rng, 6);
            let f = random_pmf(&mut rng, 6);
            for lambda in [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
                let s = s_divergence(&pv(&g), &pv(&f), &DivergenceParams::new(0.0, lambda).unwrap())
                    .unwrap();
                assert!((s - power_divergence(&g, &f, lambda)).abs() <= 1e-10);
            }
            for alpha in [0.0, 0.1, 0.5, 1.0] {
                let s = s_divergence(&pv(&g), &pv(&f), &DivergenceParams::new(alpha, 0.0).unwrap())
                    .unwrap();
                assert!((s - density_power_divergence(&g, &f, alpha)).abs() <= 1e-10);
            }
            let l2 = s_divergence(&pv(&g), &pv(&f), &DivergenceParams::new(1.0, 0.0).unwrap()).unwrap();
            for lambda in [-1.0, -0.5, 0.0, 1.0, 2.0] {
                let s = s_divergence(&pv(&g), &pv(&f), &DivergenceParams::new(1.0, lambda).unwrap())
                    .unwrap();
                assert!((s - l2).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn limit_continuity() {
        let g = pv(&[0.1, 0.4, 0.3, 0.2]);
        let f = pv(&[0.25, 0.25, 0.3, 0.2]);
        let alpha = 0.3;
        // A = 1 + lambda (1 - alpha) -> 0
        let lambda_a = |a: f64| (a - 1.0) / (1.0 - alpha);
        let limit_a = s_divergence(&g, &f, &DivergenceParams::new(alpha, lambda_a(0.0)).unwrap()).unwrap();
        // B = alpha - lambda (1 - alpha) -> 0
        let lambda_b = |b: f64| (alpha - b) / (1.0 - alpha);
        let limit_b = s_divergence(&g, &f, &DivergenceParams::new(alpha, lambda_b(0.0)).unwrap()).unwrap();
        for (lam, limit) in [(&lambda_a as &dyn Fn(f64) -> f64, limit_a), (&lambda_b, limit_b)] {
            let mut prev = f64::INFINITY;
            for eps in [1e-3, 1e-4, 1e-5] {
                let d = [eps, -eps]
                    .iter()
                    .map(|&e| {
                        let p = DivergenceParams::new(alpha, lam(e)).unwrap();
                        assert_eq!(p.regime, Regime::Generic);
                        (s_divergence(&g, &f, &p).unwrap() - limit).abs()
                    })
                    .fold(0.0, f64::max);
                assert!(d < prev, "difference did not shrink: {d} >= {prev}");
                prev = d;
            }
        }
    }

    #[test]
    fn empty_cells() {
        let g = pv(&[1.0, 0.0]);
        let f = pv(&[0.5, 0.5]);
        // A > 0: empty data cell is fine.
        assert!(s_divergence(&g, &f, &DivergenceParams::new(0.5, 0.0).unwrap()).is_ok());
        // A = 0 (lambda = -1, alpha = 0): infinite.
        match s_divergence(&g, &f, &DivergenceParams::new(0.0, -1.0).unwrap()) {
            Err(Error::UndefinedDivergence { cell, .. }) => assert_eq!(cell, 1),
            other => panic!("{other:?}"),
        }
        // A < 0
        assert!(s_divergence(&g, &f, &DivergenceParams::new(0.0, -2.0).unwrap()).is_err());
        // B <= 0 with an empty model cell.
        assert!(s_divergence(&f, &g, &DivergenceParams::new(0.0, 0.0).unwrap()).is_err());
        assert!(s_divergence(&f, &g, &DivergenceParams::new(0.0, -0.5).unwrap()).is_ok());
        // Both empty contribute nothing; supports are aligned by padding.
        let short = pv(&[0.5, 0.5]);
        let long = PmfVector::new(0, vec![0.5, 0.5, 0.0]).unwrap();
        let p = DivergenceParams::new(0.2, 0.3).unwrap();
        assert!(s_divergence(&short, &long, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn kernel_values() {
        for (alpha, lambda) in [(0.5, -0.5), (0.0, 0.0), (0.2, 1.0)] {
            let p = DivergenceParams::new(alpha, lambda).unwrap();
            assert_eq!(kernel_k(0.0, &p).unwrap(), 0.0);
            assert_eq!(kernel_k_deriv(0.0, &p, 1).unwrap(), 1.0);
        }
        let unit = DivergenceParams::new(0.3, 0.0).unwrap();
        assert_eq!(unit.a, 1.0);
        for delta in [-1.0, 0.0, 2.5] {
            assert!((kernel_k(delta, &unit).unwrap() - delta).abs() < 1e-15);
            assert_eq!(kernel_k_deriv(delta, &unit, 2).unwrap(), 0.0);
        }
        // A = 0.3: alpha = 0, lambda = -0.7.
        let p = DivergenceParams::new(0.0, -0.7).unwrap();
        assert!((p.a - 0.3).abs() < 1e-15);
        // (2^0.3 - 1) / 0.3 to 40 digits with an arbitrary-precision calculator.
        assert_relative_eq!(kernel_k(1.0, &p).unwrap(), 0.770_481_377_816_387_6, max_relative = 1e-13);
        // A = 0.5: alpha = 0, lambda = -0.5.
        let p = DivergenceParams::new(0.0, -0.5).unwrap();
        assert_relative_eq!(kernel_k_deriv(3.0, &p, 1).unwrap(), 0.5, max_relative = 1e-15);
        let h = 1e-6;
        let fd = (kernel_k(3.0 + h, &p).unwrap() - kernel_k(3.0 - h, &p).unwrap()) / (2.0 * h);
        assert!((fd - 0.5).abs() < 1e-8);
    }

    #[test]
    fn kernel_singularity() {
        let a_zero = DivergenceParams::new(0.0, -1.0).unwrap();
        assert!(matches!(kernel_k(-1.0, &a_zero), Err(Error::KernelSingularity { .. })));
        assert!((kernel_k(1.0, &a_zero).unwrap() - 2f64.ln()).abs() < 1e-15);
        let a_half = DivergenceParams::new(0.0, -0.5).unwrap();
        assert_eq!(kernel_k(-1.0, &a_half).unwrap(), -2.0);
        assert!(kernel_k_deriv(-1.0, &a_half, 1).is_err());
        assert!(kernel_k(-1.5, &a_half).is_err());
        assert!(kernel_k_deriv(0.0, &a_half, 3).is_err());
    }

    proptest! {
        #[test]
        fn kernel_derivative_matches_finite_difference(
            delta in -0.9f64..20.0,
            alpha in 0.0f64..1.0,
            lambda in -1.0f64..2.0,
        ) {
            let p = DivergenceParams::new(alpha, lambda).unwrap();
            prop_assume!(p.regime != Regime::ALimitZero);
            let h = 1e-6 * (1.0 + delta.abs());
            for order in 1..=2u8 {
                let lower = |d: f64| if order == 1 { kernel_k(d, &p).unwrap() } else { kernel_k_deriv(d, &p, 1).unwrap() };
                let fd = (lower(delta + h) - lower(delta - h)) / (2.0 * h);
                let exact = kernel_k_deriv(delta, &p, order).unwrap();
                prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1.0), "order {order}: {fd} vs {exact}");
            }
        }
    }
}
