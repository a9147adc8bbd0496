//! Exact conditional laws of the planar typical cell and quadrature oracles
//! for the small-area limits.
//!
//! Throughout, `X` and `Y` are the independent exponential edge lengths.
//! Perimeter results take general rates `(gamma1, gamma2)`; area results are
//! stated for unit rates (the standard rectangular model) and can be carried
//! to any equal-rate model by rescaling lengths. The public `eps` is always
//! the threshold for `sigma = 2 min/(X+Y)` with range `[0, 1]`.

use std::cell::Cell;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::EdgeRates;
use crate::quadrature::{integrate_exp_tail, integrate_with_breaks, Estimate, QuadratureConfig};
use crate::special;

/// Rates closer than this (relative to their sum) use the equal-rate forms.
pub const EQUAL_RATE_REL_GAP: f64 = 1e-9;

/// Tolerance at which the printed two-rate display is considered to agree
/// with the region quadrature.
pub const DISPLAY_AGREEMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePair {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl RatePair {
    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self> {
        for g in [gamma1, gamma2] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "rates must be positive and finite, got ({gamma1}, {gamma2})"
                )));
            }
        }
        Ok(Self { gamma1, gamma2 })
    }

    pub fn from_edge_rates(rates: &EdgeRates) -> Result<Self> {
        match rates.rates.as_slice() {
            [g1, g2] => Self::new(*g1, *g2),
            other => Err(Error::DimensionMismatch {
                expected: 2,
                got: other.len(),
            }),
        }
    }

    pub fn is_equal(&self) -> bool {
        (self.gamma1 - self.gamma2).abs() <= EQUAL_RATE_REL_GAP * (self.gamma1 + self.gamma2)
    }

    /// The common rate when the two rates are (numerically) equal.
    pub fn common_rate(&self) -> Option<f64> {
        self.is_equal().then(|| 0.5 * (self.gamma1 + self.gamma2))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

/// `P(X + Y < p)`: Erlang(2) for equal rates, hypoexponential otherwise.
pub fn cdf_half_perimeter(rates: &RatePair, p: f64) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::InvalidArgument(format!("p must be nonnegative, got {p}")));
    }
    if p == f64::INFINITY {
        return Ok(1.0);
    }
    let (g1, g2) = (rates.gamma1, rates.gamma2);
    let value = match rates.common_rate() {
        Some(g) => -(-g * p).exp_m1() - g * p * (-g * p).exp(),
        None => (g2 * (-g1 * p).exp_m1() - g1 * (-g2 * p).exp_m1()) / (g1 - g2),
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Probability that the edge with rate `a` is the longer one and the cell
/// lies in `{sigma > eps, X + Y < p}`, for `a != b`.
///
/// With `r = eps/(2-eps)`, the longer edge `x` runs over `[0, p(1-eps/2)]`
/// and the shorter over `[r x, min(x, p - x)]`; integrating the density
/// `a b e^{-a x - b y}` gives
/// `a [ (2-eps)(1-E2)/D - (1-E1)/(a+b) - (E1-E2)/(a-b) ]` with
/// `D = 2a - eps(a-b)`, `E1 = e^{-(a+b)p/2}`, `E2 = e^{-D p/2}`.
fn ordered_joint(a: f64, b: f64, eps: f64, p: f64) -> f64 {
    let d = 2.0 * a - eps * (a - b);
    let e1 = (-(a + b) * p / 2.0).exp();
    let one_minus_e2 = -(-d * p / 2.0).exp_m1();
    let one_minus_e1 = -(-(a + b) * p / 2.0).exp_m1();
    // E1 - E2 = E1 (1 - e^{-(1-eps)(a-b)p/2})
    let diff_over_gap = -e1 * (-(1.0 - eps) * (a - b) * p / 2.0).exp_m1() / (a - b);
    a * ((2.0 - eps) * one_minus_e2 / d - one_minus_e1 / (a + b) - diff_over_gap)
}

/// `P(sigma > eps, X + Y < p)`.
pub fn joint_sigma_perimeter(rates: &RatePair, eps: f64, p: f64) -> Result<f64> {
    check_eps(eps)?;
    check_positive("p", p)?;
    if let Some(g) = rates.common_rate() {
        return Ok((1.0 - eps) * cdf_half_perimeter(&RatePair::new(g, g)?, p)?);
    }
    let (g1, g2) = (rates.gamma1, rates.gamma2);
    Ok((ordered_joint(g1, g2, eps, p) + ordered_joint(g2, g1, eps, p)).clamp(0.0, 1.0))
}

/// `P(sigma > eps | X + Y < p)`. Exactly `1 - eps` for equal rates.
pub fn cond_sigma_given_perimeter(rates: &RatePair, eps: f64, p: f64) -> Result<f64> {
    check_eps(eps)?;
    check_positive("p", p)?;
    if rates.is_equal() {
        return Ok(1.0 - eps);
    }
    Ok(cond_sigma_given_perimeter_distinct(rates, eps, p))
}

/// The distinct-rate closed form without the equal-rate switch. Used to
/// check continuity as the rates merge.
pub fn cond_sigma_given_perimeter_distinct(rates: &RatePair, eps: f64, p: f64) -> f64 {
    let (g1, g2) = (rates.gamma1, rates.gamma2);
    let joint = ordered_joint(g1, g2, eps, p) + ordered_joint(g2, g1, eps, p);
    let cdf = (g2 * (-g1 * p).exp_m1() - g1 * (-g2 * p).exp_m1()) / (g1 - g2);
    (joint / cdf).clamp(0.0, 1.0)
}

/// The distinct-rate formula for `P(sigma > eps | P < p)` exactly as it is
/// usually printed. It does not evaluate to a probability (it is negative
/// for every rate pair checked); kept only so the discrepancy can be
/// reported. See [`check_printed_display`].
pub fn printed_two_rate_display(rates: &RatePair, eps: f64, p: f64) -> f64 {
    let (g1, g2) = (rates.gamma1, rates.gamma2);
    let num = 4.0
        * g1
        * g2
        * ((g1 - g2) * eps + g1 - g2
            - (eps * (g1 - g2) - 2.0 * g1) * (-(g1 + g2) / 2.0 * p).exp()
            - (g1 + g2) * (-(2.0 * g1 - eps * (g1 - g2)) / 2.0 * p).exp());
    let den = (g1 + g2)
        * (g1 * (1.0 - (-g2 * p).exp()) - g2 * (1.0 - (-g1 * p).exp()))
        * (eps * (g1 - g2) - 2.0 * g1);
    num / den
}

/// Nested adaptive quadrature of the joint density over
/// `{sigma > eps, X + Y < p}`, each ordering of the edges integrated with its
/// own density. Independent of the closed form.
pub fn joint_sigma_perimeter_quadrature(
    rates: &RatePair,
    eps: f64,
    p: f64,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    check_eps(eps)?;
    check_positive("p", p)?;
    cfg.validate()?;
    let (g1, g2) = (rates.gamma1, rates.gamma2);
    Ok(ordered_region_quadrature(g1, g2, eps, p, cfg)? + ordered_region_quadrature(g2, g1, eps, p, cfg)?)
}

fn ordered_region_quadrature(a: f64, b: f64, eps: f64, p: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    let r = eps / (2.0 - eps);
    let inner_cfg = QuadratureConfig {
        rel_tol: (cfg.rel_tol * 1e-2).max(1e-14),
        abs_tol: cfg.abs_tol * 1e-2,
        ..*cfg
    };
    let failure: Cell<Option<Error>> = Cell::new(None);
    let outer = |x: f64| {
        let hi = x.min(p - x);
        let lo = r * x;
        if hi <= lo {
            return 0.0;
        }
        match integrate_with_breaks(|y| a * b * (-a * x - b * y).exp(), &[lo, hi], &inner_cfg) {
            Ok(e) => e.value,
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        }
    };
    let est = integrate_with_breaks(outer, &[0.0, p / 2.0, p * (1.0 - eps / 2.0)], cfg)?;
    match failure.take() {
        Some(e) => Err(e),
        None => Ok(est),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisplayCheck {
    pub printed: f64,
    pub quadrature: f64,
    pub discrepancy: f64,
    pub agrees: bool,
}

/// Compares the printed display with the region quadrature of the
/// conditional probability. The quadrature is authoritative.
pub fn check_printed_display(rates: &RatePair, eps: f64, p: f64, cfg: &QuadratureConfig) -> Result<DisplayCheck> {
    let joint = joint_sigma_perimeter_quadrature(rates, eps, p, cfg)?;
    let quadrature = joint.value / cdf_half_perimeter(rates, p)?;
    let printed = printed_two_rate_display(rates, eps, p);
    let discrepancy = (printed - quadrature).abs();
    Ok(DisplayCheck {
        printed,
        quadrature,
        discrepancy,
        agrees: discrepancy <= DISPLAY_AGREEMENT_TOL,
    })
}

/// `P(XY < a)` for unit-rate edges, as
/// `int_0^inf e^{-x} (1 - e^{-a/x}) dx`. This is the primary route.
pub fn prob_area_less(a: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    check_positive("a", a)?;
    cfg.validate()?;
    let breaks = [a, a.sqrt(), 1.0];
    integrate_exp_tail(|x: f64| (-x).exp() * -(-a / x).exp_m1(), 0.0, 1.0, &breaks, cfg)
}

/// `P(XY < a) = 1 - a int_2^inf e^{-sqrt(a) s} sqrt(s^2 - 4) ds`, evaluated
/// after the substitution `s = 2 + w^2` which removes the square-root
/// singularity at `s = 2`.
pub fn prob_area_less_laplace(a: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    check_positive("a", a)?;
    cfg.validate()?;
    let ra = a.sqrt();
    let w_end = (cfg.tail_cutoff_exponent / ra).sqrt();
    let scale = ra.sqrt().recip();
    let integrand = |w: f64| {
        let w2 = w * w;
        2.0 * w2 * (w2 + 4.0).sqrt() * (-ra * (2.0 + w2)).exp()
    };
    let mut points = vec![0.0];
    points.extend([0.25 * scale, scale, 2.0 * scale].into_iter().filter(|x| *x < w_end));
    points.push(w_end);
    let inner = integrate_with_breaks(integrand, &points, cfg)?;
    Ok(Estimate {
        value: 1.0 - a * inner.value,
        abs_error: a * inner.abs_error,
    })
}

/// `P(XY < a) = 1 - 2 sqrt(a) K1(2 sqrt(a))`.
pub fn prob_area_less_bessel(a: f64) -> Result<f64> {
    check_positive("a", a)?;
    let z = 2.0 * a.sqrt();
    Ok(1.0 - z * special::bessel_k1(z)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreaCdfMethods {
    pub direct: f64,
    pub laplace: f64,
    pub bessel: f64,
}

impl AreaCdfMethods {
    pub fn max_discrepancy(&self) -> f64 {
        (self.direct - self.laplace)
            .abs()
            .max((self.direct - self.bessel).abs())
            .max((self.laplace - self.bessel).abs())
    }
}

pub fn prob_area_less_methods(a: f64, cfg: &QuadratureConfig) -> Result<AreaCdfMethods> {
    Ok(AreaCdfMethods {
        direct: prob_area_less(a, cfg)?.value,
        laplace: prob_area_less_laplace(a, cfg)?.value,
        bessel: prob_area_less_bessel(a)?,
    })
}

/// `P(sigma > eps, XY < a)` for unit rates.
///
/// With `h = eps/2` (the threshold for `min/(X+Y)`) and `r = h/(1-h)`, the
/// shorter edge ranges over `[r x, min(x, a/x)]` and `x` over
/// `[0, sqrt(a/r)]`; the inner integral is done in closed form and the two
/// pieces split at `x = sqrt(a)`.
pub fn numerator_sigma_area(eps: f64, a: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    check_eps(eps)?;
    check_positive("a", a)?;
    cfg.validate()?;
    let h = eps / 2.0;
    let r = h / (1.0 - h);
    let (x_mid, x_end) = (a.sqrt(), (a / r).sqrt());
    let integrand = |x: f64| {
        if x <= x_mid {
            // e^{-x} (e^{-r x} - e^{-x})
            2.0 * (-(1.0 + r) * x).exp() * -(-(1.0 - r) * x).exp_m1()
        } else {
            // e^{-x} (e^{-r x} - e^{-a/x}), with r x <= a/x here
            2.0 * (-(1.0 + r) * x).exp() * -(r * x - a / x).exp_m1()
        }
    };
    integrate_with_breaks(integrand, &[0.0, x_mid, x_end], cfg)
}

fn ratio(num: Estimate, den: Estimate) -> Estimate {
    let value = (num.value / den.value).clamp(0.0, 1.0);
    let rel = num.abs_error / num.value.abs().max(f64::MIN_POSITIVE) + den.abs_error / den.value.abs();
    Estimate {
        value,
        abs_error: value * rel,
    }
}

/// `P(sigma > eps | XY < a)` for unit rates.
pub fn cond_sigma_given_area(eps: f64, a: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    let num = numerator_sigma_area(eps, a, cfg)?;
    let den = prob_area_less(a, cfg)?;
    Ok(ratio(num, den))
}

/// `P(X > eps, XY < a)` for unit rates.
pub fn prob_edge_exceeds_with_area(eps: f64, a: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    check_positive("eps", eps)?;
    check_positive("a", a)?;
    cfg.validate()?;
    let breaks = [a, a.sqrt(), 1.0];
    integrate_exp_tail(|x: f64| (-x).exp() * -(-a / x).exp_m1(), eps, 1.0, &breaks, cfg)
}

/// `P(max(X, Y) > eps, XY < a)` for unit rates, by inclusion-exclusion
/// `2 P(X > eps, A < a) - P(X > eps, Y > eps, A < a)`.
pub fn prob_max_exceeds_with_area(eps: f64, a: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    let single = prob_edge_exceeds_with_area(eps, a, cfg)?;
    let both = if eps * eps < a {
        let end = (a / eps).min(eps + cfg.tail_cutoff_exponent);
        // e^{-x} (e^{-eps} - e^{-a/x}) on [eps, a/eps], where a/x >= eps
        integrate_with_breaks(
            |x: f64| (-x - eps).exp() * -(eps - a / x).exp_m1(),
            &[eps, a.sqrt().clamp(eps, end), end],
            cfg,
        )?
    } else {
        Estimate::ZERO
    };
    Ok(Estimate {
        value: 2.0 * single.value - both.value,
        abs_error: 2.0 * single.abs_error + both.abs_error,
    })
}

/// `P(tau > eps | XY < a)` for unit rates.
pub fn cond_tau_given_area(eps: f64, a: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    let num = prob_max_exceeds_with_area(eps, a, cfg)?;
    let den = prob_area_less(a, cfg)?;
    Ok(ratio(num, den))
}

/// `E1(x) = Gamma(0, x)`, series / continued fraction.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    special::exp_integral_e1(x)
}

/// `E1(x)` by adaptive quadrature of `e^{-t}/t` on `[x, inf)`.
pub fn exp_integral_e1_quadrature(x: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    check_positive("x", x)?;
    integrate_exp_tail(|t: f64| (-t).exp() / t, x, 1.0, &[2.0 * x, x + 1.0], cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateModel {
    /// `prob ~ C a^k`.
    PowerLaw,
    /// `prob ~ c / ln(1/a)`.
    LogReciprocal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    /// Least-squares slope of `ln prob` against `ln a`.
    pub exponent: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
    /// Residual sum of squares of the power law, in log space.
    pub power_rss: f64,
    /// Least-squares `c` of `prob = c / ln(1/a)`; absent unless every `a < 1`.
    pub log_reciprocal_coefficient: Option<f64>,
    pub log_reciprocal_rss: Option<f64>,
    pub preferred: RateModel,
}

impl DecayFit {
    /// Value of the preferred model at `a`.
    pub fn predict(&self, a: f64) -> f64 {
        match (self.preferred, self.log_reciprocal_coefficient) {
            (RateModel::LogReciprocal, Some(c)) => c / (1.0 / a).ln(),
            _ => self.log_prefactor.exp() * a.powf(self.exponent),
        }
    }
}

/// Fits `ln prob = ln C + k ln a` and `ln prob = ln c - ln ln(1/a)` to the
/// pairs and reports which leaves the smaller residual.
pub fn fit_decay_exponent(pairs: &[(f64, f64)]) -> Result<DecayFit> {
    if pairs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|(a, p)| !(*a > 0.0 && *p > 0.0 && a.is_finite() && p.is_finite())) {
        return Err(Error::InvalidArgument("pairs must be positive".into()));
    }
    let xs: Vec<f64> = pairs.iter().map(|(a, _)| a.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, p)| p.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-300 || xs.iter().all(|x| *x == xs[0]) {
        return Err(Error::InvalidArgument("all thresholds are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let log_prefactor = my - exponent * mx;
    let power_rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - log_prefactor - exponent * x).powi(2))
        .sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - power_rss / syy } else { 1.0 };

    let (log_reciprocal_coefficient, log_reciprocal_rss) = if pairs.iter().all(|(a, _)| *a < 1.0) {
        // residual_i = y_i - ln c + ln ln(1/a_i); ln c is the mean offset
        let offsets: Vec<f64> = pairs
            .iter()
            .map(|(a, p)| p.ln() + (1.0 / a).ln().ln())
            .collect();
        let ln_c = offsets.iter().sum::<f64>() / n;
        let rss: f64 = offsets.iter().map(|o| (o - ln_c).powi(2)).sum();
        (Some(ln_c.exp()), Some(rss))
    } else {
        (None, None)
    };
    let preferred = match log_reciprocal_rss {
        Some(rss) if rss < power_rss => RateModel::LogReciprocal,
        _ => RateModel::PowerLaw,
    };
    Ok(DecayFit {
        exponent,
        log_prefactor,
        r_squared,
        power_rss,
        log_reciprocal_coefficient,
        log_reciprocal_rss,
        preferred,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn pair(a: f64, b: f64) -> RatePair {
        RatePair::new(a, b).unwrap()
    }

    /// Composite Simpson rule, used as an oracle independent of the adaptive
    /// Gauss-Kronrod integrator.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    /// Brute-force 2D Simpson of the joint density over `{sigma > eps, x + y < p}`.
    fn joint_simpson(g: RatePair, eps: f64, p: f64) -> f64 {
        let (g1, g2) = (g.gamma1, g.gamma2);
        let inner = |x: f64| {
            // y ranges over points with x + y < p and 2 min/(x+y) > eps
            let r = eps / (2.0 - eps);
            let mut total = 0.0;
            // y < x part
            let (lo, hi) = (r * x, x.min(p - x));
            if hi > lo {
                total += simpson(|y| g1 * g2 * (-g1 * x - g2 * y).exp(), lo, hi, 200);
            }
            // y > x part: x is the shorter edge, y in (x, min(x/r, p - x))
            let (lo, hi) = (x, (x / r).min(p - x));
            if hi > lo {
                total += simpson(|y| g1 * g2 * (-g1 * x - g2 * y).exp(), lo, hi, 200);
            }
            total
        };
        let r = eps / (2.0 - eps);
        let kinks = [0.0, r * p / (1.0 + r), p / 2.0, p / (1.0 + r)];
        kinks.windows(2).map(|w| simpson(inner, w[0], w[1], 400)).sum()
    }

    #[test]
    fn erlang_cdf_at_one() {
        let v = cdf_half_perimeter(&pair(1.0, 1.0), 1.0).unwrap();
        assert!((v - (1.0 - 2.0 * (-1f64).exp())).abs() < 1e-15);
        assert!((v - 0.2642411).abs() < 1e-7);
    }

    #[test]
    fn hypoexponential_cdf_at_one() {
        let v = cdf_half_perimeter(&pair(2.0, 1.0), 1.0).unwrap();
        let expected = 1.0 - (2.0 * (-1f64).exp() - (-2f64).exp());
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.3995764).abs() < 1e-7);
        // 2D quadrature of the joint density over {x + y < 1}
        let quad = simpson(
            |x| simpson(|y| 2.0 * (-2.0 * x - y).exp(), 0.0, 1.0 - x, 200),
            0.0,
            1.0,
            400,
        );
        assert!((v - quad).abs() < 1e-9, "{v} vs {quad}");
    }

    #[test]
    fn cdf_edges() {
        for g in [pair(1.0, 1.0), pair(3.0, 0.5)] {
            assert_eq!(cdf_half_perimeter(&g, 0.0).unwrap(), 0.0);
            assert_eq!(cdf_half_perimeter(&g, f64::INFINITY).unwrap(), 1.0);
            assert!(cdf_half_perimeter(&g, -1.0).is_err());
            let mut prev = 0.0;
            for k in -20..10 {
                let v = cdf_half_perimeter(&g, 2f64.powi(k)).unwrap();
                assert!(v >= prev && v <= 1.0);
                prev = v;
            }
            assert!(prev > 1.0 - 1e-100 || prev == 1.0);
        }
    }

    #[test]
    fn equal_rates_uniform_law() {
        for p in [1e-3, 0.5, 7.0] {
            assert_eq!(cond_sigma_given_perimeter(&pair(1.3, 1.3), 0.25, p).unwrap(), 0.75);
        }
    }

    #[test]
    fn closed_form_matches_brute_force() {
        for (g, eps, p) in [(pair(2.0, 1.0), 0.5, 1.0), (pair(3.0, 0.5), 0.25, 0.1), (pair(0.7, 1.9), 0.8, 2.5)] {
            let closed = joint_sigma_perimeter(&g, eps, p).unwrap();
            let brute = joint_simpson(g, eps, p);
            assert!((closed - brute).abs() < 1e-9, "{closed} vs {brute}");
            let quad = joint_sigma_perimeter_quadrature(&g, eps, p, &cfg()).unwrap().value;
            assert!((closed - quad).abs() < 1e-12, "{closed} vs {quad}");
        }
    }

    #[test]
    fn value_at_two_one() {
        // reference from an independent symbolic derivation
        let v = cond_sigma_given_perimeter(&pair(2.0, 1.0), 0.5, 1.0).unwrap();
        assert!((v - 0.49385793114901866).abs() < 1e-12, "{v}");
    }

    #[test]
    fn small_perimeter_limit() {
        let v = cond_sigma_given_perimeter(&pair(2.0, 1.0), 0.5, 1e-6).unwrap();
        assert!((v - 0.5).abs() < 1e-4);
    }

    #[test]
    fn equal_rate_joint_closed_form() {
        let v = joint_sigma_perimeter(&pair(1.0, 1.0), 0.25, 1.0).unwrap();
        assert!((v - 0.75 * (1.0 - 2.0 * (-1f64).exp())).abs() < 1e-15);
        assert!((v - 0.1981808).abs() < 1e-7);
        // eps -> 1 and p -> inf limits
        assert!(joint_sigma_perimeter(&pair(1.0, 1.0), 1.0 - 1e-12, 1.0).unwrap() < 1e-11);
        assert!((joint_sigma_perimeter(&pair(1.0, 1.0), 0.3, 1e3).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn continuity_at_equal_rates() {
        for eps in [0.1, 0.5, 0.9] {
            for p in [0.05, 1.0, 4.0] {
                for (gap, tol) in [(1e-3, 1e-2), (1e-5, 1e-4)] {
                    let v = cond_sigma_given_perimeter_distinct(&pair(1.0 + gap, 1.0), eps, p);
                    assert!((v - (1.0 - eps)).abs() < tol, "gap {gap}: {v}");
                }
            }
        }
    }

    #[test]
    fn consistency_of_conditional_and_joint() {
        for g in [pair(2.0, 1.0), pair(3.0, 0.5), pair(1.0, 1.0)] {
            for eps in [0.1, 0.5, 0.9] {
                for p in [0.1, 1.0, 3.0] {
                    let c = cond_sigma_given_perimeter(&g, eps, p).unwrap();
                    let f = cdf_half_perimeter(&g, p).unwrap();
                    let j = joint_sigma_perimeter(&g, eps, p).unwrap();
                    assert!((c * f - j).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn printed_display_is_flagged() {
        let check = check_printed_display(&pair(2.0, 1.0), 0.5, 1.0, &cfg()).unwrap();
        assert!(!check.agrees);
        assert!((check.printed - -3.355236483497769).abs() < 1e-9);
        assert!((check.quadrature - 0.49385793114901866).abs() < 1e-9);
    }

    #[test]
    fn argument_validation() {
        let g = pair(1.0, 2.0);
        assert!(cond_sigma_given_perimeter(&g, 0.0, 1.0).is_err());
        assert!(cond_sigma_given_perimeter(&g, 1.0, 1.0).is_err());
        assert!(cond_sigma_given_perimeter(&g, 0.5, 0.0).is_err());
        assert!(joint_sigma_perimeter(&g, 0.5, -1.0).is_err());
        assert!(prob_area_less(0.0, &cfg()).is_err());
        assert!(numerator_sigma_area(1.5, 0.1, &cfg()).is_err());
        assert!(cond_tau_given_area(0.0, 0.1, &cfg()).is_err());
        assert!(RatePair::new(0.0, 1.0).is_err());
    }

    #[test]
    fn area_cdf_three_methods() {
        for a in [1e-8, 1e-4, 0.01, 0.3, 1.0, 10.0] {
            let m = prob_area_less_methods(a, &cfg()).unwrap();
            assert!(m.max_discrepancy() < 1e-8, "a={a}: {m:?}");
        }
        let m = prob_area_less_methods(0.01, &cfg()).unwrap();
        // brute-force Simpson of the defining integral, split at the kink scale
        let f = |x: f64| if x == 0.0 { 1.0 } else { (-x).exp() * -(-0.01 / x).exp_m1() };
        let brute = simpson(f, 0.0, 0.1, 20_000) + simpson(f, 0.1, 1.0, 20_000) + simpson(f, 1.0, 50.0, 20_000);
        assert!((m.direct - brute).abs() < 1e-10, "{} vs {brute}", m.direct);
    }

    #[test]
    fn area_cdf_limits() {
        assert!(prob_area_less(1e-300, &cfg()).unwrap().value < 1e-296);
        assert!((prob_area_less(100.0, &cfg()).unwrap().value - 1.0).abs() < 1e-4);
        let mut prev = 0.0;
        for k in -30..5 {
            let v = prob_area_less(2f64.powi(k), &cfg()).unwrap().value;
            assert!(v > prev && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn numerator_over_a_tends_to_log_ratio() {
        for eps in [0.5, 0.2, 0.9] {
            let h: f64 = eps / 2.0;
            let target = ((1.0 - h) / h).ln();
            let vals: Vec<f64> = [1e-3, 1e-4, 1e-5]
                .iter()
                .map(|a| numerator_sigma_area(eps, *a, &cfg()).unwrap().value / a)
                .collect();
            // corrections are O(sqrt(a)); Richardson in sqrt(a) with ratio sqrt(10)
            let s = 10f64.sqrt();
            let extrapolated = (s * vals[2] - vals[1]) / (s - 1.0);
            assert!((extrapolated - target).abs() < 1e-3 * target, "eps {eps}: {vals:?}");
            assert!((vals[2] - target).abs() < (vals[0] - target).abs());
        }
    }

    #[test]
    fn numerator_bounded_by_area_cdf() {
        for eps in [0.01, 0.5, 0.99] {
            for a in [1e-6, 1e-2, 1.0, 5.0] {
                let n = numerator_sigma_area(eps, a, &cfg()).unwrap().value;
                let d = prob_area_less(a, &cfg()).unwrap().value;
                assert!(n <= d * (1.0 + 1e-10), "eps {eps} a {a}");
            }
        }
        // eps -> 1 collapses the wedge faster than a
        let n = numerator_sigma_area(1.0 - 1e-6, 1e-3, &cfg()).unwrap().value;
        assert!(n < 1e-3 * 1e-5);
    }

    #[test]
    fn conditional_area_limits() {
        let seq: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|a| cond_sigma_given_area(0.5, *a, &cfg()).unwrap().value)
            .collect();
        assert!(seq[0] > seq[1] && seq[1] > seq[2], "{seq:?}");
        let near_one = cond_sigma_given_area(1e-9, 1e-3, &cfg()).unwrap().value;
        assert!(near_one > 1.0 - 1e-6);
        let tau_seq: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|a| cond_tau_given_area(0.5, *a, &cfg()).unwrap().value)
            .collect();
        assert!(tau_seq[0] > tau_seq[1] && tau_seq[1] > tau_seq[2], "{tau_seq:?}");
        let tau_small_eps = cond_tau_given_area(1e-9, 1e-3, &cfg()).unwrap().value;
        assert!(tau_small_eps > 1.0 - 1e-6, "{tau_small_eps}");
    }

    #[test]
    fn tau_inclusion_exclusion_matches_brute_force() {
        // eps^2 < a so the double-exceedance term is active
        let (eps, a) = (0.3, 0.5);
        let num = prob_max_exceeds_with_area(eps, a, &cfg()).unwrap().value;
        // the integrand jumps at x = eps; each smooth piece gets its own rule
        let left = |x: f64| {
            if x == 0.0 {
                (-eps).exp()
            } else {
                (-x).exp() * ((-eps).exp() - (-a / x).exp())
            }
        };
        let right = |x: f64| (-x).exp() * -(-a / x).exp_m1();
        let brute = simpson(left, 0.0, eps, 20_000) + simpson(right, eps, 60.0, 400_000);
        // mpmath reference, 30 digits
        assert!((num - 0.48848228163717326).abs() < 1e-13, "{num}");
        assert!((num - brute).abs() < 1e-10, "{num} vs {brute}");
    }

    #[test]
    fn edge_exceedance_over_a_tends_to_e1() {
        let e1 = exp_integral_e1(1.0).unwrap();
        let v = prob_edge_exceeds_with_area(1.0, 1e-8, &cfg()).unwrap().value / 1e-8;
        assert!((v - e1).abs() < 1e-6, "{v} vs {e1}");
        assert!((e1 - 0.2193839).abs() < 1e-7);
    }

    #[test]
    fn e1_series_and_quadrature_agree() {
        let tight = cfg().with_rel_tol(1e-13);
        for x in [0.1, 1.0, 3.0] {
            let s = exp_integral_e1(x).unwrap();
            let q = exp_integral_e1_quadrature(x, &tight).unwrap().value;
            assert!(((s - q) / s).abs() < 1e-12, "x={x}: {s} vs {q}");
        }
        // Simpson oracle on E1(x) = int_0^1 e^{-x/v}/v dv
        let f = |v: f64| if v == 0.0 { 0.0 } else { (-1.0 / v).exp() / v };
        let simpson_e1 = simpson(f, 0.0, 1.0, 200_000);
        assert!((simpson_e1 - exp_integral_e1(1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fit_exact_power_law() {
        let pairs: Vec<(f64, f64)> = [1e-2f64, 1e-3, 1e-4, 1e-5].iter().map(|a| (*a, a.sqrt())).collect();
        let fit = fit_decay_exponent(&pairs).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-6);
        assert!(fit.power_rss < 1e-20);
        assert_eq!(fit.preferred, RateModel::PowerLaw);
    }

    #[test]
    fn fit_identifies_log_reciprocal() {
        let pairs: Vec<(f64, f64)> = [1e-2f64, 1e-3, 1e-4, 1e-5, 1e-6]
            .iter()
            .map(|a| (*a, 1.0 / (1.0 / a).ln()))
            .collect();
        let fit = fit_decay_exponent(&pairs).unwrap();
        assert_eq!(fit.preferred, RateModel::LogReciprocal);
        assert!(fit.log_reciprocal_rss.unwrap() < 1e-20);
        assert!(fit.power_rss > 1e-4);
        assert!((fit.log_reciprocal_coefficient.unwrap() - 1.0).abs() < 1e-12);
        assert!((fit.predict(1e-3) - pairs[1].1).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(fit_decay_exponent(&[(0.1, 0.2), (0.01, 0.1)]).is_err());
        assert!(fit_decay_exponent(&[(0.1, 0.2), (0.1, 0.1), (0.1, 0.3)]).is_err());
        assert!(fit_decay_exponent(&[(0.1, 0.2), (0.01, 0.0), (0.001, 0.3)]).is_err());
    }
}
