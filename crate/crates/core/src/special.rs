//! Modified Bessel function `K_1` and exponential integral `E_1`.

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Argument at which `bessel_k1` switches from the ascending series to the
/// integral representation. Below it the series loses under two digits to
/// cancellation.
pub const K1_CROSSOVER: f64 = 2.0;

/// Modified Bessel function of the second kind of order one, `x > 0`.
pub fn bessel_k1(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::InvalidArgument(format!("K1 needs x > 0, got {x}")));
    }
    Ok(if x < K1_CROSSOVER {
        bessel_k1_series(x)
    } else {
        bessel_k1_integral(x)
    })
}

/// Ascending series
/// `K1(x) = 1/x + ln(x/2) I1(x) - (x/4) sum_k [psi(k+1) + psi(k+2)] (x^2/4)^k / (k! (k+1)!)`.
pub fn bessel_k1_series(x: f64) -> f64 {
    let y = 0.25 * x * x;
    let mut term = 1.0; // (x^2/4)^k / (k! (k+1)!)
    let mut psi_k1 = -EULER_GAMMA; // psi(k+1)
    let mut psi_k2 = 1.0 - EULER_GAMMA; // psi(k+2)
    let mut i_sum = 0.0;
    let mut psi_sum = 0.0;
    for k in 0..200 {
        i_sum += term;
        let contrib = (psi_k1 + psi_k2) * term;
        psi_sum += contrib;
        if term < 1e-17 * i_sum && contrib.abs() < 1e-17 * psi_sum.abs() {
            break;
        }
        let kf = k as f64;
        term *= y / ((kf + 1.0) * (kf + 2.0));
        psi_k1 += 1.0 / (kf + 1.0);
        psi_k2 += 1.0 / (kf + 2.0);
    }
    let i1 = 0.5 * x * i_sum;
    1.0 / x + (0.5 * x).ln() * i1 - 0.25 * x * psi_sum
}

/// Trapezoid rule on `K1(x) = int_0^inf e^{-x cosh t} cosh t dt`.
///
/// The integrand is even and analytic in a strip, so the rule converges
/// geometrically once the step resolves its peak, whose width is of order
/// `1/sqrt(x)`; all terms are positive. The factor `e^{-x}` is pulled out so
/// large arguments do not underflow before the end.
pub fn bessel_k1_integral(x: f64) -> f64 {
    let step = 0.2 / x.max(4.0).sqrt();
    let mut sum = 0.5;
    for k in 1..100_000 {
        let t = k as f64 * step;
        let c = t.cosh();
        // x (cosh t - 1) = 2 x sinh^2(t/2), without cancellation
        let s = (0.5 * t).sinh();
        let term = (-2.0 * x * s * s).exp() * c;
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    step * sum * (-x).exp()
}

/// Exponential integral `E1(x) = int_x^inf e^{-t}/t dt`, `x > 0`; this is the
/// upper incomplete gamma function `Gamma(0, x)`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::InvalidArgument(format!("E1 needs x > 0, got {x}")));
    }
    if x == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(if x <= 1.0 {
        e1_series(x)
    } else {
        e1_continued_fraction(x)
    })
}

/// `E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)`.
pub fn e1_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0; // (-x)^k / k!
    for k in 1..200 {
        term *= -x / k as f64;
        let contrib = term / k as f64;
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

/// Modified Lentz evaluation of
/// `E1(x) = e^{-x} / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))`.
pub fn e1_continued_fraction(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from mpmath (30 digits, rounded).
    const K1_REF: [(f64, f64); 10] = [
        (1e-4, 9999.999508686404),
        (0.1, 9.853844780870606),
        (1.0, 0.6019072301972346),
        (2.0, 0.13986588181652243),
        (3.0, 0.040156431128194184),
        (6.0, 0.001343919717735509),
        (9.0, 5.363701637945195e-05),
        (12.0, 2.2907574647671878e-06),
        (40.0, 8.497131954861039e-19),
        (100.0, 4.679853735636909e-45),
    ];

    #[test]
    fn k1_reference_values() {
        for (x, expected) in K1_REF {
            let got = bessel_k1(x).unwrap();
            assert!(((got - expected) / expected).abs() < 1e-13, "K1({x}) = {got}, want {expected}");
        }
    }

    #[test]
    fn k1_branches_agree_at_crossover() {
        for x in [0.5, 1.0, K1_CROSSOVER] {
            let (s, i) = (bessel_k1_series(x), bessel_k1_integral(x));
            assert!(((s - i) / i).abs() < 1e-13, "x={x}: {s} vs {i}");
        }
    }

    #[test]
    fn k1_rejects_nonpositive() {
        assert!(bessel_k1(0.0).is_err());
        assert!(bessel_k1(-1.0).is_err());
    }

    #[test]
    fn e1_reference_values() {
        for (x, expected) in [
            (1e-6, 13.238295893062491),
            (0.5, 0.5597735947761608),
            (1.0, 0.21938393439552029),
            (2.0, 0.04890051070806112),
            (10.0, 4.156968929685325e-06),
        ] {
            let got = exp_integral_e1(x).unwrap();
            assert!(((got - expected) / expected).abs() < 1e-12, "E1({x}) = {got}");
        }
    }

    #[test]
    fn e1_branches_agree_near_switch() {
        for x in [0.8, 1.0, 1.5] {
            let (s, c) = (e1_series(x), e1_continued_fraction(x));
            assert!(((s - c) / c).abs() < 1e-12, "x={x}: {s} vs {c}");
        }
    }

    #[test]
    fn e1_limits() {
        assert_eq!(exp_integral_e1(f64::INFINITY).unwrap(), 0.0);
        assert!(exp_integral_e1(700.0).unwrap() < 1e-300);
        assert!(exp_integral_e1(2.0).unwrap() < exp_integral_e1(1.0).unwrap());
        assert!(exp_integral_e1(0.0).is_err());
    }
}
