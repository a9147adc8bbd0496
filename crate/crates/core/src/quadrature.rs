//! Globally adaptive Gauss-Kronrod (10/21) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Semi-infinite ranges are cut where the integrand's exponential factor
    /// has decayed by `exp(-tail_cutoff_exponent)`.
    pub tail_cutoff_exponent: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_subdivisions: 2000,
            tail_cutoff_exponent: 46.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let in_range = |t: f64| t > 0.0 && t <= 1e-3;
        if !in_range(self.rel_tol) || !in_range(self.abs_tol) {
            return Err(Error::InvalidArgument(format!(
                "tolerances must lie in (0, 1e-3], got rel {} abs {}",
                self.rel_tol, self.abs_tol
            )));
        }
        if self.max_subdivisions == 0 || !(self.tail_cutoff_exponent > 0.0) {
            return Err(Error::InvalidArgument(
                "max_subdivisions and tail_cutoff_exponent must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// An integral value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate {
        value: 0.0,
        abs_error: 0.0,
    };

    pub fn exact(value: f64) -> Self {
        Self {
            value,
            abs_error: 0.0,
        }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value + rhs.value,
            abs_error: self.abs_error + rhs.abs_error,
        }
    }
}

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208036880521,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

// Gauss weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    let mut res_abs = kronrod.abs();
    let mut fv = [(0.0, 0.0); 10];
    for (j, x) in XGK[..10].iter().enumerate() {
        let dx = half * x;
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv[j] = (f1, f2);
        kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        res_asc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = kronrod * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Segment { a, b, value, error }
}

/// Integrates `f` over `[points[0], points[last]]`, starting from the
/// partition given by `points`. Breakpoints at known kinks or scale changes
/// save subdivisions.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("need at least two breakpoints".into()));
    }
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(gk21(&mut f, w[0], w[1]));
        } else if w[1] < w[0] {
            return Err(Error::InvalidArgument("breakpoints must be nondecreasing".into()));
        }
    }
    let totals = |heap: &BinaryHeap<Segment>| {
        heap.iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error))
    };
    let mut subdivisions = heap.len();
    loop {
        let (value, error) = totals(&heap);
        if error <= cfg.abs_tol.max(cfg.rel_tol * value.abs()) {
            return Ok(Estimate {
                value,
                abs_error: error,
            });
        }
        let worst = match heap.peek() {
            Some(s) => s,
            None => return Ok(Estimate::ZERO),
        };
        let mid = 0.5 * (worst.a + worst.b);
        let exhausted = subdivisions >= cfg.max_subdivisions
            || !(worst.a < mid && mid < worst.b);
        if exhausted {
            return Err(Error::QuadratureNonConvergence {
                estimate: value,
                error,
                subdivisions,
            });
        }
        let worst = heap.pop().unwrap();
        heap.push(gk21(&mut f, worst.a, mid));
        heap.push(gk21(&mut f, mid, worst.b));
        subdivisions += 1;
    }
}

pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    integrate_with_breaks(f, &[a, b], cfg)
}

/// Integrates over `[a, inf)` an integrand bounded by a constant times
/// `exp(-decay * x)`, truncating where that factor falls below
/// `exp(-tail_cutoff_exponent)`. Extra breakpoints inside the kept range may
/// be supplied.
pub fn integrate_exp_tail<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    decay: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    if !(decay > 0.0) {
        return Err(Error::InvalidArgument(format!("decay rate must be positive, got {decay}")));
    }
    let end = a + cfg.tail_cutoff_exponent / decay;
    let mut points = vec![a];
    points.extend(breaks.iter().copied().filter(|x| *x > a && *x < end));
    points.push(end);
    points.sort_by(f64::total_cmp);
    integrate_with_breaks(f, &points, cfg)
}
