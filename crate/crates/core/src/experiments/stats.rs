//! Histograms, Kolmogorov-Smirnov distances and conditional Monte Carlo
//! estimators.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::functionals::{sigma_of, tau_of, SizeFunctional};
use crate::model::TessellationModel;
use crate::sampler::{fold_stream, SampleStreamSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub bin_count: usize,
    pub counts: Vec<u64>,
    pub underflow: u64,
    /// Values above `hi`, plus NaNs.
    pub overflow: u64,
}

impl Histogram {
    /// Empty histogram with `bins` left-closed bins on `[lo, hi]`; the last
    /// bin also contains `hi`.
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || bins == 0 {
            return Err(Error::InvalidArgument(format!(
                "histogram needs finite lo < hi and bins >= 1, got [{lo}, {hi}] with {bins}"
            )));
        }
        Ok(Self {
            lo,
            hi,
            bin_count: bins,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn from_values(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        let mut h = Self::new(lo, hi, bins)?;
        for &v in values {
            h.add(v);
        }
        Ok(h)
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        if x < self.lo {
            self.underflow += 1;
        } else if x <= self.hi {
            let pos = (x - self.lo) / (self.hi - self.lo) * self.bin_count as f64;
            let bin = (pos as usize).min(self.bin_count - 1);
            self.counts[bin] += 1;
        } else {
            self.overflow += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.bin_count as f64;
        let lo = self.lo + bin as f64 * width;
        let hi = if bin + 1 == self.bin_count {
            self.hi
        } else {
            self.lo + (bin + 1) as f64 * width
        };
        (lo, hi)
    }

    /// Index of the first bin with the largest count.
    pub fn modal_bin(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|c| *c == max).unwrap_or(0)
    }

    pub fn merge(mut self, other: &Histogram) -> Result<Self> {
        if self.lo != other.lo || self.hi != other.hi || self.bin_count != other.bin_count {
            return Err(Error::InvalidArgument("histograms have different bins".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(self)
    }

    /// Writes `bin_lo,bin_hi,count` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.bin_edges(i);
            writeln!(out, "{},{},{}", fmt_f64(lo), fmt_f64(hi), c)?;
        }
        Ok(())
    }
}

/// `sup_x |F_n(x) - F(x)|` for the empirical CDF `F_n` of `samples`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("KS statistic of an empty sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted.iter().enumerate().fold(0.0, |d: f64, (i, x)| {
        let f = cdf(*x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    }))
}

/// Dvoretzky-Kiefer-Wolfowitz bound: `P(D_n > bound) <= alpha`.
pub fn dkw_bound(n: u64, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

pub fn uniform_cdf(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ShapeEvent {
    SigmaAbove(f64),
    TauAbove(f64),
}

impl ShapeEvent {
    pub fn threshold(self) -> f64 {
        match self {
            ShapeEvent::SigmaAbove(e) | ShapeEvent::TauAbove(e) => e,
        }
    }

    #[inline]
    pub fn holds(self, edges: &[f64]) -> bool {
        match self {
            ShapeEvent::SigmaAbove(eps) => sigma_of(edges).map(|s| s > eps).unwrap_or(false),
            ShapeEvent::TauAbove(eps) => tau_of(edges) > eps,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            ShapeEvent::SigmaAbove(e) if (0.0..1.0).contains(&e) => Ok(()),
            ShapeEvent::TauAbove(e) if e >= 0.0 && e.is_finite() => Ok(()),
            other => Err(Error::InvalidArgument(format!("invalid shape event {other:?}"))),
        }
    }
}

/// `{functional < threshold}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeEvent {
    pub functional: SizeFunctional,
    pub threshold: f64,
}

impl SizeEvent {
    pub fn new(functional: SizeFunctional, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) || threshold.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "size threshold must be positive, got {threshold}"
            )));
        }
        Ok(Self {
            functional,
            threshold,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CondEstimate {
    pub estimate: f64,
    pub accepted: u64,
    pub total: u64,
    /// Binomial standard error given the accepted count.
    pub std_error: f64,
}

impl CondEstimate {
    pub fn from_counts(hits: u64, accepted: u64, total: u64) -> Result<Self> {
        if accepted == 0 {
            return Err(Error::Starvation { total });
        }
        let estimate = hits as f64 / accepted as f64;
        Ok(Self {
            estimate,
            accepted,
            total,
            std_error: (estimate * (1.0 - estimate) / accepted as f64).sqrt(),
        })
    }

    /// `|estimate - reference| / std_error`; infinite for a zero standard
    /// error unless the estimate is exact.
    pub fn z_score(&self, reference: f64) -> f64 {
        let diff = (self.estimate - reference).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Hit counts of every shape event among the cells of every size event,
/// from one pass. `hits[s][e]` counts cells in size event `s` and shape event
/// `e`; `accepted[s]` counts cells in size event `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventCounts {
    pub total: u64,
    pub accepted: Vec<u64>,
    pub hits: Vec<Vec<u64>>,
}

impl EventCounts {
    pub fn estimate(&self, size: usize, shape: usize) -> Result<CondEstimate> {
        CondEstimate::from_counts(self.hits[size][shape], self.accepted[size], self.total)
    }
}

fn sine_for(model: &TessellationModel, functionals: impl IntoIterator<Item = SizeFunctional>) -> Result<f64> {
    let mut sine = 1.0;
    for f in functionals {
        f.check_dimension(model.dimension)?;
        if f == SizeFunctional::GeometricArea {
            sine = model.planar_sine()?;
        }
    }
    Ok(sine)
}

pub fn count_events(
    model: &TessellationModel,
    spec: &SampleStreamSpec,
    shapes: &[ShapeEvent],
    sizes: &[SizeEvent],
) -> Result<EventCounts> {
    for s in shapes {
        s.validate()?;
    }
    let sine = sine_for(model, sizes.iter().map(|s| s.functional))?;
    let empty = || EventCounts {
        total: 0,
        accepted: vec![0; sizes.len()],
        hits: vec![vec![0; shapes.len()]; sizes.len()],
    };
    Ok(fold_stream(
        &model.edge_rates(),
        spec,
        empty,
        |acc, _, edges| {
            acc.total += 1;
            for (s, size) in sizes.iter().enumerate() {
                if size.functional.eval(edges, sine) < size.threshold {
                    acc.accepted[s] += 1;
                    for (e, shape) in shapes.iter().enumerate() {
                        if shape.holds(edges) {
                            acc.hits[s][e] += 1;
                        }
                    }
                }
            }
        },
        |mut a, b| {
            a.total += b.total;
            for (x, y) in a.accepted.iter_mut().zip(&b.accepted) {
                *x += y;
            }
            for (row, other) in a.hits.iter_mut().zip(&b.hits) {
                for (x, y) in row.iter_mut().zip(other) {
                    *x += y;
                }
            }
            a
        },
    ))
}

/// Empirical `P(shape | size)` with its binomial standard error.
pub fn conditional_estimate(
    model: &TessellationModel,
    spec: &SampleStreamSpec,
    shape: ShapeEvent,
    size: SizeEvent,
) -> Result<CondEstimate> {
    count_events(model, spec, &[shape], &[size])?.estimate(0, 0)
}

/// Values of `sigma` (or `tau` when `use_tau`) of every cell in the size
/// event, in index order.
pub fn conditional_shape_samples(
    model: &TessellationModel,
    spec: &SampleStreamSpec,
    size: SizeEvent,
    use_tau: bool,
) -> Result<Vec<f64>> {
    let sine = sine_for(model, [size.functional])?;
    Ok(fold_stream(
        &model.edge_rates(),
        spec,
        Vec::new,
        |acc, _, edges| {
            if size.functional.eval(edges, sine) < size.threshold {
                acc.push(if use_tau {
                    tau_of(edges)
                } else {
                    sigma_of(edges).unwrap_or(f64::NAN)
                });
            }
        },
        |mut a, mut b| {
            a.append(&mut b);
            a
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn histogram_edges() {
        let h = Histogram::from_values(&[0.0, 0.5, 1.0], 0.0, 1.0, 2).unwrap();
        assert_eq!(h.counts, vec![1, 2]);
        let e = Histogram::from_values(&[], 0.0, 1.0, 4).unwrap();
        assert_eq!(e.counts, vec![0; 4]);
        let o = Histogram::from_values(&[-1.0, 2.0, f64::NAN, 0.1], 0.0, 1.0, 3).unwrap();
        assert_eq!((o.underflow, o.overflow, o.total()), (1, 2, 4));
        assert!(Histogram::new(1.0, 1.0, 2).is_err());
        assert!(Histogram::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn histogram_uniform_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>()).collect();
        let h = Histogram::from_values(&values, 0.0, 1.0, 20).unwrap();
        let (mean, sd) = (5e4, (1e6f64 * 0.05 * 0.95).sqrt());
        for c in &h.counts {
            assert!((*c as f64 - mean).abs() < 5.0 * sd, "count {c}");
        }
        assert_eq!(h.total(), 1_000_000);
    }

    #[test]
    fn histogram_merge_conserves() {
        let a = Histogram::from_values(&[0.1, 0.2, 3.0], 0.0, 1.0, 5).unwrap();
        let b = Histogram::from_values(&[-0.1, 0.9], 0.0, 1.0, 5).unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.total(), 5);
        assert!(m.merge(&Histogram::new(0.0, 2.0, 5).unwrap()).is_err());
    }

    /// Supremum of the step function difference by evaluation on both sides
    /// of every jump.
    fn ks_oracle(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let n = samples.len() as f64;
        let ecdf = |x: f64, strict: bool| {
            samples.iter().filter(|s| if strict { **s < x } else { **s <= x }).count() as f64 / n
        };
        samples
            .iter()
            .map(|x| (ecdf(*x, false) - cdf(*x)).abs().max((ecdf(*x, true) - cdf(*x)).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn ks_examples() {
        assert!((ks_statistic(&[0.25, 0.5, 0.75], uniform_cdf).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(ks_statistic(&[0.5], uniform_cdf).unwrap(), 0.5);
        assert!(ks_statistic(&[], uniform_cdf).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let v: Vec<f64> = (0..30).map(|_| rng.random::<f64>().powi(2)).collect();
            let d = ks_statistic(&v, uniform_cdf).unwrap();
            assert!((d - ks_oracle(&v, uniform_cdf)).abs() < 1e-14);
        }
    }

    #[test]
    fn ks_respects_dkw_for_true_law() {
        let n = 100_000;
        let bound = dkw_bound(n, 0.01);
        let mut failures = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            if ks_statistic(&v, uniform_cdf).unwrap() > bound {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{failures} of 20 seeds exceeded the DKW bound");
    }

    #[test]
    fn cond_estimate_counts() {
        let c = CondEstimate::from_counts(30, 40, 100).unwrap();
        assert_eq!(c.estimate, 0.75);
        assert!((c.std_error - (0.75f64 * 0.25 / 40.0).sqrt()).abs() < 1e-16);
        assert_eq!(CondEstimate::from_counts(0, 0, 7), Err(Error::Starvation { total: 7 }));
    }

    #[test]
    fn small_sigma_threshold_is_almost_sure() {
        let model = TessellationModel::standard_2d();
        let spec = SampleStreamSpec::new(1, 100_000, 1).unwrap();
        let size = SizeEvent::new(SizeFunctional::HalfPerimeter, 0.5).unwrap();
        let c = conditional_estimate(&model, &spec, ShapeEvent::SigmaAbove(1e-9), size).unwrap();
        assert!(c.accepted > 0 && c.estimate > 0.9999);
    }

    #[test]
    fn starvation_is_reported() {
        let model = TessellationModel::standard_2d();
        let spec = SampleStreamSpec::new(1, 1000, 1).unwrap();
        let size = SizeEvent::new(SizeFunctional::EdgeProductArea, 1e-30).unwrap();
        assert_eq!(
            conditional_estimate(&model, &spec, ShapeEvent::SigmaAbove(0.5), size),
            Err(Error::Starvation { total: 1000 })
        );
    }

    #[test]
    fn equal_rate_perimeter_estimates_are_uniform() {
        let model = TessellationModel::standard_2d();
        let spec = SampleStreamSpec::new(2, 1_000_000, 1).unwrap();
        let shapes: Vec<ShapeEvent> = [0.1, 0.25, 0.5, 0.75, 0.9].map(ShapeEvent::SigmaAbove).to_vec();
        let sizes: Vec<SizeEvent> = [0.05, 0.2, 1.0]
            .iter()
            .map(|p| SizeEvent::new(SizeFunctional::HalfPerimeter, *p).unwrap())
            .collect();
        let counts = count_events(&model, &spec, &shapes, &sizes).unwrap();
        for s in 0..sizes.len() {
            for (e, shape) in shapes.iter().enumerate() {
                let c = counts.estimate(s, e).unwrap();
                assert!(c.accepted >= 1000);
                assert!(c.z_score(1.0 - shape.threshold()) <= 4.0, "{shape:?} {:?} {c:?}", sizes[s]);
            }
        }
    }

    #[test]
    fn shape_samples_match_counts() {
        let model = TessellationModel::standard_3d();
        let spec = SampleStreamSpec::new(4, 50_000, 1).unwrap();
        let size = SizeEvent::new(SizeFunctional::Volume, 0.05).unwrap();
        let taus = conditional_shape_samples(&model, &spec, size, true).unwrap();
        let c = conditional_estimate(&model, &spec, ShapeEvent::TauAbove(0.5), size).unwrap();
        assert_eq!(taus.len() as u64, c.accepted);
        let hits = taus.iter().filter(|t| **t > 0.5).count() as f64;
        assert_eq!(hits / taus.len() as f64, c.estimate);
    }
}
