//! Typical-cell sampling and window realizations of the tessellation.
//!
//! Edge lengths of the typical cell are independent exponentials with the
//! model's edge rates. Sample `i` of a stream is a pure function of
//! `(seed, i, rates)`, which makes every parallel pass reproducible for any
//! worker count.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::model::{dot, EdgeRates, TessellationModel};
use crate::rng::{unit_f64, CellRng};

/// Number of consecutive indices handled by one task of a parallel pass.
pub const CHUNK: u64 = 1 << 16;

/// Edge lengths of a typical cell, in coordinate order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypicalCell {
    pub edge_lengths: Vec<f64>,
}

impl TypicalCell {
    pub fn new(edge_lengths: Vec<f64>) -> Result<Self> {
        if edge_lengths.len() < 2 {
            return Err(Error::InvalidArgument(
                "a cell needs at least two edge lengths".into(),
            ));
        }
        if edge_lengths.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "edge lengths must be finite and nonnegative, got {edge_lengths:?}"
            )));
        }
        Ok(Self { edge_lengths })
    }

    pub fn dimension(&self) -> usize {
        self.edge_lengths.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            edge_lengths: self.edge_lengths.iter().map(|x| x * c).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SampleStreamSpec {
    pub seed: u64,
    pub count: u64,
    /// Parallelism hint. Never affects the values produced.
    pub worker_hint: usize,
}

impl SampleStreamSpec {
    pub fn new(seed: u64, count: u64, worker_hint: usize) -> Result<Self> {
        if worker_hint == 0 {
            return Err(Error::InvalidArgument("worker_hint must be at least 1".into()));
        }
        Ok(Self {
            seed,
            count,
            worker_hint,
        })
    }
}

/// Inverse rates, precomputed once per pass.
#[derive(Debug, Clone)]
pub struct CellSampler {
    rng: CellRng,
    inv_rates: Vec<f64>,
}

impl CellSampler {
    pub fn new(rates: &EdgeRates, seed: u64) -> Self {
        Self {
            rng: CellRng::new(seed),
            inv_rates: rates.rates.iter().map(|r| 1.0 / r).collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.inv_rates.len()
    }

    /// Writes the edge lengths of sample `index` into `out`.
    ///
    /// Coordinate `c` uses lane `c % 4` of Philox block `c / 4`. The
    /// probability-zero draw of an exact zero is redrawn from the same lane at
    /// the next attempt counter.
    #[inline]
    pub fn fill(&self, index: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.inv_rates.len());
        for (block, (chunk, inv)) in out
            .chunks_mut(4)
            .zip(self.inv_rates.chunks(4))
            .enumerate()
        {
            let words = self.rng.block(index, block as u64, 0);
            for (lane, (x, inv)) in chunk.iter_mut().zip(inv).enumerate() {
                let mut value = exponential(words[lane], *inv);
                let mut attempt = 1;
                while value <= 0.0 {
                    let w = self.rng.block(index, block as u64, attempt)[lane];
                    value = exponential(w, *inv);
                    attempt += 1;
                }
                *x = value;
            }
        }
    }

    pub fn cell(&self, index: u64) -> TypicalCell {
        let mut edge_lengths = vec![0.0; self.dimension()];
        self.fill(index, &mut edge_lengths);
        TypicalCell { edge_lengths }
    }
}

/// Inversion: `-ln(1 - U) / rate`. `1 - U` is exact for the 53-bit grid, so
/// this is `-ln` of a uniform on `(0, 1]`.
#[inline(always)]
fn exponential(word: u64, inv_rate: f64) -> f64 {
    -(1.0 - unit_f64(word)).ln() * inv_rate
}

pub fn sample_typical_cell(rates: &EdgeRates, seed: u64, index: u64) -> TypicalCell {
    CellSampler::new(rates, seed).cell(index)
}

/// Runs `f` on a pool of `workers` threads, or inline for a single worker.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Parallel fold over the cells with indices `0..spec.count`.
///
/// Indices are cut into fixed chunks of [`CHUNK`]; each chunk folds into a
/// fresh accumulator and accumulators are combined with `merge`. The result
/// is independent of `worker_hint` whenever `merge` is commutative and
/// associative.
pub fn fold_stream<A, I, F, M>(rates: &EdgeRates, spec: &SampleStreamSpec, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, u64, &[f64]) + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    let sampler = CellSampler::new(rates, spec.seed);
    let d = sampler.dimension();
    let n = spec.count;
    let chunks = n.div_ceil(CHUNK);
    let run_chunk = |c: u64| {
        let mut acc = init();
        let mut buf = vec![0.0; d];
        let end = ((c + 1) * CHUNK).min(n);
        for i in c * CHUNK..end {
            sampler.fill(i, &mut buf);
            fold(&mut acc, i, &buf);
        }
        acc
    };
    if spec.worker_hint <= 1 {
        return (0..chunks).map(run_chunk).fold(init(), &merge);
    }
    with_workers(spec.worker_hint, || {
        (0..chunks)
            .into_par_iter()
            .map(run_chunk)
            .reduce(&init, &merge)
    })
}

/// Cells for the index range `range`, in index order.
pub fn sample_range(rates: &EdgeRates, seed: u64, range: Range<u64>, workers: usize) -> Vec<TypicalCell> {
    let sampler = CellSampler::new(rates, seed);
    with_workers(workers, || {
        range
            .into_par_iter()
            .map(|i| sampler.cell(i))
            .collect()
    })
}

/// Cells `0..spec.count` of the model's typical-cell stream, in index order.
pub fn sample_stream(model: &TessellationModel, spec: &SampleStreamSpec) -> Vec<TypicalCell> {
    sample_range(&model.edge_rates(), spec.seed, 0..spec.count, spec.worker_hint)
}

/// Writes one CSV row per cell with 17 significant digits, no header.
pub fn write_cells_csv<W: Write>(mut out: W, cells: &[TypicalCell]) -> Result<()> {
    for cell in cells {
        let row: Vec<String> = cell.edge_lengths.iter().map(|x| fmt_f64(*x)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Axis-aligned observation window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Window {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Window {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "window lower corner {lower:?} must not exceed upper corner {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Centered cube of side `side`.
    pub fn centered(dimension: usize, side: f64) -> Result<Self> {
        Self::new(vec![-side / 2.0; dimension], vec![side / 2.0; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// Range of `<x, normal>` over the window.
    pub fn projection(&self, normal: &[f64]) -> (f64, f64) {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(normal)
            .fold((0.0, 0.0), |(lo, hi), ((l, u), n)| {
                let (a, b) = (n * l, n * u);
                (lo + a.min(b), hi + a.max(b))
            })
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    /// Parameter interval of `{origin + s * dir}` inside the window
    /// (Liang-Barsky). `None` if the line misses the window.
    pub fn clip_line(&self, origin: &[f64], dir: &[f64]) -> Option<(f64, f64)> {
        let (mut s0, mut s1) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..self.dimension() {
            if dir[k] == 0.0 {
                if origin[k] < self.lower[k] || origin[k] > self.upper[k] {
                    return None;
                }
                continue;
            }
            let a = (self.lower[k] - origin[k]) / dir[k];
            let b = (self.upper[k] - origin[k]) / dir[k];
            s0 = s0.max(a.min(b));
            s1 = s1.min(a.max(b));
        }
        (s0 <= s1).then_some((s0, s1))
    }
}

/// A hyperplane of the realization clipped to the window. `vertices` holds
/// the clipped piece flattened, `d` coordinates per vertex: the two endpoints
/// of a segment in the plane, the polygon boundary in order in space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Piece {
    pub family: usize,
    pub offset: f64,
    pub vertices: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowTessellation {
    pub window: Window,
    pub normals: Vec<Vec<f64>>,
    pub pieces: Vec<Piece>,
}

impl WindowTessellation {
    pub fn family_count(&self, family: usize) -> usize {
        self.pieces.iter().filter(|p| p.family == family).count()
    }

    /// Writes `family,offset,<vertex coordinates...>` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for p in &self.pieces {
            let mut row = vec![p.family.to_string(), fmt_f64(p.offset)];
            row.extend(p.vertices.iter().map(|x| fmt_f64(*x)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Estimates the intensity of the crossings of all hyperplanes with the
    /// line through the window center in direction `u_axis`, per unit length.
    pub fn crossing_rate(&self, model: &TessellationModel, axis: usize) -> CrossingEstimate {
        let u = &model.atoms[axis].direction;
        let center = self.window.center();
        let (s0, s1) = self.window.clip_line(&center, u).unwrap_or((0.0, 0.0));
        let chord = s1 - s0;
        let crossings = self
            .pieces
            .iter()
            .filter(|p| {
                let n = &self.normals[p.family];
                let c = dot(u, n);
                if c.abs() < 1e-12 {
                    return false;
                }
                let s = (p.offset - dot(&center, n)) / c;
                s >= s0 && s <= s1
            })
            .count() as u64;
        let (rate, std_error) = if chord > 0.0 {
            (crossings as f64 / chord, (crossings as f64).sqrt() / chord)
        } else {
            (0.0, 0.0)
        };
        CrossingEstimate {
            crossings,
            chord_length: chord,
            rate,
            std_error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingEstimate {
    pub crossings: u64,
    pub chord_length: f64,
    pub rate: f64,
    /// Poisson standard error `sqrt(count) / length`.
    pub std_error: f64,
}

/// Samples the hyperplanes of the realization that meet `window`.
///
/// Family `j` is a Poisson process of offsets `t` along the unit normal
/// `n_j` with intensity `gamma * q_j`; only offsets in the projection of the
/// window onto `n_j` produce hyperplanes that meet it.
pub fn sample_window_tessellation(
    model: &TessellationModel,
    window: &Window,
    seed: u64,
) -> Result<WindowTessellation> {
    let d = model.dimension;
    if window.dimension() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: window.dimension(),
        });
    }
    if d > 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    let normals = model.hyperplane_normals();
    let mut pieces = Vec::new();
    for (j, (atom, normal)) in model.atoms.iter().zip(&normals).enumerate() {
        let (tmin, tmax) = window.projection(normal);
        let mean = model.intensity * atom.weight * (tmax - tmin);
        if !(mean > 0.0) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64 + 1);
        let poisson = Poisson::new(mean)
            .map_err(|e| Error::InvalidArgument(format!("poisson mean {mean}: {e}")))?;
        let count = poisson.sample(&mut rng) as usize;
        let mut offsets: Vec<f64> = (0..count)
            .map(|_| tmin + (tmax - tmin) * rng.random::<f64>())
            .collect();
        offsets.sort_by(f64::total_cmp);
        offsets.dedup();
        for t in offsets {
            let vertices = match d {
                2 => clip_planar(window, normal, t),
                _ => clip_spatial(window, normal, t),
            };
            if let Some(vertices) = vertices {
                pieces.push(Piece {
                    family: j,
                    offset: t,
                    vertices,
                });
            }
        }
    }
    Ok(WindowTessellation {
        window: window.clone(),
        normals,
        pieces,
    })
}

fn clip_planar(window: &Window, n: &[f64], t: f64) -> Option<Vec<f64>> {
    let origin = [t * n[0], t * n[1]];
    let dir = [-n[1], n[0]];
    let (s0, s1) = window.clip_line(&origin, &dir)?;
    Some(vec![
        origin[0] + s0 * dir[0],
        origin[1] + s0 * dir[1],
        origin[0] + s1 * dir[0],
        origin[1] + s1 * dir[1],
    ])
}

/// Plane `<x, n> = t` intersected with a box: crossings of the 12 box edges,
/// ordered by angle around their centroid.
fn clip_spatial(window: &Window, n: &[f64], t: f64) -> Option<Vec<f64>> {
    let corner = |mask: usize| -> [f64; 3] {
        let mut c = [0.0; 3];
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = if mask >> k & 1 == 1 { window.upper[k] } else { window.lower[k] };
        }
        c
    };
    let mut points: Vec<[f64; 3]> = Vec::new();
    for mask in 0..8usize {
        for k in 0..3 {
            if mask >> k & 1 == 1 {
                continue;
            }
            let (a, b) = (corner(mask), corner(mask | 1 << k));
            let (fa, fb) = (dot(&a, n) - t, dot(&b, n) - t);
            if (fa < 0.0) == (fb < 0.0) || fa == fb {
                continue;
            }
            let s = fa / (fa - fb);
            points.push([
                a[0] + s * (b[0] - a[0]),
                a[1] + s * (b[1] - a[1]),
                a[2] + s * (b[2] - a[2]),
            ]);
        }
    }
    if points.len() < 3 {
        return None;
    }
    let m = points.len() as f64;
    let centroid = [0, 1, 2].map(|k| points.iter().map(|p| p[k]).sum::<f64>() / m);
    // orthonormal frame (e1, e2) of the plane
    let pick = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = normalize(cross(n, &pick));
    let e2 = cross(n, &e1);
    points.sort_by(|p, q| {
        let angle = |v: &[f64; 3]| {
            let r = [v[0] - centroid[0], v[1] - centroid[1], v[2] - centroid[2]];
            dot(&r, &e2).atan2(dot(&r, &e1))
        };
        angle(p).total_cmp(&angle(q))
    });
    Some(points.into_iter().flatten().collect())
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let len = dot(&v, &v).sqrt();
    v.map(|x| x / len)
}
