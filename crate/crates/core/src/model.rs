//! Tessellation models with atomic directional distributions, the edge rates
//! of their typical cell, and the planar reduction to the standard model.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

const UNIT_NORM_TOL: f64 = 1e-12;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const MIN_ABS_DET: f64 = 1e-9;

/// One atom of the directional distribution: the direction `u_i` of the
/// `i`-th edge family together with the weight `q_i` of the hyperplane
/// family `H_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionAtom {
    pub direction: Vec<f64>,
    pub weight: f64,
}

impl DirectionAtom {
    pub fn new(direction: Vec<f64>, weight: f64) -> Result<Self> {
        let norm = dot(&direction, &direction).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidModel(format!(
                "direction {direction:?} has norm {norm}, expected 1"
            )));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidModel(format!(
                "weight {weight} outside [0, 1]"
            )));
        }
        Ok(Self { direction, weight })
    }
}

/// A stationary Poisson hyperplane tessellation in `R^d` whose directional
/// distribution has exactly `d` atoms with linearly independent directions.
///
/// Atom `i` carries direction `u_i` and the weight `q_i` of the hyperplane
/// `H_i = span{u_j : j != d-1-i}` (0-based). In the plane this means atom 0
/// weights the family of lines parallel to `u_0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TessellationModel {
    pub dimension: usize,
    pub intensity: f64,
    pub atoms: Vec<DirectionAtom>,
}

impl TessellationModel {
    pub fn new(intensity: f64, atoms: Vec<DirectionAtom>) -> Result<Self> {
        let dimension = atoms.len();
        if dimension < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least 2 atoms, got {dimension}"
            )));
        }
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "intensity must be positive, got {intensity}"
            )));
        }
        for atom in &atoms {
            if atom.direction.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: atom.direction.len(),
                });
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let model = Self {
            dimension,
            intensity,
            atoms,
        };
        let det = model.direction_determinant();
        if det.abs() <= MIN_ABS_DET {
            return Err(Error::InvalidModel(format!(
                "directions are linearly dependent (|det| = {:e})",
                det.abs()
            )));
        }
        Ok(model)
    }

    /// The rectangular model with intensity 2, equal weights and the
    /// coordinate axes as directions. Its edge rates are (1, 1).
    pub fn standard_2d() -> Self {
        Self::orthogonal(2, 2.0).expect("standard 2D model is valid")
    }

    /// The cuboid model with unit edge rates in `R^3`.
    pub fn standard_3d() -> Self {
        Self::orthogonal(3, 3.0).expect("standard 3D model is valid")
    }

    /// Coordinate-axis directions with equal weights `1/d`.
    pub fn orthogonal(dimension: usize, intensity: f64) -> Result<Self> {
        let weight = 1.0 / dimension as f64;
        let atoms = (0..dimension)
            .map(|i| {
                let mut e = vec![0.0; dimension];
                e[i] = 1.0;
                DirectionAtom::new(e, weight)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(intensity, atoms)
    }

    /// Planar model on the coordinate axes with weight `q` on the lines
    /// parallel to the x-axis. Edge rates are `(gamma (1-q), gamma q)`.
    pub fn orthogonal_2d(gamma: f64, q: f64) -> Result<Self> {
        Self::new(
            gamma,
            vec![
                DirectionAtom::new(vec![1.0, 0.0], q)?,
                DirectionAtom::new(vec![0.0, 1.0], 1.0 - q)?,
            ],
        )
    }

    /// Orthogonal planar model whose typical cell has edge rates
    /// `(rate_x, rate_y)`.
    pub fn with_planar_rates(rate_x: f64, rate_y: f64) -> Result<Self> {
        let gamma = rate_x + rate_y;
        Self::orthogonal_2d(gamma, rate_y / gamma)
    }

    pub fn directions(&self) -> Vec<&[f64]> {
        self.atoms.iter().map(|a| a.direction.as_slice()).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    /// Determinant of the matrix whose rows are the unit directions.
    pub fn direction_determinant(&self) -> f64 {
        let rows: Vec<Vec<f64>> = self.atoms.iter().map(|a| a.direction.clone()).collect();
        determinant(rows)
    }

    /// Unit normals `n_j` of the hyperplanes `H_j`, where `H_j` is spanned by
    /// every direction except `u_{d-1-j}`.
    pub fn hyperplane_normals(&self) -> Vec<Vec<f64>> {
        let d = self.dimension;
        (0..d)
            .map(|j| {
                let excluded = d - 1 - j;
                let spanning: Vec<&[f64]> = (0..d)
                    .filter(|&i| i != excluded)
                    .map(|i| self.atoms[i].direction.as_slice())
                    .collect();
                let basis = gram_schmidt(&spanning);
                let mut normal = self.atoms[excluded].direction.clone();
                for b in &basis {
                    let c = dot(&normal, b);
                    for (n, bk) in normal.iter_mut().zip(b) {
                        *n -= c * bk;
                    }
                }
                let len = dot(&normal, &normal).sqrt();
                normal.iter().map(|x| x / len).collect()
            })
            .collect()
    }

    /// Edge rates `gamma_i = gamma * sum_j q_j |<u_i, n_j>|` of the typical
    /// cell.
    pub fn edge_rates(&self) -> EdgeRates {
        let normals = self.hyperplane_normals();
        let rates = self
            .atoms
            .iter()
            .map(|atom| {
                let s: f64 = self
                    .atoms
                    .iter()
                    .zip(&normals)
                    .map(|(family, n)| family.weight * dot(&atom.direction, n).abs())
                    .sum();
                self.intensity * s
            })
            .collect();
        EdgeRates { rates }
    }

    /// Sine of the angle between the two planar directions.
    pub fn planar_sine(&self) -> Result<f64> {
        if self.dimension != 2 {
            return Err(Error::UnsupportedDimension(self.dimension));
        }
        Ok(self.direction_determinant().abs())
    }

    /// Image of the model under the invertible planar map `f`.
    ///
    /// A family `<x, n> = t` is carried to `<y, f^{-T} n> = t`, so its unit
    /// normal becomes `f^{-T} n / |f^{-T} n|` and its offset intensity is
    /// multiplied by `|f^{-T} n|`.
    pub fn push_forward(&self, f: &LinearMap) -> Result<Self> {
        if self.dimension != 2 {
            return Err(Error::UnsupportedDimension(self.dimension));
        }
        let inv_t = f.inverse()?.transpose();
        let normals = self.hyperplane_normals();
        let scaled: Vec<f64> = self
            .atoms
            .iter()
            .zip(&normals)
            .map(|(atom, n)| {
                let m = inv_t.apply([n[0], n[1]]);
                atom.weight * (m[0] * m[0] + m[1] * m[1]).sqrt()
            })
            .collect();
        let total: f64 = scaled.iter().sum();
        let atoms = self
            .atoms
            .iter()
            .zip(&scaled)
            .map(|(atom, w)| {
                let v = f.apply([atom.direction[0], atom.direction[1]]);
                let len = (v[0] * v[0] + v[1] * v[1]).sqrt();
                DirectionAtom::new(vec![v[0] / len, v[1] / len], w / total)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.intensity * total, atoms)
    }

    /// A linear map `f` taking this planar model to the standard rectangular
    /// model: `f u_i = gamma_i e_i`, so the image has orthogonal axes and
    /// unit edge rates.
    pub fn reduction_transform(&self) -> Result<LinearMap> {
        if self.dimension != 2 {
            return Err(Error::UnsupportedDimension(self.dimension));
        }
        let rates = self.edge_rates();
        let u = &self.atoms;
        // columns of U are the directions; f = diag(rates) * U^{-1}
        let dir = LinearMap([
            [u[0].direction[0], u[1].direction[0]],
            [u[0].direction[1], u[1].direction[1]],
        ]);
        let scale = LinearMap([[rates.rates[0], 0.0], [0.0, rates.rates[1]]]);
        Ok(scale.compose(&dir.inverse()?))
    }

    /// Parses the `key=value` model description format.
    ///
    /// Recognised keys are `dimension`, `gamma`, `atom.<i>.direction` (comma
    /// separated, rescaled to unit length) and `atom.<i>.weight`, with atoms
    /// numbered from 1. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dimension: Option<usize> = None;
        let mut gamma: Option<f64> = None;
        let mut directions: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut weights: BTreeMap<usize, f64> = BTreeMap::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected key=value, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |message: String| Error::Parse { line, message };
            match key {
                "dimension" => {
                    dimension = Some(value.parse().map_err(|_| bad(format!("bad dimension {value:?}")))?)
                }
                "gamma" => gamma = Some(value.parse().map_err(|_| bad(format!("bad gamma {value:?}")))?),
                _ => {
                    let parts: Vec<&str> = key.split('.').collect();
                    let [atom, idx, field] = parts.as_slice() else {
                        return Err(bad(format!("unknown key {key:?}")));
                    };
                    if *atom != "atom" {
                        return Err(bad(format!("unknown key {key:?}")));
                    }
                    let idx: usize = idx
                        .parse()
                        .ok()
                        .filter(|&i| i >= 1)
                        .ok_or_else(|| bad(format!("bad atom index in {key:?}")))?;
                    match *field {
                        "direction" => {
                            let v = value
                                .split(',')
                                .map(|c| c.trim().parse::<f64>())
                                .collect::<std::result::Result<Vec<_>, _>>()
                                .map_err(|_| bad(format!("bad direction {value:?}")))?;
                            let norm = dot(&v, &v).sqrt();
                            if !(norm > 0.0 && norm.is_finite()) {
                                return Err(bad("direction must be a nonzero vector".into()));
                            }
                            directions.insert(idx, v.iter().map(|x| x / norm).collect());
                        }
                        "weight" => {
                            let w = value
                                .parse()
                                .map_err(|_| bad(format!("bad weight {value:?}")))?;
                            weights.insert(idx, w);
                        }
                        _ => return Err(bad(format!("unknown key {key:?}"))),
                    }
                }
            }
        }

        let dimension = dimension.ok_or_else(|| Error::InvalidModel("missing dimension".into()))?;
        let gamma = gamma.ok_or_else(|| Error::InvalidModel("missing gamma".into()))?;
        let atoms = (1..=dimension)
            .map(|i| {
                let direction = directions
                    .remove(&i)
                    .ok_or_else(|| Error::InvalidModel(format!("missing atom.{i}.direction")))?;
                let weight = weights
                    .remove(&i)
                    .ok_or_else(|| Error::InvalidModel(format!("missing atom.{i}.weight")))?;
                DirectionAtom::new(direction, weight)
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(extra) = directions.keys().chain(weights.keys()).next() {
            return Err(Error::InvalidModel(format!(
                "atom {extra} exceeds dimension {dimension}"
            )));
        }
        Self::new(gamma, atoms)
    }
}

impl fmt::Display for TessellationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dimension={}", self.dimension)?;
        writeln!(f, "gamma={}", self.intensity)?;
        for (i, atom) in self.atoms.iter().enumerate() {
            let dir: Vec<String> = atom.direction.iter().map(|x| x.to_string()).collect();
            writeln!(f, "atom.{}.direction={}", i + 1, dir.join(","))?;
            writeln!(f, "atom.{}.weight={}", i + 1, atom.weight)?;
        }
        Ok(())
    }
}

/// Exponential rates of the typical cell's edge lengths, one per direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeRates {
    pub rates: Vec<f64>,
}

impl EdgeRates {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "edge rates must be positive and finite, got {rates:?}"
            )));
        }
        Ok(Self { rates })
    }

    pub fn dimension(&self) -> usize {
        self.rates.len()
    }

    /// Rates of the image cell under `f`: an edge of length `l` along `u_i`
    /// becomes an edge of length `l |f u_i|`.
    pub fn push_forward(&self, model: &TessellationModel, f: &LinearMap) -> Result<Self> {
        if model.dimension != 2 || self.dimension() != 2 {
            return Err(Error::UnsupportedDimension(model.dimension));
        }
        let rates = self
            .rates
            .iter()
            .zip(&model.atoms)
            .map(|(r, atom)| {
                let v = f.apply([atom.direction[0], atom.direction[1]]);
                r / (v[0] * v[0] + v[1] * v[1]).sqrt()
            })
            .collect();
        Self::new(rates)
    }
}

impl fmt::Display for EdgeRates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.rates.iter().map(|r| r.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// A 2x2 real matrix acting on column vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearMap(pub [[f64; 2]; 2]);

impl LinearMap {
    pub const IDENTITY: LinearMap = LinearMap([[1.0, 0.0], [0.0, 1.0]]);

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det.abs() <= f64::EPSILON * self.max_abs().powi(2) || det == 0.0 {
            return Err(Error::InvalidArgument("singular linear map".into()));
        }
        let m = &self.0;
        Ok(LinearMap([
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ]))
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        LinearMap([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    /// `self * other`, i.e. apply `other` first.
    pub fn compose(&self, other: &LinearMap) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        LinearMap(out)
    }

    fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gram_schmidt(vectors: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.to_vec();
        for b in &basis {
            let c = dot(&w, b);
            for (wk, bk) in w.iter_mut().zip(b) {
                *wk -= c * bk;
            }
        }
        let len = dot(&w, &w).sqrt();
        if len > 0.0 {
            basis.push(w.iter().map(|x| x / len).collect());
        }
    }
    basis
}

/// Determinant by Gaussian elimination with partial pivoting.
fn determinant(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    det
}
