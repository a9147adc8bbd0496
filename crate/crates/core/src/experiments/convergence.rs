//! Monte Carlo against quadrature for the conditional shape laws of small
//! planar cells, over a grid of shape and size thresholds.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::stats::{count_events, CondEstimate, ShapeEvent, SizeEvent};
use super::study::write_json;
use crate::analytic::{
    cond_sigma_given_area, cond_sigma_given_perimeter, cond_tau_given_area, fit_decay_exponent, DecayFit,
    RatePair,
};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::functionals::SizeFunctional;
use crate::model::TessellationModel;
use crate::quadrature::{Estimate, QuadratureConfig};
use crate::sampler::SampleStreamSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ShapeKind {
    Sigma,
    Tau,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceConfig {
    pub shape: ShapeKind,
    pub functional: SizeFunctional,
    pub eps: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub n: u64,
    pub seed: u64,
    pub workers: usize,
    pub quadrature: QuadratureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub threshold: f64,
    /// Absent when no sample fell in the size event.
    pub mc: Option<CondEstimate>,
    pub quad: Estimate,
    pub z: Option<f64>,
    pub model_fit: Option<f64>,
    pub starved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsFit {
    pub eps: f64,
    pub fit: Option<DecayFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub model: TessellationModel,
    pub edge_rates: Vec<f64>,
    pub config: ConvergenceConfig,
    pub rows: Vec<ConvergenceRow>,
    pub fits: Vec<EpsFit>,
}

/// Exact or quadrature value of `P(shape > eps | functional < threshold)`.
///
/// Half-perimeter conditioning works for any planar rates. Area conditioning
/// is reduced to unit rates by rescaling, which needs equal edge rates.
pub fn reference_probability(
    model: &TessellationModel,
    shape: ShapeKind,
    functional: SizeFunctional,
    eps: f64,
    threshold: f64,
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    if model.dimension != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: model.dimension,
        });
    }
    let rates = RatePair::from_edge_rates(&model.edge_rates())?;
    match (shape, functional) {
        (ShapeKind::Sigma, SizeFunctional::HalfPerimeter) => {
            Ok(Estimate::exact(cond_sigma_given_perimeter(&rates, eps, threshold)?))
        }
        (_, SizeFunctional::EdgeProductArea | SizeFunctional::GeometricArea) => {
            let gamma = rates.common_rate().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "area conditioning needs equal edge rates, got ({}, {})",
                    rates.gamma1, rates.gamma2
                ))
            })?;
            let sine = if functional == SizeFunctional::GeometricArea {
                model.planar_sine()?
            } else {
                1.0
            };
            let unit_area = gamma * gamma * threshold / sine;
            match shape {
                ShapeKind::Sigma => cond_sigma_given_area(eps, unit_area, cfg),
                ShapeKind::Tau => cond_tau_given_area(gamma * eps, unit_area, cfg),
            }
        }
        _ => Err(Error::InvalidArgument(format!(
            "no reference value for {shape:?} given {functional}"
        ))),
    }
}

pub fn run_convergence_study(model: &TessellationModel, config: &ConvergenceConfig) -> Result<ConvergenceReport> {
    if config.eps.is_empty() || config.thresholds.is_empty() {
        return Err(Error::InvalidArgument("eps and threshold grids must be nonempty".into()));
    }
    config.quadrature.validate()?;
    let shapes: Vec<ShapeEvent> = config
        .eps
        .iter()
        .map(|e| match config.shape {
            ShapeKind::Sigma => ShapeEvent::SigmaAbove(*e),
            ShapeKind::Tau => ShapeEvent::TauAbove(*e),
        })
        .collect();
    let sizes = config
        .thresholds
        .iter()
        .map(|t| SizeEvent::new(config.functional, *t))
        .collect::<Result<Vec<_>>>()?;

    // quadrature first so bad parameters fail before the sampling pass
    let mut quads = Vec::with_capacity(shapes.len());
    for &eps in &config.eps {
        let row = config
            .thresholds
            .iter()
            .map(|t| reference_probability(model, config.shape, config.functional, eps, *t, &config.quadrature))
            .collect::<Result<Vec<_>>>()?;
        quads.push(row);
    }

    let spec = SampleStreamSpec::new(config.seed, config.n, config.workers)?;
    let counts = count_events(model, &spec, &shapes, &sizes)?;

    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (e, &eps) in config.eps.iter().enumerate() {
        let pairs: Vec<(f64, f64)> = config
            .thresholds
            .iter()
            .zip(&quads[e])
            .map(|(t, q)| (*t, q.value))
            .collect();
        let fit = fit_decay_exponent(&pairs).ok();
        for (s, &threshold) in config.thresholds.iter().enumerate() {
            let quad = quads[e][s];
            let mc = match counts.estimate(s, e) {
                Ok(c) => Some(c),
                Err(Error::Starvation { .. }) => None,
                Err(other) => return Err(other),
            };
            rows.push(ConvergenceRow {
                eps,
                threshold,
                z: mc.map(|c| c.z_score(quad.value)),
                mc,
                quad,
                model_fit: fit.as_ref().map(|f| f.predict(threshold)),
                starved: mc.is_none(),
            });
        }
        fits.push(EpsFit { eps, fit });
    }
    Ok(ConvergenceReport {
        model: model.clone(),
        edge_rates: model.edge_rates().rates,
        config: config.clone(),
        rows,
        fits,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// `eps,threshold,mc,se,quad,z,model_fit`; starved rows leave `mc`, `se` and
/// `z` empty.
pub fn write_convergence_csv<W: Write>(mut out: W, rows: &[ConvergenceRow]) -> Result<()> {
    writeln!(out, "eps,threshold,mc,se,quad,z,model_fit")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.eps),
            fmt_f64(r.threshold),
            opt(r.mc.map(|c| c.estimate)),
            opt(r.mc.map(|c| c.std_error)),
            fmt_f64(r.quad.value),
            opt(r.z),
            opt(r.model_fit)
        )?;
    }
    Ok(())
}

pub fn write_convergence_artifacts(report: &ConvergenceReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = BufWriter::new(File::create(dir.join("convergence.csv"))?);
    write_convergence_csv(&mut csv, &report.rows)?;
    csv.flush()?;
    write_json(&dir.join("report.json"), report)
}
