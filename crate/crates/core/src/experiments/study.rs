//! The small-cell study: one pass selecting the smallest cells under every
//! size functional of the dimension, then shape statistics of each selection.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::stats::{ks_statistic, uniform_cdf, Histogram};
use super::topk::{select_k_smallest_many, TopKSelection};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::functionals::{sigma_of, tau_of, SizeFunctional};
use crate::model::TessellationModel;
use crate::sampler::SampleStreamSpec;

pub const SIGMA_BINS: usize = 10;
pub const TAU_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StudyConfig {
    pub n: u64,
    pub k: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalSummary {
    pub functional: SizeFunctional,
    pub min_size: f64,
    pub max_size: f64,
    pub sigma_histogram: Histogram,
    pub tau_histogram: Histogram,
    /// KS distance of the selected cells' sigma values to the uniform law.
    pub sigma_ks_uniform: f64,
    pub median_tau: f64,
    pub selection: TopKSelection,
}

/// Extremes of the smallest cells reported for a far larger sample than a
/// desk run draws. Printed for orientation only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceExtremes {
    pub quantity: &'static str,
    pub sample_size: f64,
    pub minimum: f64,
    pub maximum: f64,
    pub comparable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub model: TessellationModel,
    pub edge_rates: Vec<f64>,
    pub config: StudyConfig,
    pub functionals: Vec<FunctionalSummary>,
    pub reference_extremes: Vec<ReferenceExtremes>,
}

impl StudyReport {
    pub fn summary(&self, functional: SizeFunctional) -> Option<&FunctionalSummary> {
        self.functionals.iter().find(|s| s.functional == functional)
    }
}

fn reference_extremes(dimension: usize) -> Vec<ReferenceExtremes> {
    let row = |quantity, minimum, maximum| ReferenceExtremes {
        quantity,
        sample_size: 1e12,
        minimum,
        maximum,
        comparable: false,
    };
    match dimension {
        2 => vec![
            row("area", 1.79e-14, 8.46e-12),
            // full perimeter 2(X+Y), twice the half-perimeter functional
            row("perimeter", 1.06e-6, 3.52e-5),
        ],
        3 => vec![
            row("volume", 3.20e-15, 4.97e-13),
            row("surface-area", 1.74e-8, 3.58e-7),
            row("edge-length", 6.80e-4, 3.88e-3),
        ],
        _ => Vec::new(),
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn summarize(selection: TopKSelection) -> Result<FunctionalSummary> {
    let sigmas = selection
        .entries
        .iter()
        .map(|e| sigma_of(&e.cell.edge_lengths))
        .collect::<Result<Vec<f64>>>()?;
    let mut taus: Vec<f64> = selection.entries.iter().map(|e| tau_of(&e.cell.edge_lengths)).collect();
    let tau_max = taus.iter().copied().fold(0.0, f64::max);
    let tau_hi = if tau_max > 0.0 { tau_max } else { 1.0 };
    Ok(FunctionalSummary {
        functional: selection.functional,
        min_size: selection.min_size().unwrap_or(f64::NAN),
        max_size: selection.max_size().unwrap_or(f64::NAN),
        sigma_histogram: Histogram::from_values(&sigmas, 0.0, 1.0, SIGMA_BINS)?,
        tau_histogram: Histogram::from_values(&taus, 0.0, tau_hi, TAU_BINS)?,
        sigma_ks_uniform: ks_statistic(&sigmas, uniform_cdf)?,
        median_tau: median(&mut taus),
        selection,
    })
}

pub fn run_small_cell_study(model: &TessellationModel, config: &StudyConfig) -> Result<StudyReport> {
    if config.k == 0 || config.n < config.k as u64 {
        return Err(Error::InvalidArgument(format!(
            "the study needs 1 <= k <= n, got k={} n={}",
            config.k, config.n
        )));
    }
    let spec = SampleStreamSpec::new(config.seed, config.n, config.workers)?;
    let functionals = SizeFunctional::study_set(model.dimension);
    let selections = select_k_smallest_many(model, &spec, &functionals, config.k)?;
    Ok(StudyReport {
        model: model.clone(),
        edge_rates: model.edge_rates().rates,
        config: *config,
        functionals: selections.into_iter().map(summarize).collect::<Result<_>>()?,
        reference_extremes: reference_extremes(model.dimension),
    })
}

pub fn write_topk_csv<W: Write>(mut out: W, selection: &TopKSelection) -> Result<()> {
    let d = selection.entries.first().map_or(0, |e| e.cell.dimension());
    let mut header = vec!["sample_index".to_string()];
    header.extend((1..=d).map(|i| format!("edge_{i}")));
    header.push("size".into());
    writeln!(out, "{}", header.join(","))?;
    for e in &selection.entries {
        let mut row = vec![e.sample_index.to_string()];
        row.extend(e.cell.edge_lengths.iter().map(|x| fmt_f64(*x)));
        row.push(fmt_f64(e.size));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Writes `topk_<f>.csv`, `hist_<f>_sigma.csv`, `hist_<f>_tau.csv` for every
/// functional and `report.json` into `dir`, creating it if needed.
pub fn write_study_artifacts(report: &StudyReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for s in &report.functionals {
        let token = s.functional.token();
        let mut topk = BufWriter::new(File::create(dir.join(format!("topk_{token}.csv")))?);
        write_topk_csv(&mut topk, &s.selection)?;
        topk.flush()?;
        for (name, hist) in [("sigma", &s.sigma_histogram), ("tau", &s.tau_histogram)] {
            let mut h = BufWriter::new(File::create(dir.join(format!("hist_{token}_{name}.csv")))?);
            hist.write_csv(&mut h)?;
            h.flush()?;
        }
    }
    write_json(&dir.join("report.json"), report)
}
