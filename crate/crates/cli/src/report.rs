//! CSV and JSON serialization of run reports.

use std::io::Write;

use depthvar_core::dynamic::{RunReport, ScaleMetrics};
use serde::Serialize;

use crate::CliError;

/// One row of `metrics_seed{s}.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub scale: usize,
    pub height: usize,
    pub width: usize,
    pub dynamic: bool,
    pub compute_fraction: f64,
    pub target: Option<f64>,
    pub schedule_param: Option<f64>,
    pub segment_fraction: Option<f64>,
    pub restored: usize,
    pub code_ssim: f64,
    pub code_mse: f64,
    pub feature_ssim: f64,
    pub feature_mse: f64,
}

impl MetricsRow {
    pub fn new(seed: u64, m: &ScaleMetrics) -> Self {
        Self {
            seed,
            scale: m.index,
            height: m.height,
            width: m.width,
            dynamic: m.dynamic,
            compute_fraction: m.compute_fraction,
            target: m.target,
            schedule_param: m.schedule_param,
            segment_fraction: m.segment_fraction,
            restored: m.restored,
            code_ssim: m.code_ssim,
            code_mse: m.code_mse,
            feature_ssim: m.feature_ssim,
            feature_mse: m.feature_mse,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ScaleJson {
    #[serde(flatten)]
    row: MetricsRow,
    depths: Option<Vec<Vec<usize>>>,
    scores: Option<Vec<Vec<f64>>>,
    percentiles: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
struct ReportJson<'a, C: Serialize> {
    seed: u64,
    speedup: f64,
    final_ssim: f64,
    final_mse: f64,
    num_layers: usize,
    config: &'a C,
    scales: Vec<ScaleJson>,
}

fn rows<T: Copy>(data: &[T], width: usize) -> Vec<Vec<T>> {
    data.chunks(width.max(1)).map(<[T]>::to_vec).collect()
}

pub fn write_csv(out: impl Write, seed: u64, report: &RunReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for m in &report.scales {
        w.serialize(MetricsRow::new(seed, m))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(
    out: impl Write,
    seed: u64,
    report: &RunReport,
    config: &impl Serialize,
) -> Result<(), CliError> {
    let scales = report
        .scales
        .iter()
        .zip(&report.trace.scales)
        .map(|(m, rec)| ScaleJson {
            row: MetricsRow::new(seed, m),
            depths: rec.depths.as_ref().map(|d| rows(d.as_slice(), rec.width)),
            scores: rec.scores.as_ref().map(|s| rows(s.as_map().as_slice(), rec.width)),
            percentiles: rec.percentiles.as_ref().map(|p| rows(p.as_slice(), rec.width)),
        })
        .collect();
    let doc = ReportJson {
        seed,
        speedup: report.speedup,
        final_ssim: report.final_ssim,
        final_mse: report.final_mse,
        num_layers: report.trace.num_layers,
        config,
        scales,
    };
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}
