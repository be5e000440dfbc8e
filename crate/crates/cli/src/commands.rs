use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use depthvar_core::dynamic::{dense_trace, prompt_for_seed, run_pipeline_against, RunReport, RunTrace};
use depthvar_core::grid::{ssim_grid, FeatureGrid};
use depthvar_core::model::{layer_similarity, ScaleSchedule, ToyVarModel};
use rayon::prelude::*;
use serde::Serialize;
use toml::Value;

use crate::config::{parse_value, set_path, Config};
use crate::{pgm, report, CliError};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))
}

fn create(path: PathBuf) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn dense_references(
    model: &ToyVarModel,
    schedule: &ScaleSchedule,
    seeds: &[u64],
) -> Result<Vec<RunTrace>, CliError> {
    seeds
        .par_iter()
        .map(|&s| Ok(dense_trace(model, schedule, &prompt_for_seed(model.channels(), s))?))
        .collect()
}

/// Runs the configured pipeline per seed and writes reports and images.
/// Returns one `(seed, speedup, final_ssim)` line per seed.
pub fn generate(cfg: &Config) -> Result<Vec<(u64, f64, f64)>, CliError> {
    let (model, schedule) = (cfg.model()?, cfg.schedule()?);
    let pcfg = cfg.pipeline_config();
    let out = &cfg.run.out;
    create_dir(out)?;
    let dense = dense_references(&model, &schedule, &cfg.run.seeds)?;
    cfg.run
        .seeds
        .par_iter()
        .zip(&dense)
        .map(|(&seed, reference)| {
            let prompt = prompt_for_seed(model.channels(), seed);
            let rep = run_pipeline_against(&model, &schedule, &pcfg, &prompt, reference)?;
            write_generate_outputs(out, seed, &rep, cfg)?;
            Ok((seed, rep.speedup, rep.final_ssim))
        })
        .collect()
}

fn write_generate_outputs(out: &Path, seed: u64, rep: &RunReport, cfg: &Config) -> Result<(), CliError> {
    report::write_json(create(out.join(format!("report_seed{seed}.json")))?, seed, rep, cfg)?;
    report::write_csv(create(out.join(format!("metrics_seed{seed}.csv")))?, seed, rep)?;
    for rec in rep.trace.scales.iter().filter(|s| s.dynamic) {
        if let Some(d) = &rec.depths {
            let map = depthvar_core::grid::ScalarMap::new(
                rec.height,
                rec.width,
                d.as_slice().iter().map(|&x| x as f64).collect(),
            )?;
            pgm::save(&out.join(format!("depth_seed{seed}_scale{}.pgm", rec.index)), &map)?;
        }
    }
    pgm::save(
        &out.join(format!("final_seed{seed}.pgm")),
        &rep.trace.final_feature.channel_mean(),
    )?;
    Ok(())
}

pub const AXES: &[&str] = &[
    "rotation",
    "mask_strategy",
    "schedule_family",
    "reference_metric",
    "layer_range",
    "reference_scale",
    "blending",
    "baseline",
    "budget",
];

fn default_values(axis: &str) -> Vec<&'static str> {
    match axis {
        "rotation" | "blending" => vec!["true", "false"],
        "mask_strategy" => vec!["bit_reversal", "uniform"],
        "schedule_family" => vec!["sigmoid", "linear_a", "linear_b"],
        "reference_metric" => vec!["mae", "mse", "sub"],
        "layer_range" => vec!["3-19", "0-15", "16-31", "0-31"],
        "reference_scale" => vec!["3", "5", "7"],
        "baseline" => vec!["depthvar", "hard_prune", "oracle_prune"],
        "budget" => vec!["segment", "full"],
        _ => Vec::new(),
    }
}

/// Config with one axis set to `value`.
pub fn with_axis(cfg: &Config, axis: &str, value: &str) -> Result<Config, CliError> {
    let mut tree = cfg.to_table();
    let quoted = |v: &str| Value::String(v.to_string());
    match axis {
        "rotation" => set_path(&mut tree, "scheduler.rotation", parse_value(value))?,
        "blending" => set_path(&mut tree, "pipeline.blending", parse_value(value))?,
        "mask_strategy" => set_path(&mut tree, "pipeline.mask_strategy", quoted(value))?,
        "schedule_family" => set_path(&mut tree, "scheduler.family", quoted(value))?,
        "reference_metric" => set_path(&mut tree, "scheduler.metric", quoted(value))?,
        "baseline" => set_path(&mut tree, "pipeline.baseline", quoted(value))?,
        "budget" => set_path(&mut tree, "scheduler.budget", quoted(value))?,
        "reference_scale" => set_path(&mut tree, "scheduler.reference_scale", parse_value(value))?,
        "layer_range" => {
            let (a, b) = value
                .split_once('-')
                .and_then(|(a, b)| Some((a.trim().parse::<i64>().ok()?, b.trim().parse::<i64>().ok()?)))
                .ok_or_else(|| CliError::Config(format!("layer range `{value}` is not BEGIN-END")))?;
            set_path(&mut tree, "scheduler.layer_begin", Value::Integer(a))?;
            set_path(&mut tree, "scheduler.layer_end", Value::Integer(b))?;
        }
        _ => {
            return Err(CliError::Config(format!(
                "unknown ablation axis `{axis}`; expected one of {}",
                AXES.join(", ")
            )))
        }
    }
    let next = Config::from_table(tree)?;
    next.validate()
        .map_err(|e| CliError::Config(format!("ablation value `{value}` for `{axis}`: {e}")))?;
    Ok(next)
}

/// One row of `ablate.csv`. Mean rows carry `seed = "mean"`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblateRow {
    pub axis: String,
    pub value: String,
    pub seed: String,
    pub scale: usize,
    pub height: usize,
    pub width: usize,
    pub dynamic: bool,
    pub compute_fraction: f64,
    pub target: Option<f64>,
    pub code_ssim: f64,
    pub feature_ssim: f64,
    pub feature_mse: f64,
    pub speedup: f64,
}

pub fn ablate(cfg: &Config) -> Result<Vec<AblateRow>, CliError> {
    let axis = cfg
        .ablate
        .axis
        .clone()
        .ok_or_else(|| CliError::Config("ablate needs ablate.axis (or --axis)".into()))?;
    if !AXES.contains(&axis.as_str()) {
        return Err(CliError::Config(format!(
            "unknown ablation axis `{axis}`; expected one of {}",
            AXES.join(", ")
        )));
    }
    let values: Vec<String> = if cfg.ablate.values.is_empty() {
        default_values(&axis).into_iter().map(String::from).collect()
    } else {
        cfg.ablate.values.clone()
    };
    let variants = values
        .iter()
        .map(|v| with_axis(cfg, &axis, v))
        .collect::<Result<Vec<_>, _>>()?;

    let (model, schedule) = (cfg.model()?, cfg.schedule()?);
    let seeds = &cfg.run.seeds;
    let dense = dense_references(&model, &schedule, seeds)?;
    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..seeds.len()).map(move |s| (v, s)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(v, s)| {
            let prompt = prompt_for_seed(model.channels(), seeds[s]);
            Ok(run_pipeline_against(&model, &schedule, &variants[v].pipeline_config(), &prompt, &dense[s])?)
        })
        .collect::<Result<Vec<RunReport>, CliError>>()?;

    let mut rows = Vec::new();
    for (v, value) in values.iter().enumerate() {
        let block: Vec<&RunReport> = jobs
            .iter()
            .zip(&reports)
            .filter(|((jv, _), _)| *jv == v)
            .map(|(_, r)| r)
            .collect();
        for (s, rep) in block.iter().enumerate() {
            for m in &rep.scales {
                rows.push(AblateRow {
                    axis: axis.clone(),
                    value: value.clone(),
                    seed: seeds[s].to_string(),
                    scale: m.index,
                    height: m.height,
                    width: m.width,
                    dynamic: m.dynamic,
                    compute_fraction: m.compute_fraction,
                    target: m.target,
                    code_ssim: m.code_ssim,
                    feature_ssim: m.feature_ssim,
                    feature_mse: m.feature_mse,
                    speedup: rep.speedup,
                });
            }
        }
        let n = block.len() as f64;
        let mean = |f: &dyn Fn(&RunReport) -> f64| block.iter().map(|r| f(r)).sum::<f64>() / n;
        for (i, first) in block[0].scales.iter().enumerate() {
            rows.push(AblateRow {
                axis: axis.clone(),
                value: value.clone(),
                seed: "mean".into(),
                scale: first.index,
                height: first.height,
                width: first.width,
                dynamic: first.dynamic,
                compute_fraction: mean(&|r| r.scales[i].compute_fraction),
                target: first.target,
                code_ssim: mean(&|r| r.scales[i].code_ssim),
                feature_ssim: mean(&|r| r.scales[i].feature_ssim),
                feature_mse: mean(&|r| r.scales[i].feature_mse),
                speedup: mean(&|r| r.speedup),
            });
        }
    }
    let mut w = csv::Writer::from_writer(create_file(&cfg.run.out, "ablate.csv")?);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(rows)
}

fn create_file(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    create_dir(dir)?;
    create(dir.join(name))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityRow {
    pub seed: u64,
    pub scale: usize,
    pub layer: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitRow {
    pub seed: u64,
    pub scale: usize,
    pub exit_layer: usize,
    pub code_ssim: f64,
    pub code_mse: f64,
}

/// Layer-similarity curves and forced-exit fidelity of the dense pipeline.
pub fn probe(cfg: &Config) -> Result<(Vec<SimilarityRow>, Vec<ExitRow>), CliError> {
    let (model, schedule) = (cfg.model()?, cfg.schedule()?);
    let per_seed = cfg
        .run
        .seeds
        .par_iter()
        .map(|&seed| probe_seed(&model, &schedule, seed))
        .collect::<Result<Vec<_>, CliError>>()?;
    let (mut sim, mut exit) = (Vec::new(), Vec::new());
    for (s, e) in per_seed {
        sim.extend(s);
        exit.extend(e);
    }
    let mut w = csv::Writer::from_writer(create_file(&cfg.run.out, "probe_similarity.csv")?);
    for row in &sim {
        w.serialize(row)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(create_file(&cfg.run.out, "probe_early_exit.csv")?);
    for row in &exit {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok((sim, exit))
}

fn probe_seed(
    model: &ToyVarModel,
    schedule: &ScaleSchedule,
    seed: u64,
) -> Result<(Vec<SimilarityRow>, Vec<ExitRow>), CliError> {
    let prompt = prompt_for_seed(model.channels(), seed);
    let (fh, fw) = schedule.final_size();
    let mut feature = FeatureGrid::zeros(fh, fw, model.channels())?;
    let (mut sim, mut exit) = (Vec::new(), Vec::new());
    for index in 0..schedule.len() {
        let step = schedule.step(index)?;
        let out = model.full_scale_inference(&feature, step, &prompt)?;
        if model.num_layers() > 0 {
            let similarity = layer_similarity(&out.states)?;
            for layer in 1..=model.num_layers() {
                let ch = similarity.channel(layer - 1)?;
                sim.push(SimilarityRow {
                    seed,
                    scale: index,
                    layer,
                    mean: ch.mean(),
                    min: ch.min(),
                    max: ch.max(),
                });
            }
        }
        for exit_layer in 1..=model.num_layers() {
            let (_, codes) = model.head_and_lookup(out.states.get(exit_layer))?;
            exit.push(ExitRow {
                seed,
                scale: index,
                exit_layer,
                code_ssim: ssim_grid(&codes, &out.codes)?,
                code_mse: codes.mse(&out.codes)?,
            });
        }
        feature = feature.add(&out.codes.resize(fh, fw)?)?;
    }
    Ok((sim, exit))
}
