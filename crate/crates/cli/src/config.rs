//! Experiment configuration: a sectioned TOML file, `--set` overrides applied
//! to the parsed value tree, then typed deserialization.

use std::path::{Path, PathBuf};

use depthvar_core::dynamic::{Baseline, PipelineConfig};
use depthvar_core::mask::MaskStrategy;
use depthvar_core::model::{ScaleSchedule, ToyVarModel};
use depthvar_core::schedule::{BudgetMode, ReferenceMetric, ScheduleFamily, SchedulerConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub seed: u64,
    pub layers: usize,
    pub channels: usize,
    pub codebook_size: usize,
    pub scales: Vec<[usize; 2]>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            seed: 0,
            layers: 32,
            channels: 32,
            codebook_size: 64,
            scales: ScaleSchedule::default_toy()
                .sizes()
                .iter()
                .map(|&(h, w)| [h, w])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Mae,
    Mse,
    Sub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Sigmoid,
    LinearA,
    LinearB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetName {
    Segment,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    BitReversal,
    Uniform,
    Prefix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineName {
    Depthvar,
    HardPrune,
    OraclePrune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerSection {
    pub metric: MetricName,
    pub layer_begin: usize,
    pub layer_end: usize,
    pub family: FamilyName,
    /// Sharpness of the sigmoid family; ignored by the linear ones.
    pub sigmoid_k: f64,
    pub eta: f64,
    pub reference_scale: usize,
    pub rotation: bool,
    pub budget: BudgetName,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        let d = SchedulerConfig::default();
        Self {
            metric: MetricName::Mae,
            layer_begin: d.layer_begin,
            layer_end: d.layer_end,
            family: FamilyName::Sigmoid,
            sigmoid_k: 12.0,
            eta: d.eta,
            reference_scale: d.reference_scale,
            rotation: d.rotation,
            budget: BudgetName::Segment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub dynamic_start: usize,
    pub mask_strategy: StrategyName,
    pub blending: bool,
    pub restore_threshold: f64,
    pub restore_window: usize,
    pub baseline: BaselineName,
    /// Fixed budget target for every dynamic scale instead of the area ratio.
    pub target: Option<f64>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        Self {
            dynamic_start: d.dynamic_start,
            mask_strategy: StrategyName::BitReversal,
            blending: d.blending,
            restore_threshold: d.restore_threshold,
            restore_window: d.restore_window,
            baseline: BaselineName::Depthvar,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: vec![1],
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub axis: Option<String>,
    /// Axis values as strings; empty selects the axis defaults.
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub scheduler: SchedulerSection,
    pub pipeline: PipelineSection,
    pub run: RunSection,
    pub ablate: AblateSection,
}

impl Config {
    /// Reads `path` (or starts from defaults), applies `overrides` in order and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("cannot parse config {}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for item in overrides {
            apply_override(&mut tree, item)?;
        }
        let cfg = Self::from_table(tree)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_table(tree: Table) -> Result<Self, CliError> {
        Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn to_table(&self) -> Table {
        Table::try_from(self).expect("config serializes to a table")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.run.seeds.is_empty() {
            return Err(CliError::Config("run.seeds must not be empty".into()));
        }
        let schedule = self.schedule()?;
        self.model()?;
        let layers = self.model.layers;
        self.pipeline_config()
            .validate(layers, schedule.len())
            .map_err(|e| CliError::Config(format!("invalid pipeline settings: {e}")))
    }

    pub fn schedule(&self) -> Result<ScaleSchedule, CliError> {
        ScaleSchedule::new(self.model.scales.iter().map(|&[h, w]| (h, w)).collect())
            .map_err(|e| CliError::Config(format!("invalid model.scales: {e}")))
    }

    pub fn model(&self) -> Result<ToyVarModel, CliError> {
        let m = &self.model;
        ToyVarModel::new(m.seed, m.layers, m.channels, m.codebook_size)
            .map_err(|e| CliError::Config(format!("invalid model section: {e}")))
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let s = &self.scheduler;
        let p = &self.pipeline;
        PipelineConfig {
            dynamic_start: p.dynamic_start,
            scheduler: SchedulerConfig {
                metric: match s.metric {
                    MetricName::Mae => ReferenceMetric::Mae,
                    MetricName::Mse => ReferenceMetric::Mse,
                    MetricName::Sub => ReferenceMetric::Sub,
                },
                layer_begin: s.layer_begin,
                layer_end: s.layer_end,
                family: match s.family {
                    FamilyName::Sigmoid => ScheduleFamily::Sigmoid { k: s.sigmoid_k },
                    FamilyName::LinearA => ScheduleFamily::LinearA,
                    FamilyName::LinearB => ScheduleFamily::LinearB,
                },
                eta: s.eta,
                reference_scale: s.reference_scale,
                rotation: s.rotation,
                budget_mode: match s.budget {
                    BudgetName::Segment => BudgetMode::SegmentIntegral,
                    BudgetName::Full => BudgetMode::FullIntegral,
                },
            },
            mask_strategy: match p.mask_strategy {
                StrategyName::BitReversal => MaskStrategy::BitReversal,
                StrategyName::Uniform => MaskStrategy::Uniform,
                StrategyName::Prefix => MaskStrategy::Prefix,
            },
            blending: p.blending,
            restore_threshold: p.restore_threshold,
            restore_window: p.restore_window,
            baseline: match p.baseline {
                BaselineName::Depthvar => Baseline::DepthVar,
                BaselineName::HardPrune => Baseline::HardPrune,
                BaselineName::OraclePrune => Baseline::OraclePrune,
            },
            target_override: p.target,
        }
    }
}

/// Parses the right-hand side of `KEY=VALUE` as a TOML value, falling back to
/// a bare string.
pub fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn set_path(tree: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed override key `{key}`")));
    }
    let (last, sections) = parts.split_last().expect("split yields one part");
    let mut node = tree;
    for part in sections {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{part}` in `{key}` is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

pub fn apply_override(tree: &mut Table, item: &str) -> Result<(), CliError> {
    let (key, value) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not KEY=VALUE")))?;
    set_path(tree, key.trim(), parse_value(value))
}
