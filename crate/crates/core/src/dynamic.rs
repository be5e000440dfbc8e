//! Dynamic-depth execution across scales.
//!
//! At a dynamic scale every block only processes the tokens its mask slice
//! selects; the remaining tokens receive the previous scale's delta for that
//! block, bilinearly upsampled, so each intermediate state stays spatially
//! complete. Tokens that skipped every block get their logits restored from
//! a similar active neighbour, and the looked-up codes are scaled by their
//! depth score before being accumulated into the running feature map.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{self, BinaryMap, FeatureGrid, ScalarMap};
use crate::mask::{build_layer_mask, compute_fraction, DepthMap, LayerMask, MaskStrategy};
use crate::model::{cosine_similarity, LayerStates, ScaleSchedule, ScaleStep, ToyVarModel};
use crate::schedule::{
    decision_ranks, depth_map, depth_scores, solve_budget_param, BudgetSolution, DepthScoreMap,
    SchedulerConfig,
};

/// Per-block deltas of one scale's dense or merged layer states.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    scale_index: usize,
    embedded: FeatureGrid,
    /// `block_deltas[b] = r^(b+1) - r^b`
    block_deltas: Vec<FeatureGrid>,
}

impl LayerCache {
    pub fn from_states(scale_index: usize, states: &LayerStates) -> Result<Self> {
        let block_deltas = states
            .as_slice()
            .windows(2)
            .map(|w| w[1].sub(&w[0]))
            .collect::<Result<_>>()?;
        Ok(Self {
            scale_index,
            embedded: states.embedded().clone(),
            block_deltas,
        })
    }

    pub fn scale_index(&self) -> usize {
        self.scale_index
    }

    pub fn height(&self) -> usize {
        self.embedded.height()
    }

    pub fn width(&self) -> usize {
        self.embedded.width()
    }

    pub fn num_layers(&self) -> usize {
        self.block_deltas.len()
    }

    pub fn embedded(&self) -> &FeatureGrid {
        &self.embedded
    }

    pub fn block_delta(&self, layer: usize) -> Result<&FeatureGrid> {
        self.block_deltas.get(layer).ok_or(Error::MissingLayer {
            layer,
            available: self.block_deltas.len(),
        })
    }

    /// `r^0 + sum_b delta_b`, which telescopes back to the final state.
    pub fn reconstruct(&self) -> FeatureGrid {
        let mut acc = self.embedded.clone();
        for delta in &self.block_deltas {
            acc = acc.add(delta).expect("deltas share the cache shape");
        }
        acc
    }
}

/// States and logits of a masked or pruned scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedOutput {
    pub states: LayerStates,
    pub logits: FeatureGrid,
}

fn check_cache(cache: &LayerCache, num_layers: usize) -> Result<()> {
    if cache.num_layers() < num_layers {
        return Err(Error::MissingLayer {
            layer: cache.num_layers(),
            available: cache.num_layers(),
        });
    }
    Ok(())
}

/// Runs one scale with block `l` applied only where `mask(l, m, n)` is set.
///
/// Active tokens of a block attend only to each other and keep their grid
/// coordinates for rotary encoding. Inactive tokens take
/// `r^l + up(cache delta l)`.
pub fn masked_scale_inference(
    model: &ToyVarModel,
    f_prev: &FeatureGrid,
    step: ScaleStep,
    prompt: &[f64],
    mask: &LayerMask,
    cache: &LayerCache,
) -> Result<MaskedOutput> {
    let layers = model.num_layers();
    if (mask.layers(), mask.height(), mask.width()) != (layers, step.height, step.width) {
        return Err(Error::ShapeMismatch {
            left: (mask.layers(), mask.height(), mask.width()),
            right: (layers, step.height, step.width),
        });
    }
    check_cache(cache, layers)?;
    let c = model.channels();
    let positions = crate::model::grid_positions(step.height, step.width);

    let mut states = Vec::with_capacity(layers + 1);
    states.push(model.embed_input(f_prev, step, prompt)?);
    for layer in 0..layers {
        let prev = states.last().expect("non-empty");
        let active = mask.layer_slice(layer);
        let next = if active.iter().all(|&b| b) {
            model.layer_forward_dense(layer, prev)?
        } else {
            let proxy = cache.block_delta(layer)?.resize(step.height, step.width)?;
            let mut data = prev.add(&proxy)?.into_vec();
            let idx: Vec<usize> = (0..active.len()).filter(|&p| active[p]).collect();
            if !idx.is_empty() {
                let mut rows = Vec::with_capacity(idx.len() * c);
                let mut pos = Vec::with_capacity(idx.len());
                for &p in &idx {
                    rows.extend_from_slice(&prev.as_slice()[p * c..(p + 1) * c]);
                    pos.push(positions[p]);
                }
                let out = model.layer_forward(layer, &rows, &pos)?;
                for (k, &p) in idx.iter().enumerate() {
                    data[p * c..(p + 1) * c].copy_from_slice(&out[k * c..(k + 1) * c]);
                }
            }
            FeatureGrid::new(step.height, step.width, c, data)?
        };
        states.push(next);
    }
    let states = LayerStates::new(states)?;
    let logits = model.head(states.last())?;
    Ok(MaskedOutput { states, logits })
}

/// Binary keep/discard execution: kept tokens run every block among
/// themselves, discarded tokens follow the cached proxy path throughout.
pub fn hard_prune_scale_inference(
    model: &ToyVarModel,
    f_prev: &FeatureGrid,
    step: ScaleStep,
    prompt: &[f64],
    keep: &BinaryMap,
    cache: &LayerCache,
) -> Result<MaskedOutput> {
    if (keep.height(), keep.width()) != (step.height, step.width) {
        return Err(Error::ShapeMismatch {
            left: (keep.height(), keep.width(), 1),
            right: (step.height, step.width, 1),
        });
    }
    let layers = model.num_layers();
    check_cache(cache, layers)?;
    let c = model.channels();
    let embedded = model.embed_input(f_prev, step, prompt)?;
    let kept: Vec<usize> = (0..keep.as_slice().len())
        .filter(|&p| keep.as_slice()[p])
        .collect();
    let kept_pos: Vec<(usize, usize)> = kept
        .iter()
        .map(|&p| (p / step.width, p % step.width))
        .collect();
    let mut rows: Vec<f64> = kept
        .iter()
        .flat_map(|&p| embedded.as_slice()[p * c..(p + 1) * c].iter().copied())
        .collect();

    let mut states = Vec::with_capacity(layers + 1);
    states.push(embedded);
    for layer in 0..layers {
        let prev = states.last().expect("non-empty");
        let mut data = if kept.len() == keep.as_slice().len() {
            prev.as_slice().to_vec()
        } else {
            let proxy = cache.block_delta(layer)?.resize(step.height, step.width)?;
            prev.add(&proxy)?.into_vec()
        };
        if !kept.is_empty() {
            rows = model.layer_forward(layer, &rows, &kept_pos)?;
            for (k, &p) in kept.iter().enumerate() {
                data[p * c..(p + 1) * c].copy_from_slice(&rows[k * c..(k + 1) * c]);
            }
        }
        states.push(FeatureGrid::new(step.height, step.width, c, data)?);
    }
    let states = LayerStates::new(states)?;
    let logits = model.head(states.last())?;
    Ok(MaskedOutput { states, logits })
}

/// Copies logits into fully masked positions from the most similar active
/// neighbour within a `window x window` neighbourhood, when the cosine
/// similarity of their `reference` features exceeds `threshold`.
///
/// Neighbours are scanned row-major; the first maximum wins. Returns the
/// restored logits and the number of positions that were copied.
pub fn restore_fully_masked(
    logits: &FeatureGrid,
    fully_masked: &BinaryMap,
    reference: &FeatureGrid,
    threshold: f64,
    window: usize,
) -> Result<(FeatureGrid, usize)> {
    if window.is_multiple_of(2) {
        return Err(Error::InvalidParameter("restoration window must be odd"));
    }
    let (h, w) = (logits.height(), logits.width());
    if (fully_masked.height(), fully_masked.width()) != (h, w)
        || (reference.height(), reference.width()) != (h, w)
    {
        return Err(Error::ShapeMismatch {
            left: (h, w, logits.channels()),
            right: (reference.height(), reference.width(), reference.channels()),
        });
    }
    let radius = window / 2;
    let mut out = logits.clone();
    let mut restored = 0;
    for m in 0..h {
        for n in 0..w {
            if !fully_masked.get(m, n) {
                continue;
            }
            let target = reference.pixel(m, n);
            let mut best: Option<((usize, usize), f64)> = None;
            for y in m.saturating_sub(radius)..=(m + radius).min(h - 1) {
                for x in n.saturating_sub(radius)..=(n + radius).min(w - 1) {
                    if fully_masked.get(y, x) {
                        continue;
                    }
                    let sim = cosine_similarity(target, reference.pixel(y, x));
                    if best.is_none_or(|(_, b)| sim > b) {
                        best = Some(((y, x), sim));
                    }
                }
            }
            if let Some(((y, x), sim)) = best {
                if sim > threshold {
                    out.pixel_mut(m, n).copy_from_slice(logits.pixel(y, x));
                    restored += 1;
                }
            }
        }
    }
    Ok((out, restored))
}

/// Scales each code vector by its depth score.
pub fn blend_codes(scores: &DepthScoreMap, codes: &FeatureGrid) -> Result<FeatureGrid> {
    if (scores.height(), scores.width()) != (codes.height(), codes.width()) {
        return Err(Error::ShapeMismatch {
            left: (scores.height(), scores.width(), 1),
            right: codes.shape(),
        });
    }
    let c = codes.channels();
    let data = codes
        .as_slice()
        .chunks_exact(c)
        .zip(scores.as_map().as_slice())
        .flat_map(|(px, &s)| px.iter().map(move |v| v * s))
        .collect();
    FeatureGrid::new(codes.height(), codes.width(), c, data)
}

/// `f_prev + up(z)` at the final resolution.
pub fn accumulate_feature(
    f_prev: &FeatureGrid,
    z: &FeatureGrid,
    height: usize,
    width: usize,
) -> Result<FeatureGrid> {
    if (f_prev.height(), f_prev.width()) != (height, width) {
        return Err(Error::ShapeMismatch {
            left: f_prev.shape(),
            right: (height, width, f_prev.channels()),
        });
    }
    f_prev.add(&z.resize(height, width)?)
}

/// Keeps the `ceil(fraction * n)` largest values; ties go to lower indices.
pub fn top_fraction_mask(values: &ScalarMap, fraction: f64) -> Result<BinaryMap> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter("keep fraction must lie in [0, 1]"));
    }
    let n = values.len();
    let keep = (libm::ceil(fraction * n as f64) as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let v = values.as_slice();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut data = vec![false; n];
    for &p in &order[..keep] {
        data[p] = true;
    }
    BinaryMap::new(values.height(), values.width(), data)
}

/// Keep mask selecting the strongest Sobel edges of `image`.
pub fn sobel_keep_mask(image: &ScalarMap, fraction: f64) -> Result<BinaryMap> {
    top_fraction_mask(&grid::sobel_magnitude(image)?, fraction)
}

/// Token-selection policy applied at dynamic scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Baseline {
    /// Continuous per-token depth.
    #[default]
    DepthVar,
    /// Keep the top decision-rank tokens at full depth, drop the rest.
    HardPrune,
    /// Keep the strongest Sobel edges of the dense run's final image.
    OraclePrune,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Scales before this index always run at full depth.
    pub dynamic_start: usize,
    pub scheduler: SchedulerConfig,
    pub mask_strategy: MaskStrategy,
    pub blending: bool,
    pub restore_threshold: f64,
    pub restore_window: usize,
    pub baseline: Baseline,
    /// Fixed per-scale budget target instead of the reference-scale ratio.
    pub target_override: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dynamic_start: 1,
            scheduler: SchedulerConfig::default(),
            mask_strategy: MaskStrategy::BitReversal,
            blending: true,
            restore_threshold: 0.9,
            restore_window: 5,
            baseline: Baseline::DepthVar,
            target_override: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, num_layers: usize, num_scales: usize) -> Result<()> {
        if self.dynamic_start == 0 {
            return Err(Error::InvalidParameter("dynamic_start must be at least 1"));
        }
        if !(-1.0..=1.0).contains(&self.restore_threshold) {
            return Err(Error::InvalidParameter("restore threshold must lie in [-1, 1]"));
        }
        if self.restore_window.is_multiple_of(2) {
            return Err(Error::InvalidParameter("restoration window must be odd"));
        }
        if let Some(t) = self.target_override {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidParameter("target override must lie in (0, 1]"));
            }
        }
        self.scheduler.validate(num_layers, num_scales)
    }

    /// Whether scale `index` runs with dynamic depth.
    pub fn is_dynamic(&self, index: usize) -> bool {
        index >= self.dynamic_start && index > self.scheduler.reference_scale
    }

    /// Config that never leaves full-depth inference.
    pub fn dense(num_scales: usize) -> Self {
        Self {
            dynamic_start: num_scales,
            ..Self::default()
        }
    }
}

/// Deterministic conditioning vector for a generation seed.
pub fn prompt_for_seed(channels: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..channels).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Result of one dynamic scale before accumulation.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicScaleOutput {
    pub states: LayerStates,
    pub logits: FeatureGrid,
    /// Code residual `z_i` after blending.
    pub codes: FeatureGrid,
    pub depths: DepthMap,
    pub compute_fraction: f64,
    pub restored: usize,
}

/// Masked execution, restoration, lookup and blending for given scores.
pub fn run_dynamic_scale(
    model: &ToyVarModel,
    f_prev: &FeatureGrid,
    step: ScaleStep,
    prompt: &[f64],
    scores: &DepthScoreMap,
    cache: &LayerCache,
    cfg: &PipelineConfig,
) -> Result<DynamicScaleOutput> {
    let layers = model.num_layers();
    let depths = depth_map(scores, layers);
    let mask = build_layer_mask(&depths, layers, cfg.mask_strategy)?;
    let masked = masked_scale_inference(model, f_prev, step, prompt, &mask, cache)?;
    let (logits, restored) = restore(model, f_prev, step, &masked.logits, &depths, cfg)?;
    let looked_up = model.lookup(&logits)?;
    let codes = if cfg.blending {
        blend_codes(scores, &looked_up)?
    } else {
        looked_up
    };
    Ok(DynamicScaleOutput {
        states: masked.states,
        logits,
        codes,
        compute_fraction: compute_fraction(&mask),
        depths,
        restored,
    })
}

fn restore(
    model: &ToyVarModel,
    f_prev: &FeatureGrid,
    step: ScaleStep,
    logits: &FeatureGrid,
    depths: &DepthMap,
    cfg: &PipelineConfig,
) -> Result<(FeatureGrid, usize)> {
    let zero = depths.zero_depth();
    if zero.count_ones() == 0 || model.num_layers() == 0 {
        return Ok((logits.clone(), 0));
    }
    let reference = f_prev.resize(step.height, step.width)?;
    restore_fully_masked(logits, &zero, &reference, cfg.restore_threshold, cfg.restore_window)
}

/// Everything recorded about one scale of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRecord {
    pub index: usize,
    pub height: usize,
    pub width: usize,
    pub dynamic: bool,
    pub compute_fraction: f64,
    pub target: Option<f64>,
    pub budget: Option<BudgetSolution>,
    pub scores: Option<DepthScoreMap>,
    pub depths: Option<DepthMap>,
    pub percentiles: Option<ScalarMap>,
    /// Code residual added at this scale.
    pub codes: FeatureGrid,
    /// Accumulated feature map after this scale.
    pub feature: FeatureGrid,
    pub restored: usize,
}

impl ScaleRecord {
    /// `sum over positions with rho <= eta of D / L`, divided by the token
    /// count: the sampled counterpart of the segment budget integral.
    pub fn segment_depth_fraction(&self, eta: f64) -> Option<f64> {
        let depths = self.depths.as_ref()?;
        let ranks = self.percentiles.as_ref()?;
        let layers = depths.num_layers() as f64;
        let sum: f64 = depths
            .as_slice()
            .iter()
            .zip(ranks.as_slice())
            .filter(|(_, &rho)| rho <= eta)
            .map(|(&d, _)| d as f64 / layers)
            .sum();
        Some(sum / depths.as_slice().len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub num_layers: usize,
    pub scales: Vec<ScaleRecord>,
    pub final_feature: FeatureGrid,
}

impl RunTrace {
    /// `sum(h w L) / sum(h w L fraction)` over all scales.
    pub fn theoretical_speedup(&self) -> f64 {
        let dense: f64 = self.scales.iter().map(|s| (s.height * s.width) as f64).sum();
        let spent: f64 = self
            .scales
            .iter()
            .map(|s| (s.height * s.width) as f64 * s.compute_fraction)
            .sum();
        dense / spent
    }
}

/// Budget target for scale `index`: `min(1, area(R) / area(index))`.
pub fn budget_target(schedule: &ScaleSchedule, cfg: &PipelineConfig, index: usize) -> f64 {
    if let Some(t) = cfg.target_override {
        return t;
    }
    let reference = schedule.area(cfg.scheduler.reference_scale) as f64;
    (reference / schedule.area(index) as f64).min(1.0)
}

/// Runs every scale of `schedule`. `oracle_image` is the dense run's final
/// feature map and is only consulted by [`Baseline::OraclePrune`].
pub fn run_trace(
    model: &ToyVarModel,
    schedule: &ScaleSchedule,
    cfg: &PipelineConfig,
    prompt: &[f64],
    oracle_image: Option<&FeatureGrid>,
) -> Result<RunTrace> {
    let layers = model.num_layers();
    if cfg.dynamic_start < schedule.len() {
        cfg.validate(layers, schedule.len())?;
    }
    let (fh, fw) = schedule.final_size();
    let mut feature = FeatureGrid::zeros(fh, fw, model.channels())?;
    let mut cache: Option<LayerCache> = None;
    let mut scales = Vec::with_capacity(schedule.len());

    for index in 0..schedule.len() {
        let step = schedule.step(index)?;
        let dynamic = cfg.is_dynamic(index) && layers > 0;
        let prev_cache = cache.as_ref();
        let record_base = |codes, feature, compute_fraction| ScaleRecord {
            index,
            height: step.height,
            width: step.width,
            dynamic,
            compute_fraction,
            target: None,
            budget: None,
            scores: None,
            depths: None,
            percentiles: None,
            codes,
            feature,
            restored: 0,
        };

        let (states, record) = match (dynamic, prev_cache) {
            (true, Some(prev)) => {
                let target = budget_target(schedule, cfg, index);
                match cfg.baseline {
                    Baseline::DepthVar => {
                        let sched = &cfg.scheduler;
                        let budget =
                            solve_budget_param(sched.family, sched.eta, target, sched.budget_mode)?;
                        let ranks = decision_ranks(prev, sched, step.height, step.width)?;
                        let scores = depth_scores(&ranks.percentiles, sched, budget.c);
                        let out = run_dynamic_scale(model, &feature, step, prompt, &scores, prev, cfg)?;
                        let next = accumulate_feature(&feature, &out.codes, fh, fw)?;
                        let mut rec = record_base(out.codes, next, out.compute_fraction);
                        rec.target = Some(target);
                        rec.budget = Some(budget);
                        rec.scores = Some(scores);
                        rec.depths = Some(out.depths);
                        rec.percentiles = Some(ranks.percentiles);
                        rec.restored = out.restored;
                        (out.states, rec)
                    }
                    Baseline::HardPrune | Baseline::OraclePrune => {
                        let keep = if cfg.baseline == Baseline::HardPrune {
                            let ranks = decision_ranks(prev, &cfg.scheduler, step.height, step.width)?;
                            top_fraction_mask(&ranks.base, target)?
                        } else {
                            let image = oracle_image
                                .ok_or(Error::InvalidParameter("oracle pruning needs a dense reference image"))?
                                .channel_mean()
                                .resize(step.height, step.width)?;
                            sobel_keep_mask(&image, target)?
                        };
                        let out = hard_prune_scale_inference(model, &feature, step, prompt, &keep, prev)?;
                        let depths = DepthMap::new(
                            step.height,
                            step.width,
                            layers,
                            keep.as_slice().iter().map(|&k| if k { layers } else { 0 }).collect(),
                        )?;
                        let (logits, restored) = restore(model, &feature, step, &out.logits, &depths, cfg)?;
                        let codes = model.lookup(&logits)?;
                        let next = accumulate_feature(&feature, &codes, fh, fw)?;
                        let mut rec = record_base(codes, next, depths.mean_fraction());
                        rec.target = Some(target);
                        rec.depths = Some(depths);
                        rec.restored = restored;
                        (out.states, rec)
                    }
                }
            }
            _ => {
                let out = model.full_scale_inference(&feature, step, prompt)?;
                let next = accumulate_feature(&feature, &out.codes, fh, fw)?;
                let mut rec = record_base(out.codes, next, 1.0);
                rec.dynamic = false;
                (out.states, rec)
            }
        };
        feature = record.feature.clone();
        cache = Some(LayerCache::from_states(index, &states)?);
        scales.push(record);
    }
    Ok(RunTrace {
        num_layers: layers,
        scales,
        final_feature: feature,
    })
}

pub fn dense_trace(model: &ToyVarModel, schedule: &ScaleSchedule, prompt: &[f64]) -> Result<RunTrace> {
    run_trace(model, schedule, &PipelineConfig::dense(schedule.len()), prompt, None)
}

/// Fidelity of one scale against the full-depth reference run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMetrics {
    pub index: usize,
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

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scales: Vec<ScaleMetrics>,
    pub speedup: f64,
    pub final_ssim: f64,
    pub final_mse: f64,
    pub trace: RunTrace,
}

impl RunReport {
    pub fn compare(trace: RunTrace, reference: &RunTrace, eta: f64) -> Result<Self> {
        if trace.scales.len() != reference.scales.len() {
            return Err(Error::InvalidParameter("runs cover different scale schedules"));
        }
        let scales = trace
            .scales
            .iter()
            .zip(&reference.scales)
            .map(|(s, r)| {
                Ok(ScaleMetrics {
                    index: s.index,
                    height: s.height,
                    width: s.width,
                    dynamic: s.dynamic,
                    compute_fraction: s.compute_fraction,
                    target: s.target,
                    schedule_param: s.budget.map(|b| b.c),
                    segment_fraction: s.segment_depth_fraction(eta),
                    restored: s.restored,
                    code_ssim: grid::ssim_grid(&s.codes, &r.codes)?,
                    code_mse: s.codes.mse(&r.codes)?,
                    feature_ssim: grid::ssim_grid(&s.feature, &r.feature)?,
                    feature_mse: s.feature.mse(&r.feature)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            speedup: trace.theoretical_speedup(),
            final_ssim: grid::ssim_grid(&trace.final_feature, &reference.final_feature)?,
            final_mse: trace.final_feature.mse(&reference.final_feature)?,
            scales,
            trace,
        })
    }
}

/// Dense reference run followed by the configured run, compared per scale.
pub fn run_pipeline(
    model: &ToyVarModel,
    schedule: &ScaleSchedule,
    cfg: &PipelineConfig,
    prompt: &[f64],
) -> Result<RunReport> {
    let reference = dense_trace(model, schedule, prompt)?;
    run_pipeline_against(model, schedule, cfg, prompt, &reference)
}

/// As [`run_pipeline`] with a precomputed dense reference.
pub fn run_pipeline_against(
    model: &ToyVarModel,
    schedule: &ScaleSchedule,
    cfg: &PipelineConfig,
    prompt: &[f64],
    reference: &RunTrace,
) -> Result<RunReport> {
    let trace = run_trace(model, schedule, cfg, prompt, Some(&reference.final_feature))?;
    RunReport::compare(trace, reference, cfg.scheduler.eta)
}
