//! Adaptive depth score scheduling.
//!
//! Per-layer deltas cached from the previous scale are reduced to a decision
//! rank map, turned into strict-greater percentiles, and mapped through a
//! monotone schedule function `G` with a cyclic percentile rotation at `eta`.
//! The schedule parameter `c` is solved per scale so that the integrated
//! depth score matches a compute budget.

use alloc::vec::Vec;

use crate::dynamic::LayerCache;
use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, ScalarMap};
use crate::mask::DepthMap;

/// Per-position reduction applied to a layer delta before aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceMetric {
    /// Mean absolute value over channels.
    #[default]
    Mae,
    /// Mean squared value over channels.
    Mse,
    /// Channel mean minus its map-wide mean.
    Sub,
}

/// Monotone non-increasing schedule `G: [0, 1] -> [0, 1]`, parameterised by
/// a solved constant `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleFamily {
    /// `1 / (1 + exp(k (x - c)))`
    Sigmoid { k: f64 },
    /// `1 - c x`, clamped
    LinearA,
    /// `c (x - 1)`, clamped; `c <= 0` for a non-trivial schedule
    LinearB,
}

impl Default for ScheduleFamily {
    fn default() -> Self {
        ScheduleFamily::Sigmoid { k: 12.0 }
    }
}

/// Which integral of the rotated schedule is aligned with the budget target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BudgetMode {
    /// `integral_0^eta G'(rho) d rho = target`
    #[default]
    SegmentIntegral,
    /// `integral_0^1 G'(rho) d rho = target`
    FullIntegral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    pub metric: ReferenceMetric,
    /// First block index (inclusive) whose delta enters the decision map.
    pub layer_begin: usize,
    /// Last block index (inclusive).
    pub layer_end: usize,
    pub family: ScheduleFamily,
    /// Rotation pivot in `(0, 1)`.
    pub eta: f64,
    /// Reference scale index `R`; scales after it are budgeted to its area.
    pub reference_scale: usize,
    pub rotation: bool,
    pub budget_mode: BudgetMode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            metric: ReferenceMetric::Mae,
            layer_begin: 3,
            layer_end: 19,
            family: ScheduleFamily::default(),
            eta: 0.8,
            reference_scale: 5,
            rotation: true,
            budget_mode: BudgetMode::SegmentIntegral,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self, num_layers: usize, num_scales: usize) -> Result<()> {
        if self.layer_end >= num_layers {
            return Err(Error::out_of_range(
                "layer_end",
                self.layer_end,
                0,
                num_layers.saturating_sub(1),
            ));
        }
        if self.layer_begin > self.layer_end {
            return Err(Error::InvalidParameter("layer_begin must not exceed layer_end"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter("eta must lie in (0, 1)"));
        }
        if self.reference_scale >= num_scales {
            return Err(Error::out_of_range(
                "reference_scale",
                self.reference_scale,
                0,
                num_scales.saturating_sub(1),
            ));
        }
        if let ScheduleFamily::Sigmoid { k } = self.family {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidParameter("sigmoid sharpness k must be positive"));
            }
        }
        Ok(())
    }
}

/// Per-position depth scores, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthScoreMap(ScalarMap);

impl DepthScoreMap {
    pub fn new(map: ScalarMap) -> Result<Self> {
        if map.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("depth scores must lie in [0, 1]"));
        }
        Ok(Self(map))
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(ScalarMap::filled(height, width, value)?)
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.0.get(m, n)
    }

    pub fn as_map(&self) -> &ScalarMap {
        &self.0
    }
}

/// Base decision map and its percentile normalization for one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRankArtifacts {
    pub base: ScalarMap,
    pub percentiles: ScalarMap,
}

pub fn reference_response(delta: &FeatureGrid, metric: ReferenceMetric) -> ScalarMap {
    let c = delta.channels() as f64;
    let per_position = |f: fn(f64) -> f64| -> Vec<f64> {
        delta
            .as_slice()
            .chunks_exact(delta.channels())
            .map(|px| px.iter().map(|&v| f(v)).sum::<f64>() / c)
            .collect()
    };
    let data = match metric {
        ReferenceMetric::Mae => per_position(f64::abs),
        ReferenceMetric::Mse => per_position(|v| v * v),
        ReferenceMetric::Sub => {
            let mut means = per_position(|v| v);
            let global = means.iter().sum::<f64>() / means.len() as f64;
            means.iter_mut().for_each(|v| *v -= global);
            means
        }
    };
    ScalarMap::from_parts(delta.height(), delta.width(), data)
}

/// Sums reference responses of blocks `layer_begin..=layer_end` and resizes
/// the result to the current scale.
pub fn base_decision_map(
    cache: &LayerCache,
    cfg: &SchedulerConfig,
    height: usize,
    width: usize,
) -> Result<ScalarMap> {
    if cfg.layer_begin > cfg.layer_end {
        return Err(Error::InvalidParameter("layer_begin must not exceed layer_end"));
    }
    let mut acc: Option<ScalarMap> = None;
    for layer in cfg.layer_begin..=cfg.layer_end {
        let response = reference_response(cache.block_delta(layer)?, cfg.metric);
        acc = Some(match acc {
            None => response,
            Some(sum) => sum.add(&response)?,
        });
    }
    // the range is non-empty, so acc is set
    acc.expect("non-empty layer range").resize(height, width)
}

/// Fraction of positions whose value is strictly greater; ties share a rank.
pub fn percentile_ranks(base: &ScalarMap) -> ScalarMap {
    let mut sorted: Vec<f64> = base.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let total = n as f64;
    base.map(|v| {
        let not_greater = sorted.partition_point(|&x| x <= v);
        (n - not_greater) as f64 / total
    })
}

pub fn decision_ranks(
    cache: &LayerCache,
    cfg: &SchedulerConfig,
    height: usize,
    width: usize,
) -> Result<DecisionRankArtifacts> {
    let base = base_decision_map(cache, cfg, height, width)?;
    let percentiles = percentile_ranks(&base);
    Ok(DecisionRankArtifacts { base, percentiles })
}

pub fn schedule_value(family: ScheduleFamily, c: f64, x: f64) -> f64 {
    let raw = match family {
        ScheduleFamily::Sigmoid { k } => 1.0 / (1.0 + libm::exp(k * (x - c))),
        ScheduleFamily::LinearA => 1.0 - c * x,
        ScheduleFamily::LinearB => c * (x - 1.0),
    };
    raw.clamp(0.0, 1.0)
}

/// Schedule with cyclic percentile rotation about `eta`.
pub fn rotated_schedule(family: ScheduleFamily, c: f64, eta: f64, rho: f64) -> f64 {
    if rho <= eta {
        schedule_value(family, c, rho / eta)
    } else {
        schedule_value(family, c, (1.0 - rho) / (1.0 - eta))
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

/// Closed-form `integral_0^1 G(x) dx` for the clamped schedule.
pub fn schedule_area(family: ScheduleFamily, c: f64) -> f64 {
    match family {
        ScheduleFamily::Sigmoid { k } => 1.0 - (softplus(k * (1.0 - c)) - softplus(-k * c)) / k,
        ScheduleFamily::LinearA => {
            if c <= 0.0 {
                1.0
            } else if c <= 1.0 {
                1.0 - c / 2.0
            } else {
                1.0 / (2.0 * c)
            }
        }
        ScheduleFamily::LinearB => {
            let a = -c;
            if a <= 0.0 {
                0.0
            } else if a <= 1.0 {
                a / 2.0
            } else {
                1.0 - 1.0 / (2.0 * a)
            }
        }
    }
}

/// Integral of the rotated schedule selected by `mode`.
pub fn budget_integral(family: ScheduleFamily, c: f64, eta: f64, mode: BudgetMode) -> f64 {
    // both rotation branches are affine reparameterisations of G on [0, 1]
    let area = schedule_area(family, c);
    match mode {
        BudgetMode::SegmentIntegral => eta * area,
        BudgetMode::FullIntegral => area,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSolution {
    pub c: f64,
    /// Integral actually achieved by `c`; differs from the target only when
    /// saturated.
    pub realized: f64,
    pub saturated: bool,
}

pub const BISECTION_STEPS: usize = 200;
const SOLVE_TOLERANCE: f64 = 1e-9;
/// Sigmoid offsets beyond `SIGMOID_REACH / k` outside `[0, 1]` make `G`
/// round to exactly 0 or 1 over the whole unit interval.
const SIGMOID_REACH: f64 = 40.0;
const LINEAR_SATURATION: f64 = 1e12;

/// Solves for the schedule constant `c` whose budget integral equals `target`.
pub fn solve_budget_param(
    family: ScheduleFamily,
    eta: f64,
    target: f64,
    mode: BudgetMode,
) -> Result<BudgetSolution> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::NonPositiveTarget(target));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter("eta must lie in (0, 1)"));
    }
    let goal = match mode {
        BudgetMode::SegmentIntegral => target / eta,
        BudgetMode::FullIntegral => target,
    };

    // (lo, hi) bracket with area increasing from lo to hi
    let (lo, hi) = match family {
        ScheduleFamily::Sigmoid { k } => {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidParameter("sigmoid sharpness k must be positive"));
            }
            (-SIGMOID_REACH / k, 1.0 + SIGMOID_REACH / k)
        }
        // area decreases in c
        ScheduleFamily::LinearA => (LINEAR_SATURATION, 0.0),
        ScheduleFamily::LinearB => (0.0, -LINEAR_SATURATION),
    };
    let area = |c: f64| schedule_area(family, c);
    let solution = |c: f64, saturated: bool| BudgetSolution {
        c,
        realized: budget_integral(family, c, eta, mode),
        saturated,
    };
    if goal >= area(hi) {
        return Ok(solution(hi, (goal - area(hi)).abs() > SOLVE_TOLERANCE));
    }
    if goal <= area(lo) {
        return Ok(solution(lo, (goal - area(lo)).abs() > SOLVE_TOLERANCE));
    }

    let (mut lo, mut hi) = (lo, hi);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..BISECTION_STEPS {
        mid = 0.5 * (lo + hi);
        let value = area(mid);
        if value == goal {
            break;
        }
        if value < goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = (area(mid) - goal).abs();
    if residual > SOLVE_TOLERANCE {
        return Err(Error::NoConvergence {
            steps: BISECTION_STEPS,
            residual,
        });
    }
    Ok(solution(mid, false))
}

/// Applies the (optionally rotated) schedule elementwise to percentiles.
pub fn depth_scores(percentiles: &ScalarMap, cfg: &SchedulerConfig, c: f64) -> DepthScoreMap {
    let map = if cfg.rotation {
        percentiles.map(|rho| rotated_schedule(cfg.family, c, cfg.eta, rho))
    } else {
        percentiles.map(|rho| schedule_value(cfg.family, c, rho))
    };
    DepthScoreMap(map)
}

/// `floor(s * L)` per position.
pub fn depth_map(scores: &DepthScoreMap, num_layers: usize) -> DepthMap {
    let l = num_layers as f64;
    let depths = scores
        .0
        .as_slice()
        .iter()
        .map(|&s| (libm::floor(s * l) as usize).min(num_layers))
        .collect();
    DepthMap::from_parts(scores.height(), scores.width(), num_layers, depths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const SIG12: ScheduleFamily = ScheduleFamily::Sigmoid { k: 12.0 };

    fn counting_oracle(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|v| values.iter().filter(|&&x| x > *v).count() as f64 / values.len() as f64)
            .collect()
    }

    #[test]
    fn reference_response_metrics() {
        let zero = FeatureGrid::zeros(2, 2, 3).unwrap();
        assert!(reference_response(&zero, ReferenceMetric::Mae)
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));

        let d = FeatureGrid::new(1, 1, 2, vec![3.0, -3.0]).unwrap();
        assert_eq!(reference_response(&d, ReferenceMetric::Mae).get(0, 0), 3.0);
        assert_eq!(reference_response(&d, ReferenceMetric::Mse).get(0, 0), 9.0);

        let g = FeatureGrid::from_fn(2, 2, 2, |m, n, c| (m * 5 + n * 2 + c) as f64 * 0.7).unwrap();
        let sub = reference_response(&g, ReferenceMetric::Sub);
        assert!(sub.as_slice().iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn percentile_examples() {
        let m = ScalarMap::new(1, 3, vec![5.0, 1.0, 3.0]).unwrap();
        assert_eq!(percentile_ranks(&m).as_slice(), &[0.0, 2.0 / 3.0, 1.0 / 3.0]);
        let m = ScalarMap::new(2, 2, vec![4.0, 4.0, 1.0, 1.0]).unwrap();
        assert_eq!(percentile_ranks(&m).as_slice(), &[0.0, 0.0, 0.5, 0.5]);
        let c = ScalarMap::filled(3, 3, 7.0).unwrap();
        assert!(percentile_ranks(&c).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn percentile_matches_counting_oracle_with_ties() {
        let data: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64).collect();
        let m = ScalarMap::new(6, 10, data.clone()).unwrap();
        assert_eq!(percentile_ranks(&m).as_slice(), counting_oracle(&data).as_slice());
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(schedule_value(SIG12, 0.5, 0.5), 0.5);
        assert_eq!(schedule_value(ScheduleFamily::LinearA, 1.0, 1.0), 0.0);
        assert_eq!(schedule_value(ScheduleFamily::LinearA, 1.0, 0.0), 1.0);
        assert_eq!(schedule_value(ScheduleFamily::LinearB, -1.0, 0.0), 1.0);
        assert_eq!(schedule_value(ScheduleFamily::LinearB, -1.0, 1.0), 0.0);
    }

    #[test]
    fn rotation_examples() {
        let g0 = schedule_value(SIG12, 0.5, 0.0);
        let g1 = schedule_value(SIG12, 0.5, 1.0);
        assert_eq!(rotated_schedule(SIG12, 0.5, 0.8, 0.0), g0);
        assert_eq!(rotated_schedule(SIG12, 0.5, 0.8, 1.0), g0);
        assert_eq!(rotated_schedule(SIG12, 0.5, 0.8, 0.8), g1);
        let right = rotated_schedule(SIG12, 0.5, 0.8, 0.8 + 1e-12);
        assert!((right - g1).abs() < 1e-9);
        assert_eq!(rotated_schedule(SIG12, 0.5, 0.8, 0.4), 0.5);
    }

    #[test]
    fn closed_form_areas() {
        assert!((schedule_area(SIG12, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(schedule_area(ScheduleFamily::LinearA, 1.0), 0.5);
        assert_eq!(schedule_area(ScheduleFamily::LinearB, -1.0), 0.5);
    }

    #[test]
    fn solver_examples() {
        let s = solve_budget_param(SIG12, 0.8, 0.4, BudgetMode::SegmentIntegral).unwrap();
        assert!((s.c - 0.5).abs() < 1e-9);
        assert!(!s.saturated);
        let s = solve_budget_param(ScheduleFamily::LinearA, 0.8, 0.4, BudgetMode::SegmentIntegral)
            .unwrap();
        assert!((s.c - 1.0).abs() < 1e-8);
        let s = solve_budget_param(ScheduleFamily::LinearB, 0.5, 0.25, BudgetMode::FullIntegral)
            .unwrap();
        assert!((s.c + 0.5).abs() < 1e-8);
    }

    #[test]
    fn solver_saturates_to_full_depth() {
        let s = solve_budget_param(SIG12, 0.8, 1.0, BudgetMode::SegmentIntegral).unwrap();
        assert!(s.saturated);
        for i in 0..=100 {
            assert_eq!(schedule_value(SIG12, s.c, i as f64 / 100.0), 1.0);
        }
        let s = solve_budget_param(ScheduleFamily::LinearA, 0.8, 0.9, BudgetMode::SegmentIntegral)
            .unwrap();
        assert_eq!(s.c, 0.0);
        assert!((s.realized - 0.8).abs() < 1e-15);
    }

    #[test]
    fn solver_rejects_bad_targets() {
        for t in [0.0, -0.1, f64::NAN] {
            assert!(matches!(
                solve_budget_param(SIG12, 0.8, t, BudgetMode::SegmentIntegral),
                Err(Error::NonPositiveTarget(_))
            ));
        }
    }

    #[test]
    fn depth_scores_and_map() {
        let cfg = SchedulerConfig::default();
        let zeros = ScalarMap::zeros(2, 3).unwrap();
        let s = depth_scores(&zeros, &cfg, 0.5);
        let g0 = schedule_value(cfg.family, 0.5, 0.0);
        assert!(s.as_map().as_slice().iter().all(|&v| v == g0));

        let p = ScalarMap::new(1, 3, vec![0.1, 0.5, 0.9]).unwrap();
        let plain = depth_scores(&p, &SchedulerConfig { rotation: false, ..cfg.clone() }, 0.5);
        for (v, rho) in plain.as_map().as_slice().iter().zip(p.as_slice()) {
            assert_eq!(*v, schedule_value(cfg.family, 0.5, *rho));
        }

        let s = DepthScoreMap::new(ScalarMap::new(1, 3, vec![1.0, 0.0, 0.99]).unwrap()).unwrap();
        assert_eq!(depth_map(&s, 32).as_slice(), &[32, 0, 31]);
    }

    #[test]
    fn config_validation() {
        let cfg = SchedulerConfig::default();
        assert!(cfg.validate(32, 10).is_ok());
        assert!(cfg.validate(16, 10).is_err());
        assert!(SchedulerConfig { eta: 1.0, ..cfg.clone() }.validate(32, 10).is_err());
        assert!(SchedulerConfig { reference_scale: 10, ..cfg }.validate(32, 10).is_err());
    }
}
