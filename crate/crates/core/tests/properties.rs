mod common;

use depthvar_core::grid::{sobel_magnitude, ssim, FeatureGrid, ScalarMap};
use depthvar_core::mask::{build_layer_mask, compute_fraction, layer_permutation, layer_set, DepthMap, MaskStrategy};
use depthvar_core::model::ToyVarModel;
use depthvar_core::schedule::{
    percentile_ranks, schedule_area, schedule_value, solve_budget_param, BudgetMode, ScheduleFamily,
};
use proptest::prelude::*;

fn grid_strategy(max_side: usize, channels: usize) -> impl Strategy<Value = FeatureGrid> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(h, w)| {
        prop::collection::vec(-4.0f64..4.0, h * w * channels)
            .prop_map(move |data| FeatureGrid::new(h, w, channels, data).unwrap())
    })
}

fn map_strategy(max_side: usize) -> impl Strategy<Value = ScalarMap> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(h, w)| {
        prop::collection::vec(prop_oneof![-3i32..3, -1000i32..1000], h * w)
            .prop_map(move |v| ScalarMap::new(h, w, v.into_iter().map(f64::from).collect()).unwrap())
    })
}

fn family_strategy() -> impl Strategy<Value = ScheduleFamily> {
    prop_oneof![
        (1.0f64..40.0).prop_map(|k| ScheduleFamily::Sigmoid { k }),
        Just(ScheduleFamily::LinearA),
        Just(ScheduleFamily::LinearB),
    ]
}

proptest! {
    #[test]
    fn resize_is_linear(a in grid_strategy(6, 2), oh in 1usize..10, ow in 1usize..10, s in -2.0f64..2.0) {
        let b = FeatureGrid::from_fn(a.height(), a.width(), 2, |m, n, c| (m * 3 + n + c) as f64).unwrap();
        let lhs = a.scale(s).add(&b).unwrap().resize(oh, ow).unwrap();
        let rhs = a.resize(oh, ow).unwrap().scale(s).add(&b.resize(oh, ow).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-9);
    }

    #[test]
    fn resize_matches_pointwise_oracle(a in grid_strategy(7, 3), oh in 1usize..12, ow in 1usize..12) {
        let got = a.resize(oh, ow).unwrap();
        prop_assert!(got.max_abs_diff(&common::bilinear_oracle(&a, oh, ow)).unwrap() < 1e-12);
    }

    #[test]
    fn resize_preserves_constants(v in -5.0f64..5.0, h in 1usize..8, w in 1usize..8, oh in 1usize..12, ow in 1usize..12) {
        let g = FeatureGrid::filled(h, w, 3, v).unwrap();
        let r = g.resize(oh, ow).unwrap();
        prop_assert!(r.as_slice().iter().all(|x| (x - v).abs() < 1e-12));
    }

    #[test]
    fn sobel_of_constant_is_zero(v in -5.0f64..5.0, h in 3usize..12, w in 3usize..12) {
        let m = ScalarMap::filled(h, w, v).unwrap();
        let s = sobel_magnitude(&m).unwrap();
        prop_assert!(s.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ssim_is_symmetric(a in map_strategy(10)) {
        let b = a.map(|x| x * 0.5 + 1.0).map(f64::sin);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn schedule_is_non_increasing(family in family_strategy(), c in -3.0f64..3.0) {
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let v = schedule_value(family, c, i as f64 / 1000.0);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn percentiles_match_counting(map in map_strategy(16)) {
        let got = percentile_ranks(&map);
        let want = common::percentile_oracle(map.as_slice());
        prop_assert_eq!(got.as_slice(), want.as_slice());
    }

    #[test]
    fn permutation_is_bijective_and_nested(l in 1usize..200, strategy in prop_oneof![
        Just(MaskStrategy::BitReversal), Just(MaskStrategy::Uniform), Just(MaskStrategy::Prefix)
    ]) {
        let mut perm = layer_permutation(l);
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..l).collect::<Vec<_>>());
        for d in 0..=l {
            let set = layer_set(strategy, d, l).unwrap();
            prop_assert_eq!(set.len(), d);
            let mut uniq = set.clone();
            uniq.sort_unstable();
            uniq.dedup();
            prop_assert_eq!(uniq.len(), d);
            if strategy != MaskStrategy::Uniform && d > 0 {
                let prev = layer_set(strategy, d - 1, l).unwrap();
                prop_assert_eq!(&set[..d - 1], &prev[..]);
            }
        }
    }

    #[test]
    fn compute_fraction_is_mean_depth(
        l in 1usize..40,
        (h, w) in (1usize..9, 1usize..9),
        seed in any::<u64>(),
    ) {
        let depths: Vec<usize> = (0..h * w).map(|p| ((seed >> (p % 60)) as usize + p * 7) % (l + 1)).collect();
        let map = DepthMap::new(h, w, l, depths.clone()).unwrap();
        let mask = build_layer_mask(&map, l, MaskStrategy::BitReversal).unwrap();
        let mean = depths.iter().sum::<usize>() as f64 / (h * w * l) as f64;
        prop_assert!((compute_fraction(&mask) - mean).abs() < 1e-12);
        prop_assert_eq!(mask.depths(), map);
    }

    #[test]
    fn solver_is_idempotent(family in family_strategy(), eta in 0.1f64..0.95, frac in 0.05f64..0.95) {
        let target = eta * frac;
        let first = solve_budget_param(family, eta, target, BudgetMode::SegmentIntegral).unwrap();
        prop_assert!((eta * schedule_area(family, first.c) - target).abs() < 1e-8);
        let again = solve_budget_param(family, eta, first.realized, BudgetMode::SegmentIntegral).unwrap();
        prop_assert!((again.realized - first.realized).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn layer_forward_is_permutation_equivariant(seed in any::<u64>(), rot in 0usize..16) {
        let model = ToyVarModel::new(seed % 5, 2, 8, 8).unwrap();
        let x: Vec<f64> = (0..16 * 8).map(|i| ((i as u64 ^ seed) % 97) as f64 / 48.0 - 1.0).collect();
        let pos: Vec<(usize, usize)> = (0..16).map(|p| (p / 4, p % 4)).collect();
        let out = model.layer_forward(1, &x, &pos).unwrap();
        // rotate storage order by `rot` tokens, scramble with a stride
        let order: Vec<usize> = (0..16).map(|i| (i * 5 + rot) % 16).collect();
        let px: Vec<f64> = order.iter().flat_map(|&t| x[t * 8..(t + 1) * 8].iter().copied()).collect();
        let pp: Vec<(usize, usize)> = order.iter().map(|&t| pos[t]).collect();
        let pout = model.layer_forward(1, &px, &pp).unwrap();
        for (k, &t) in order.iter().enumerate() {
            for ch in 0..8 {
                prop_assert!((pout[k * 8 + ch] - out[t * 8 + ch]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lookup_returns_codebook_rows(seed in 0u64..50, h in 1usize..5, w in 1usize..5) {
        let model = ToyVarModel::new(seed, 2, 8, 16).unwrap();
        let r = FeatureGrid::from_fn(h, w, 8, |m, n, c| ((m * 7 + n * 3 + c) as f64 + seed as f64).sin()).unwrap();
        let (_, codes) = model.head_and_lookup(&r).unwrap();
        for m in 0..h {
            for n in 0..w {
                let px = codes.pixel(m, n);
                prop_assert!((0..16).any(|i| model.codebook_entry(i) == px));
            }
        }
    }
}
