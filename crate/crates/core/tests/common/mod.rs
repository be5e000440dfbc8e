//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls the code path it is used to check.

#![allow(dead_code)]

use depthvar_core::dynamic::{LayerCache, RunTrace};
use depthvar_core::grid::FeatureGrid;
use depthvar_core::mask::LayerMask;
use depthvar_core::model::{ScaleStep, ToyVarModel, NORM_EPS, ROPE_BASE};

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Per-pixel bilinear evaluation with pixel-centre coordinates.
pub fn bilinear_oracle(src: &FeatureGrid, oh: usize, ow: usize) -> FeatureGrid {
    let (h, w, c) = src.shape();
    FeatureGrid::from_fn(oh, ow, c, |y, x, ch| {
        let sy = ((y as f64 + 0.5) * h as f64 / oh as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let sx = ((x as f64 + 0.5) * w as f64 / ow as f64 - 0.5).clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (ty, tx) = (sy - y0 as f64, sx - x0 as f64);
        src.get(y0, x0, ch) * (1.0 - ty) * (1.0 - tx)
            + src.get(y0, x1, ch) * (1.0 - ty) * tx
            + src.get(y1, x0, ch) * ty * (1.0 - tx)
            + src.get(y1, x1, ch) * ty * tx
    })
    .unwrap()
}

fn rms(x: &[f64], gain: &[f64]) -> Vec<f64> {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let s = (ms + NORM_EPS).sqrt();
    x.iter().zip(gain).map(|(v, g)| v / s * g).collect()
}

fn mat(w: &[f64], x: &[f64]) -> Vec<f64> {
    w.chunks(x.len())
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn rotate(v: &mut [f64], m: usize, n: usize) {
    let pairs = v.len() / 2;
    let rows = pairs.div_ceil(2);
    let cols = pairs - rows;
    for p in 0..pairs {
        let theta = if p < rows {
            m as f64 * ROPE_BASE.powf(-(p as f64) / rows as f64)
        } else {
            let j = p - rows;
            n as f64 * ROPE_BASE.powf(-(j as f64) / cols as f64)
        };
        let (a, b) = (v[2 * p], v[2 * p + 1]);
        v[2 * p] = a * theta.cos() - b * theta.sin();
        v[2 * p + 1] = a * theta.sin() + b * theta.cos();
    }
}

/// Output of block `layer` for one token, given the full attention context
/// (which contains the token itself).
pub fn block_oracle(
    model: &ToyVarModel,
    layer: usize,
    token: &[f64],
    token_pos: (usize, usize),
    context: &[(Vec<f64>, (usize, usize))],
) -> Vec<f64> {
    let p = model.block(layer);
    let c = token.len();
    let scale = 1.0 / model.num_layers() as f64;
    let proj = |x: &[f64], w: &[f64], pos: (usize, usize), rope: bool| {
        let mut v = mat(w, &rms(x, &p.attn_norm));
        if rope {
            rotate(&mut v, pos.0, pos.1);
        }
        v
    };
    let q = proj(token, &p.wq, token_pos, true);
    let logits: Vec<f64> = context
        .iter()
        .map(|(x, pos)| {
            let k = proj(x, &p.wk, *pos, true);
            q.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() / (c as f64).sqrt()
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut mixed = vec![0.0; c];
    for ((x, pos), w) in context.iter().zip(&weights) {
        let v = proj(x, &p.wv, *pos, false);
        for (m, vv) in mixed.iter_mut().zip(&v) {
            *m += w / total * vv;
        }
    }
    let attn = mat(&p.wo, &mixed);
    let h: Vec<f64> = token.iter().zip(&attn).map(|(x, a)| x + scale * a).collect();
    let hidden: Vec<f64> = mat(&p.w1, &rms(&h, &p.ffn_norm))
        .iter()
        .zip(&p.b1)
        .map(|(a, b)| {
            let x = a + b;
            0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
        })
        .collect();
    let ffn = mat(&p.w2, &hidden);
    h.iter().zip(&ffn).map(|(a, f)| a + scale * f).collect()
}

/// Computes every token's trajectory through a masked scale one token at a
/// time. Returns the states `r^0 ..= r^L` as flat row-major vectors.
pub fn masked_trajectory_oracle(
    model: &ToyVarModel,
    f_prev: &FeatureGrid,
    step: ScaleStep,
    prompt: &[f64],
    mask: &LayerMask,
    cache: &LayerCache,
) -> Vec<FeatureGrid> {
    let (h, w) = (step.height, step.width);
    let c = model.channels();
    let mut states = vec![model.embed_input(f_prev, step, prompt).unwrap()];
    for layer in 0..model.num_layers() {
        let prev = states.last().unwrap().clone();
        let proxy = bilinear_oracle(cache.block_delta(layer).unwrap(), h, w);
        let context: Vec<(Vec<f64>, (usize, usize))> = (0..h)
            .flat_map(|m| (0..w).map(move |n| (m, n)))
            .filter(|&(m, n)| mask.get(layer, m, n))
            .map(|(m, n)| (prev.pixel(m, n).to_vec(), (m, n)))
            .collect();
        let next = FeatureGrid::from_fn(h, w, c, |m, n, ch| {
            if mask.get(layer, m, n) {
                block_oracle(model, layer, prev.pixel(m, n), (m, n), &context)[ch]
            } else {
                prev.get(m, n, ch) + proxy.get(m, n, ch)
            }
        })
        .unwrap();
        states.push(next);
    }
    states
}

/// Counts active `(layer, token)` pairs directly from recorded depths and
/// returns `dense pairs / executed pairs`.
pub fn flop_count_speedup(trace: &RunTrace) -> f64 {
    let layers = trace.num_layers;
    let mut dense = 0usize;
    let mut executed = 0usize;
    for s in &trace.scales {
        let tokens = s.height * s.width;
        dense += tokens * layers;
        executed += match &s.depths {
            Some(d) => d.as_slice().iter().sum::<usize>(),
            None => tokens * layers,
        };
    }
    dense as f64 / executed as f64
}

/// O(n^2) strict-greater counting.
pub fn percentile_oracle(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| values.iter().filter(|&&x| x > *v).count() as f64 / values.len() as f64)
        .collect()
}
