//! A deterministic toy next-scale-prediction transformer.
//!
//! The model is small on purpose: single-head attention with 2D rotary
//! position encoding, a two-layer GELU feed-forward, RMS pre-norm and
//! residual branches scaled by `1 / L`. Every parameter is drawn from a
//! ChaCha stream seeded by the model seed, so two models built from the same
//! `(seed, L, C, V)` are bit-identical.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::FeatureGrid;

/// Base of the rotary frequency ladder.
pub const ROPE_BASE: f64 = 10_000.0;
/// Epsilon inside the RMS normalization.
pub const NORM_EPS: f64 = 1e-6;
const FFN_MULT: usize = 2;

/// Ordered `(height, width)` token grids, starting from the `1x1` start token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleSchedule(Vec<(usize, usize)>);

impl ScaleSchedule {
    pub fn new(sizes: Vec<(usize, usize)>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidParameter("a scale schedule needs at least two scales"));
        }
        if sizes[0] != (1, 1) {
            return Err(Error::InvalidParameter("the first scale must be 1x1"));
        }
        if sizes
            .windows(2)
            .any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1)
        {
            return Err(Error::InvalidParameter("scale sizes must be non-decreasing"));
        }
        Ok(Self(sizes))
    }

    /// Ten scales from `1x1` to `32x32`.
    pub fn default_toy() -> Self {
        Self(vec![
            (1, 1),
            (2, 2),
            (3, 3),
            (4, 4),
            (6, 6),
            (9, 9),
            (13, 13),
            (18, 18),
            (24, 24),
            (32, 32),
        ])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sizes(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn step(&self, index: usize) -> Result<ScaleStep> {
        let &(height, width) = self
            .0
            .get(index)
            .ok_or_else(|| Error::out_of_range("scale", index, 0, self.0.len() - 1))?;
        Ok(ScaleStep {
            index,
            height,
            width,
        })
    }

    pub fn final_size(&self) -> (usize, usize) {
        *self.0.last().expect("non-empty schedule")
    }

    pub fn area(&self, index: usize) -> usize {
        let (h, w) = self.0[index];
        h * w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleStep {
    pub index: usize,
    pub height: usize,
    pub width: usize,
}

/// Parameters of one transformer block. Matrices are `out x in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub attn_norm: Vec<f64>,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    pub ffn_norm: Vec<f64>,
    /// `hidden x C`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `C x hidden`
    pub w2: Vec<f64>,
}

/// States `r^0 ..= r^L` of one scale; `r^0` is the embedded input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStates(Vec<FeatureGrid>);

impl LayerStates {
    pub fn new(states: Vec<FeatureGrid>) -> Result<Self> {
        let first = states
            .first()
            .ok_or(Error::InvalidParameter("layer states need the embedded input"))?;
        if let Some(bad) = states.iter().find(|s| s.shape() != first.shape()) {
            return Err(Error::ShapeMismatch {
                left: first.shape(),
                right: bad.shape(),
            });
        }
        Ok(Self(states))
    }

    /// Number of blocks `L`.
    pub fn num_layers(&self) -> usize {
        self.0.len() - 1
    }

    pub fn get(&self, index: usize) -> &FeatureGrid {
        &self.0[index]
    }

    pub fn embedded(&self) -> &FeatureGrid {
        &self.0[0]
    }

    pub fn last(&self) -> &FeatureGrid {
        self.0.last().expect("non-empty")
    }

    pub fn as_slice(&self) -> &[FeatureGrid] {
        &self.0
    }
}

/// Output of one scale: every intermediate state plus head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleOutput {
    pub states: LayerStates,
    pub logits: FeatureGrid,
    pub codes: FeatureGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyVarModel {
    num_layers: usize,
    channels: usize,
    codebook_size: usize,
    seed: u64,
    blocks: Vec<BlockParams>,
    embed: Vec<f64>,
    /// Per-channel `(freq_row, freq_col, phase)` of the positional field.
    positional: Vec<(f64, f64, f64)>,
    head_norm: Vec<f64>,
    head: Vec<f64>,
    codebook: Vec<f64>,
}

fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, std: f64) -> Vec<f64> {
    // uniform on [-a, a] has standard deviation a / sqrt(3)
    let a = std * libm::sqrt(3.0);
    (0..len).map(|_| rng.gen_range(-a..a)).collect()
}

fn gain_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| 1.0 + rng.gen_range(-0.1..0.1)).collect()
}

fn matvec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

fn rms_norm(x: &[f64], gain: &[f64], out: &mut [f64]) {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let inv = 1.0 / libm::sqrt(ms + NORM_EPS);
    for ((o, v), g) in out.iter_mut().zip(x).zip(gain) {
        *o = v * inv * g;
    }
}

fn gelu(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + libm::tanh(SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)))
}

/// Rotary angle for each channel pair of a token at `(m, n)`.
///
/// The first `ceil(P / 2)` of the `P = C / 2` pairs rotate with the row
/// index, the rest with the column index. Within each group pair `j` of `G`
/// uses frequency `ROPE_BASE^(-j / G)`.
pub fn rope_angles(channels: usize, m: usize, n: usize) -> Vec<f64> {
    let pairs = channels / 2;
    let row_pairs = pairs.div_ceil(2);
    let col_pairs = pairs - row_pairs;
    let mut angles = Vec::with_capacity(pairs);
    for j in 0..row_pairs {
        let freq = libm::pow(ROPE_BASE, -(j as f64) / row_pairs as f64);
        angles.push(m as f64 * freq);
    }
    for j in 0..col_pairs {
        let freq = libm::pow(ROPE_BASE, -(j as f64) / col_pairs as f64);
        angles.push(n as f64 * freq);
    }
    angles
}

fn apply_rope(v: &mut [f64], angles: &[f64]) {
    for (pair, &theta) in angles.iter().enumerate() {
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        let (a, b) = (v[2 * pair], v[2 * pair + 1]);
        v[2 * pair] = a * c - b * s;
        v[2 * pair + 1] = a * s + b * c;
    }
}

impl ToyVarModel {
    pub fn new(seed: u64, num_layers: usize, channels: usize, codebook_size: usize) -> Result<Self> {
        if channels == 0 || codebook_size == 0 {
            return Err(Error::InvalidParameter("channels and codebook size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = channels;
        let hidden = FFN_MULT * c;
        let std_c = 1.0 / libm::sqrt(c as f64);
        let std_h = 1.0 / libm::sqrt(hidden as f64);
        let blocks = (0..num_layers)
            .map(|_| BlockParams {
                attn_norm: gain_vec(&mut rng, c),
                wq: uniform_vec(&mut rng, c * c, std_c),
                wk: uniform_vec(&mut rng, c * c, std_c),
                wv: uniform_vec(&mut rng, c * c, std_c),
                wo: uniform_vec(&mut rng, c * c, std_c),
                ffn_norm: gain_vec(&mut rng, c),
                w1: uniform_vec(&mut rng, hidden * c, std_c),
                b1: uniform_vec(&mut rng, hidden, 0.1),
                w2: uniform_vec(&mut rng, c * hidden, std_h),
            })
            .collect();
        let embed = uniform_vec(&mut rng, c * c, std_c);
        let positional = (0..c)
            .map(|_| {
                (
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(0.0..core::f64::consts::TAU),
                )
            })
            .collect();
        let head_norm = gain_vec(&mut rng, c);
        let head = uniform_vec(&mut rng, codebook_size * c, std_c);
        let codebook = uniform_vec(&mut rng, codebook_size * c, 1.0);
        Ok(Self {
            num_layers,
            channels,
            codebook_size,
            seed,
            blocks,
            embed,
            positional,
            head_norm,
            head,
            codebook,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn block(&self, layer: usize) -> &BlockParams {
        &self.blocks[layer]
    }

    pub fn codebook_entry(&self, index: usize) -> &[f64] {
        &self.codebook[index * self.channels..(index + 1) * self.channels]
    }

    /// Residual branch weight `1 / L`.
    pub fn residual_scale(&self) -> f64 {
        1.0 / self.num_layers.max(1) as f64
    }

    pub fn set_head(&mut self, weights: Vec<f64>, norm_gain: Vec<f64>) -> Result<()> {
        if weights.len() != self.codebook_size * self.channels || norm_gain.len() != self.channels {
            return Err(Error::InvalidParameter("head weights must be V x C with a C-gain"));
        }
        self.head = weights;
        self.head_norm = norm_gain;
        Ok(())
    }

    /// Additive embedding of scale `index` at an `h x w` grid: a per-scale
    /// vector plus a resolution-normalized sinusoidal positional field.
    pub fn scale_embedding(&self, index: usize, height: usize, width: usize) -> Result<FeatureGrid> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1 + index as u64);
        let vector = uniform_vec(&mut rng, self.channels, 0.5);
        FeatureGrid::from_fn(height, width, self.channels, |m, n, ch| {
            let u = (m as f64 + 0.5) / height as f64;
            let v = (n as f64 + 0.5) / width as f64;
            let (fr, fc, phase) = self.positional[ch];
            vector[ch] + 0.5 * libm::sin(fr * u + fc * v + phase)
        })
    }

    /// `r^0 = W_e * resize(f_prev) + scale_embedding + prompt`.
    pub fn embed_input(
        &self,
        f_prev: &FeatureGrid,
        step: ScaleStep,
        prompt: &[f64],
    ) -> Result<FeatureGrid> {
        if f_prev.channels() != self.channels || prompt.len() != self.channels {
            return Err(Error::InvalidParameter("input channels must match the model width"));
        }
        let down = f_prev.resize(step.height, step.width)?;
        let base = self.scale_embedding(step.index, step.height, step.width)?;
        let c = self.channels;
        let mut data = base.into_vec();
        let mut projected = vec![0.0; c];
        for (px, out) in down.as_slice().chunks_exact(c).zip(data.chunks_exact_mut(c)) {
            matvec(&self.embed, px, &mut projected);
            for ((o, p), q) in out.iter_mut().zip(&projected).zip(prompt) {
                *o += p + q;
            }
        }
        FeatureGrid::new(step.height, step.width, c, data)
    }

    /// Applies block `layer` to the token rows `x` (`n x C`), which form the
    /// whole attention context. `positions` are the original grid
    /// coordinates used for rotary encoding.
    pub fn layer_forward(
        &self,
        layer: usize,
        x: &[f64],
        positions: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        let c = self.channels;
        if x.len() != positions.len() * c {
            return Err(Error::InvalidParameter("token rows and positions disagree"));
        }
        let block = self
            .blocks
            .get(layer)
            .ok_or_else(|| Error::out_of_range("layer", layer, 0, self.num_layers.saturating_sub(1)))?;
        let n = positions.len();
        let scale = self.residual_scale();

        let mut normed = vec![0.0; c];
        let mut q = vec![0.0; n * c];
        let mut k = vec![0.0; n * c];
        let mut v = vec![0.0; n * c];
        for (t, &(pm, pn)) in positions.iter().enumerate() {
            rms_norm(&x[t * c..(t + 1) * c], &block.attn_norm, &mut normed);
            let rows = t * c..(t + 1) * c;
            matvec(&block.wq, &normed, &mut q[rows.clone()]);
            matvec(&block.wk, &normed, &mut k[rows.clone()]);
            matvec(&block.wv, &normed, &mut v[rows.clone()]);
            let angles = rope_angles(c, pm, pn);
            apply_rope(&mut q[rows.clone()], &angles);
            apply_rope(&mut k[rows], &angles);
        }

        let inv_sqrt_c = 1.0 / libm::sqrt(c as f64);
        let hidden = FFN_MULT * c;
        let mut out = Vec::with_capacity(n * c);
        let mut scores = vec![0.0; n];
        let mut mixed = vec![0.0; c];
        let mut attn = vec![0.0; c];
        let mut h = vec![0.0; c];
        let mut act = vec![0.0; hidden];
        let mut ffn = vec![0.0; c];
        for t in 0..n {
            let qt = &q[t * c..(t + 1) * c];
            for (s, kr) in scores.iter_mut().zip(k.chunks_exact(c)) {
                *s = qt.iter().zip(kr).map(|(a, b)| a * b).sum::<f64>() * inv_sqrt_c;
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for s in scores.iter_mut() {
                *s = libm::exp(*s - max);
                denom += *s;
            }
            mixed.iter_mut().for_each(|m| *m = 0.0);
            for (s, vr) in scores.iter().zip(v.chunks_exact(c)) {
                let w = s / denom;
                for (m, vv) in mixed.iter_mut().zip(vr) {
                    *m += w * vv;
                }
            }
            matvec(&block.wo, &mixed, &mut attn);
            for ((hh, xx), a) in h.iter_mut().zip(&x[t * c..(t + 1) * c]).zip(&attn) {
                *hh = xx + scale * a;
            }
            rms_norm(&h, &block.ffn_norm, &mut normed);
            matvec(&block.w1, &normed, &mut act);
            for (a, b) in act.iter_mut().zip(&block.b1) {
                *a = gelu(*a + b);
            }
            matvec(&block.w2, &act, &mut ffn);
            out.extend(h.iter().zip(&ffn).map(|(hh, f)| hh + scale * f));
        }
        Ok(out)
    }

    /// Runs block `layer` densely over every token of `x`.
    pub fn layer_forward_dense(&self, layer: usize, x: &FeatureGrid) -> Result<FeatureGrid> {
        let positions = grid_positions(x.height(), x.width());
        let out = self.layer_forward(layer, x.as_slice(), &positions)?;
        Ok(FeatureGrid::from_parts(x.height(), x.width(), x.channels(), out))
    }

    /// `logits = W_head * rms_norm(r)`.
    pub fn head(&self, r: &FeatureGrid) -> Result<FeatureGrid> {
        let c = self.channels;
        if r.channels() != c {
            return Err(Error::InvalidParameter("state channels must match the model width"));
        }
        let v = self.codebook_size;
        let mut data = vec![0.0; r.tokens() * v];
        let mut normed = vec![0.0; c];
        for (px, out) in r.as_slice().chunks_exact(c).zip(data.chunks_exact_mut(v)) {
            rms_norm(px, &self.head_norm, &mut normed);
            matvec(&self.head, &normed, out);
        }
        FeatureGrid::new(r.height(), r.width(), v, data)
    }

    /// Codebook rows at the per-position argmax; ties go to the lowest index.
    pub fn lookup(&self, logits: &FeatureGrid) -> Result<FeatureGrid> {
        if logits.channels() != self.codebook_size {
            return Err(Error::InvalidParameter("logit width must match the codebook size"));
        }
        let mut data = Vec::with_capacity(logits.tokens() * self.channels);
        for px in logits.as_slice().chunks_exact(self.codebook_size) {
            data.extend_from_slice(self.codebook_entry(argmax(px)));
        }
        FeatureGrid::new(logits.height(), logits.width(), self.channels, data)
    }

    pub fn head_and_lookup(&self, r: &FeatureGrid) -> Result<(FeatureGrid, FeatureGrid)> {
        let logits = self.head(r)?;
        let codes = self.lookup(&logits)?;
        Ok((logits, codes))
    }

    /// Embeds and runs the first `depth` blocks densely.
    fn run_prefix(
        &self,
        f_prev: &FeatureGrid,
        step: ScaleStep,
        prompt: &[f64],
        depth: usize,
    ) -> Result<LayerStates> {
        let mut states = Vec::with_capacity(depth + 1);
        states.push(self.embed_input(f_prev, step, prompt)?);
        for layer in 0..depth {
            let next = self.layer_forward_dense(layer, states.last().expect("non-empty"))?;
            states.push(next);
        }
        LayerStates::new(states)
    }

    pub fn full_scale_inference(
        &self,
        f_prev: &FeatureGrid,
        step: ScaleStep,
        prompt: &[f64],
    ) -> Result<ScaleOutput> {
        let states = self.run_prefix(f_prev, step, prompt, self.num_layers)?;
        let (logits, codes) = self.head_and_lookup(states.last())?;
        Ok(ScaleOutput {
            states,
            logits,
            codes,
        })
    }

    /// Dense inference with the head applied to `r^exit_layer`.
    pub fn early_exit_inference(
        &self,
        f_prev: &FeatureGrid,
        step: ScaleStep,
        prompt: &[f64],
        exit_layer: usize,
    ) -> Result<ScaleOutput> {
        if exit_layer > self.num_layers {
            return Err(Error::out_of_range("exit_layer", exit_layer, 0, self.num_layers));
        }
        let states = self.run_prefix(f_prev, step, prompt, exit_layer)?;
        let (logits, codes) = self.head_and_lookup(states.last())?;
        Ok(ScaleOutput {
            states,
            logits,
            codes,
        })
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Row-major `(m, n)` coordinates of an `h x w` grid.
pub fn grid_positions(height: usize, width: usize) -> Vec<(usize, usize)> {
    (0..height)
        .flat_map(|m| (0..width).map(move |n| (m, n)))
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub(crate) fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    cosine(a, b)
}

/// Cosine similarity between consecutive states, per token.
///
/// Channel `l - 1` of the result holds `cos(r^l, r^(l-1))`.
pub fn layer_similarity(states: &LayerStates) -> Result<FeatureGrid> {
    let layers = states.num_layers();
    if layers == 0 {
        return Err(Error::InvalidParameter("layer similarity needs at least two states"));
    }
    let first = states.embedded();
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(h * w * layers);
    for m in 0..h {
        for n in 0..w {
            for l in 1..=layers {
                data.push(cosine(states.get(l).pixel(m, n), states.get(l - 1).pixel(m, n)));
            }
        }
    }
    FeatureGrid::new(h, w, layers, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(index: usize, height: usize, width: usize) -> ScaleStep {
        ScaleStep {
            index,
            height,
            width,
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = ToyVarModel::new(3, 4, 8, 16).unwrap();
        let b = ToyVarModel::new(3, 4, 8, 16).unwrap();
        assert_eq!(a, b);
        let c = ToyVarModel::new(4, 4, 8, 16).unwrap();
        assert_ne!(a.block(0).wq, c.block(0).wq);
    }

    #[test]
    fn unit_input_output_norm_is_bounded() {
        for seed in 0..100 {
            let model = ToyVarModel::new(seed, 8, 16, 32).unwrap();
            let mut x: Vec<f64> = vec![0.25; 16];
            for layer in 0..8 {
                x = model.layer_forward(layer, &x, &[(0, 0)]).unwrap();
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((0.1..=10.0).contains(&norm), "seed {seed}: {norm}");
        }
    }

    #[test]
    fn zero_input_embeds_to_scale_embedding() {
        let model = ToyVarModel::new(1, 2, 8, 16).unwrap();
        let f = FeatureGrid::zeros(4, 4, 8).unwrap();
        let r0 = model.embed_input(&f, step(2, 3, 3), &[0.0; 8]).unwrap();
        assert_eq!(r0, model.scale_embedding(2, 3, 3).unwrap());
    }

    #[test]
    fn embed_matches_resize_then_project() {
        let model = ToyVarModel::new(5, 1, 4, 8).unwrap();
        let f = FeatureGrid::from_fn(2, 2, 4, |m, n, c| (m + 2 * n) as f64 - 0.3 * c as f64).unwrap();
        let prompt = [0.1, -0.2, 0.3, 0.0];
        let r0 = model.embed_input(&f, step(3, 4, 4), &prompt).unwrap();
        let up = f.resize(4, 4).unwrap();
        let base = model.scale_embedding(3, 4, 4).unwrap();
        for m in 0..4 {
            for n in 0..4 {
                for o in 0..4 {
                    let proj: f64 = (0..4).map(|i| model.embed[o * 4 + i] * up.get(m, n, i)).sum();
                    let expect = base.get(m, n, o) + proj + prompt[o];
                    assert!((r0.get(m, n, o) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn head_argmax_and_ties() {
        let mut model = ToyVarModel::new(0, 1, 4, 4).unwrap();
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 4 + i] = 1.0;
        }
        model.set_head(eye, vec![1.0; 4]).unwrap();
        let r = FeatureGrid::new(1, 1, 4, vec![0.1, 0.2, 3.0, -1.0]).unwrap();
        let (_, codes) = model.head_and_lookup(&r).unwrap();
        assert_eq!(codes.pixel(0, 0), model.codebook_entry(2));

        let tied = FeatureGrid::new(1, 1, 4, vec![1.0, 5.0, 5.0, 0.0]).unwrap();
        let codes = model.lookup(&tied).unwrap();
        assert_eq!(codes.pixel(0, 0), model.codebook_entry(1));
    }

    #[test]
    fn early_exit_edges() {
        let model = ToyVarModel::new(9, 4, 8, 16).unwrap();
        let f = FeatureGrid::zeros(4, 4, 8).unwrap();
        let prompt = [0.2; 8];
        let full = model.full_scale_inference(&f, step(1, 2, 2), &prompt).unwrap();
        let exit_l = model.early_exit_inference(&f, step(1, 2, 2), &prompt, 4).unwrap();
        assert_eq!(full, exit_l);
        let exit0 = model.early_exit_inference(&f, step(1, 2, 2), &prompt, 0).unwrap();
        assert_eq!(exit0.logits, model.head(full.states.embedded()).unwrap());
        assert!(model.early_exit_inference(&f, step(1, 2, 2), &prompt, 5).is_err());
    }

    #[test]
    fn zero_layer_model_returns_embedding() {
        let model = ToyVarModel::new(2, 0, 4, 4).unwrap();
        let f = FeatureGrid::zeros(2, 2, 4).unwrap();
        let out = model.full_scale_inference(&f, step(1, 2, 2), &[0.0; 4]).unwrap();
        assert_eq!(out.states.num_layers(), 0);
        assert_eq!(out.states.last(), out.states.embedded());
    }

    #[test]
    fn similarity_edge_cases() {
        let a = FeatureGrid::from_fn(2, 2, 3, |m, n, c| (m + n + c) as f64 + 1.0).unwrap();
        let same = LayerStates::new(vec![a.clone(), a.clone()]).unwrap();
        assert!(layer_similarity(&same)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-12));
        let neg = LayerStates::new(vec![a.clone(), a.scale(-1.0)]).unwrap();
        assert!(layer_similarity(&neg)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| (v + 1.0).abs() < 1e-12));
        let zero = LayerStates::new(vec![a.clone(), FeatureGrid::zeros(2, 2, 3).unwrap()]).unwrap();
        assert!(layer_similarity(&zero).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn schedule_validation() {
        assert!(ScaleSchedule::new(vec![(1, 1)]).is_err());
        assert!(ScaleSchedule::new(vec![(2, 2), (3, 3)]).is_err());
        assert!(ScaleSchedule::new(vec![(1, 1), (4, 4), (3, 3)]).is_err());
        assert_eq!(ScaleSchedule::default_toy().len(), 10);
    }
}
