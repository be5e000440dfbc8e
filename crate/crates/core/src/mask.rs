//! Integer depth maps and their expansion into layer-major masks.
//!
//! A token of depth `d` is assigned the first `d` layers of a bit-reversal
//! ordering of the stack, so shallow tokens sample layers spread over the
//! whole depth instead of always taking the bottom of the stack.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::BinaryMap;

/// Per-position layer counts in `[0, num_layers]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    num_layers: usize,
    depths: Vec<usize>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, num_layers: usize, depths: Vec<usize>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid {
                height,
                width,
                channels: 1,
            });
        }
        if depths.len() != height * width {
            return Err(Error::DataLength {
                len: depths.len(),
                height,
                width,
                channels: 1,
            });
        }
        if let Some(&d) = depths.iter().find(|&&d| d > num_layers) {
            return Err(Error::out_of_range("depth", d, 0, num_layers));
        }
        Ok(Self::from_parts(height, width, num_layers, depths))
    }

    pub fn filled(height: usize, width: usize, num_layers: usize, depth: usize) -> Result<Self> {
        Self::new(height, width, num_layers, vec![depth; height * width])
    }

    pub(crate) fn from_parts(height: usize, width: usize, num_layers: usize, depths: Vec<usize>) -> Self {
        Self {
            height,
            width,
            num_layers,
            depths,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.depths
    }

    pub fn get(&self, m: usize, n: usize) -> usize {
        self.depths[m * self.width + n]
    }

    /// Mean depth divided by the layer count.
    pub fn mean_fraction(&self) -> f64 {
        let total: usize = self.depths.iter().sum();
        total as f64 / (self.num_layers * self.depths.len()) as f64
    }

    /// Positions that skip every layer.
    pub fn zero_depth(&self) -> BinaryMap {
        let data = self.depths.iter().map(|&d| d == 0).collect();
        BinaryMap::new(self.height, self.width, data).expect("shape checked on construction")
    }
}

/// How a depth is spread over the layer stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskStrategy {
    /// Prefixes of the bit-reversal ordering.
    #[default]
    BitReversal,
    /// `floor(j L / d)` for `j < d`.
    Uniform,
    /// The first `d` layers of the stack.
    Prefix,
}

/// Reverses the low `bits` bits of `x`.
pub fn bit_reverse(x: usize, bits: u32) -> Result<usize> {
    if bits as usize >= usize::BITS as usize || x >> bits != 0 {
        let max = if bits as usize >= usize::BITS as usize {
            usize::MAX
        } else {
            (1usize << bits) - 1
        };
        return Err(Error::out_of_range("x", x, 0, max));
    }
    if bits == 0 {
        return Ok(0);
    }
    Ok(x.reverse_bits() >> (usize::BITS - bits))
}

fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Bit-reversal ordering of `0..num_layers`.
///
/// For a non-power-of-two stack the `ceil(log2 L)`-bit ordering is filtered
/// to indices below `L`, preserving order.
pub fn layer_permutation(num_layers: usize) -> Vec<usize> {
    let bits = ceil_log2(num_layers);
    (0..1usize << bits)
        .map(|x| bit_reverse(x, bits).expect("x < 2^bits"))
        .filter(|&l| l < num_layers)
        .collect()
}

pub fn active_layer_set(depth: usize, num_layers: usize) -> Result<Vec<usize>> {
    if depth > num_layers {
        return Err(Error::out_of_range("depth", depth, 0, num_layers));
    }
    let mut perm = layer_permutation(num_layers);
    perm.truncate(depth);
    Ok(perm)
}

pub fn uniform_layer_set(depth: usize, num_layers: usize) -> Result<Vec<usize>> {
    if depth > num_layers {
        return Err(Error::out_of_range("depth", depth, 0, num_layers));
    }
    Ok((0..depth).map(|j| j * num_layers / depth).collect())
}

pub fn prefix_layer_set(depth: usize, num_layers: usize) -> Result<Vec<usize>> {
    if depth > num_layers {
        return Err(Error::out_of_range("depth", depth, 0, num_layers));
    }
    Ok((0..depth).collect())
}

pub fn layer_set(strategy: MaskStrategy, depth: usize, num_layers: usize) -> Result<Vec<usize>> {
    match strategy {
        MaskStrategy::BitReversal => active_layer_set(depth, num_layers),
        MaskStrategy::Uniform => uniform_layer_set(depth, num_layers),
        MaskStrategy::Prefix => prefix_layer_set(depth, num_layers),
    }
}

/// Binary `(layer, row, col)` mask stored layer-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMask {
    layers: usize,
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl LayerMask {
    pub fn new(layers: usize, height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyGrid {
                height,
                width,
                channels: 1,
            });
        }
        if bits.len() != layers * height * width {
            return Err(Error::DataLength {
                len: bits.len(),
                height,
                width,
                channels: layers,
            });
        }
        Ok(Self {
            layers,
            height,
            width,
            bits,
        })
    }

    pub fn filled(layers: usize, height: usize, width: usize, value: bool) -> Result<Self> {
        Self::new(layers, height, width, vec![value; layers * height * width])
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, layer: usize, m: usize, n: usize) -> bool {
        self.bits[(layer * self.height + m) * self.width + n]
    }

    /// Spatial slice for one layer, row-major.
    pub fn layer_slice(&self, layer: usize) -> &[bool] {
        let size = self.height * self.width;
        &self.bits[layer * size..(layer + 1) * size]
    }

    pub fn layer_map(&self, layer: usize) -> BinaryMap {
        BinaryMap::new(self.height, self.width, self.layer_slice(layer).to_vec())
            .expect("slice has spatial size")
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    /// Number of active positions at each layer.
    pub fn layer_counts(&self) -> Vec<usize> {
        (0..self.layers)
            .map(|l| self.layer_slice(l).iter().filter(|&&b| b).count())
            .collect()
    }

    /// Per-position count of active layers.
    pub fn depths(&self) -> DepthMap {
        let size = self.height * self.width;
        let mut depths = vec![0usize; size];
        for layer in 0..self.layers {
            for (d, &b) in depths.iter_mut().zip(self.layer_slice(layer)) {
                *d += b as usize;
            }
        }
        DepthMap::from_parts(self.height, self.width, self.layers, depths)
    }
}

pub fn build_layer_mask(
    depths: &DepthMap,
    num_layers: usize,
    strategy: MaskStrategy,
) -> Result<LayerMask> {
    if let Some(&d) = depths.as_slice().iter().find(|&&d| d > num_layers) {
        return Err(Error::out_of_range("depth", d, 0, num_layers));
    }
    let (h, w) = (depths.height(), depths.width());
    let size = h * w;
    let mut bits = vec![false; num_layers * size];
    // one layer set per distinct depth
    let sets: Vec<Vec<usize>> = (0..=num_layers)
        .map(|d| layer_set(strategy, d, num_layers))
        .collect::<Result<_>>()?;
    for (pos, &d) in depths.as_slice().iter().enumerate() {
        for &layer in &sets[d] {
            bits[layer * size + pos] = true;
        }
    }
    LayerMask::new(num_layers, h, w, bits)
}

/// Active `(layer, position)` pairs over all pairs.
pub fn compute_fraction(mask: &LayerMask) -> f64 {
    if mask.bits.is_empty() {
        return 0.0;
    }
    let on = mask.bits.iter().filter(|&&b| b).count();
    on as f64 / mask.bits.len() as f64
}
