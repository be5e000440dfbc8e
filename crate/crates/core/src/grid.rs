//! Dense real-valued grids and the image-analysis helpers shared by every
//! other module.
//!
//! All grids are row-major. [`FeatureGrid`] stores `(height, width, channels)`
//! with channels innermost, so a token's feature vector is a contiguous slice.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::EmptyGrid {
            height,
            width,
            channels,
        });
    }
    Ok(())
}

fn check_data(data: &[f64], height: usize, width: usize, channels: usize) -> Result<()> {
    check_dims(height, width, channels)?;
    if data.len() != height * width * channels {
        return Err(Error::DataLength {
            len: data.len(),
            height,
            width,
            channels,
        });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// A `height x width x channels` grid of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_data(&data, height, width, channels)?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        check_dims(height, width, channels)?;
        Ok(Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        check_dims(height, width, channels)?;
        if !value.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        })
    }

    /// Builds a grid from `f(row, col, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(height, width, channels)?;
        let mut data = Vec::with_capacity(height * width * channels);
        for m in 0..height {
            for n in 0..width {
                for ch in 0..channels {
                    data.push(f(m, n, ch));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    /// Internal constructor for data produced by arithmetic on valid grids.
    pub(crate) fn from_parts(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn tokens(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, m: usize, n: usize, ch: usize) -> f64 {
        self.data[(m * self.width + n) * self.channels + ch]
    }

    /// Feature vector of the token at `(m, n)`.
    pub fn pixel(&self, m: usize, n: usize) -> &[f64] {
        let start = (m * self.width + n) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub(crate) fn pixel_mut(&mut self, m: usize, n: usize) -> &mut [f64] {
        let start = (m * self.width + n) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Bilinear resampling with the align-corners-false (pixel centre)
    /// convention. Returns an exact copy when the size is unchanged.
    pub fn resize(&self, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width, self.channels)?;
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let data = resize_raw(
            &self.data,
            self.height,
            self.width,
            self.channels,
            height,
            width,
        );
        Ok(Self::from_parts(height, width, self.channels, data))
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self::from_parts(self.height, self.width, self.channels, data))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::from_parts(self.height, self.width, self.channels, data))
    }

    pub fn scale(&self, factor: f64) -> Self {
        let data = self.data.iter().map(|v| v * factor).collect();
        Self::from_parts(self.height, self.width, self.channels, data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn mse(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    pub fn channel(&self, ch: usize) -> Result<ScalarMap> {
        if ch >= self.channels {
            return Err(Error::out_of_range("channel", ch, 0, self.channels - 1));
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[ch])
            .collect();
        Ok(ScalarMap::from_parts(self.height, self.width, data))
    }

    pub fn channel_mean(&self) -> ScalarMap {
        let c = self.channels as f64;
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() / c)
            .collect();
        ScalarMap::from_parts(self.height, self.width, data)
    }
}

/// A single-channel `height x width` map.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_data(&data, height, width, 1)?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        check_dims(height, width, 1)?;
        if !value.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            height,
            width,
            data: vec![value; height * width],
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(height, width, 1)?;
        let mut data = Vec::with_capacity(height * width);
        for m in 0..height {
            for n in 0..width {
                data.push(f(m, n));
            }
        }
        Self::new(height, width, data)
    }

    pub(crate) fn from_parts(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.data[m * self.width + n]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Elementwise map. The closure must keep values finite.
    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Self {
        let data = self.data.iter().copied().map(f).collect();
        Self::from_parts(self.height, self.width, data)
    }

    pub fn resize(&self, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width, 1)?;
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let data = resize_raw(&self.data, self.height, self.width, 1, height, width);
        Ok(Self::from_parts(height, width, data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::ShapeMismatch {
                left: (self.height, self.width, 1),
                right: (other.height, other.width, 1),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self::from_parts(self.height, self.width, data))
    }
}

impl From<ScalarMap> for FeatureGrid {
    fn from(map: ScalarMap) -> Self {
        FeatureGrid::from_parts(map.height, map.width, 1, map.data)
    }
}

/// A `height x width` map of booleans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMap {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        check_dims(height, width, 1)?;
        if data.len() != height * width {
            return Err(Error::DataLength {
                len: data.len(),
                height,
                width,
                channels: 1,
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(height, width, 1)?;
        let mut data = Vec::with_capacity(height * width);
        for m in 0..height {
            for n in 0..width {
                data.push(f(m, n));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, m: usize, n: usize) -> bool {
        self.data[m * self.width + n]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_scalar(&self) -> ScalarMap {
        let data = self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ScalarMap::from_parts(self.height, self.width, data)
    }
}

/// Source coordinate and interpolation weight along one axis.
fn axis_sample(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let lo = (libm::floor(pos) as usize).min(src_len - 1);
    let hi = if lo + 1 < src_len { lo + 1 } else { lo };
    let frac = if hi == lo { 0.0 } else { pos - lo as f64 };
    (lo, hi, frac)
}

pub(crate) fn resize_raw(
    src: &[f64],
    height: usize,
    width: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let cols: Vec<_> = (0..out_w).map(|x| axis_sample(x, width, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w * channels);
    for y in 0..out_h {
        let (y0, y1, fy) = axis_sample(y, height, out_h);
        for &(x0, x1, fx) in &cols {
            let p00 = (y0 * width + x0) * channels;
            let p01 = (y0 * width + x1) * channels;
            let p10 = (y1 * width + x0) * channels;
            let p11 = (y1 * width + x1) * channels;
            let w00 = (1.0 - fy) * (1.0 - fx);
            let w01 = (1.0 - fy) * fx;
            let w10 = fy * (1.0 - fx);
            let w11 = fy * fx;
            for ch in 0..channels {
                out.push(
                    w00 * src[p00 + ch]
                        + w01 * src[p01 + ch]
                        + w10 * src[p10 + ch]
                        + w11 * src[p11 + ch],
                );
            }
        }
    }
    out
}

/// Sobel gradient magnitude with replicate border padding.
pub fn sobel_magnitude(map: &ScalarMap) -> Result<ScalarMap> {
    let (h, w) = (map.height, map.width);
    if h < 3 || w < 3 {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            min: 3,
        });
    }
    let at = |m: isize, n: isize| {
        let m = m.clamp(0, h as isize - 1) as usize;
        let n = n.clamp(0, w as isize - 1) as usize;
        map.get(m, n)
    };
    let data = (0..h)
        .flat_map(|m| (0..w).map(move |n| (m as isize, n as isize)))
        .map(|(m, n)| {
            let gx = (at(m - 1, n + 1) + 2.0 * at(m, n + 1) + at(m + 1, n + 1))
                - (at(m - 1, n - 1) + 2.0 * at(m, n - 1) + at(m + 1, n - 1));
            let gy = (at(m + 1, n - 1) + 2.0 * at(m + 1, n) + at(m + 1, n + 1))
                - (at(m - 1, n - 1) + 2.0 * at(m - 1, n) + at(m - 1, n + 1));
            libm::sqrt(gx * gx + gy * gy)
        })
        .collect();
    Ok(ScalarMap::from_parts(h, w, data))
}

/// Side of the square SSIM window; shrinks to the map size for small maps.
pub const SSIM_WINDOW: usize = 8;

/// Mean structural similarity over all `8x8` windows at stride 1.
///
/// Uses uniform window weights and population statistics, with
/// `C1 = (0.01 R)^2`, `C2 = (0.03 R)^2` where `R` is the value range observed
/// over both maps. Two constant, equal maps score exactly 1.
pub fn ssim(a: &ScalarMap, b: &ScalarMap) -> Result<f64> {
    if (a.height, a.width) != (b.height, b.width) {
        return Err(Error::ShapeMismatch {
            left: (a.height, a.width, 1),
            right: (b.height, b.width, 1),
        });
    }
    let lo = a.min().min(b.min());
    let hi = a.max().max(b.max());
    let range = hi - lo;
    if range == 0.0 {
        return Ok(1.0);
    }
    let c1 = (0.01 * range) * (0.01 * range);
    let c2 = (0.03 * range) * (0.03 * range);
    let wh = SSIM_WINDOW.min(a.height);
    let ww = SSIM_WINDOW.min(a.width);
    let count = (wh * ww) as f64;

    let mut total = 0.0;
    let mut windows = 0usize;
    for y in 0..=(a.height - wh) {
        for x in 0..=(a.width - ww) {
            let (mut sa, mut sb) = (0.0, 0.0);
            for m in y..y + wh {
                for n in x..x + ww {
                    sa += a.get(m, n);
                    sb += b.get(m, n);
                }
            }
            let (mu_a, mu_b) = (sa / count, sb / count);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for m in y..y + wh {
                for n in x..x + ww {
                    let da = a.get(m, n) - mu_a;
                    let db = b.get(m, n) - mu_b;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            let (va, vb, cov) = (va / count, vb / count, cov / count);
            total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
            windows += 1;
        }
    }
    Ok((total / windows as f64).clamp(-1.0, 1.0))
}

/// Channel-averaged [`ssim`] for multi-channel grids.
pub fn ssim_grid(a: &FeatureGrid, b: &FeatureGrid) -> Result<f64> {
    a.check_same_shape(b)?;
    let mut total = 0.0;
    for ch in 0..a.channels {
        total += ssim(&a.channel(ch)?, &b.channel(ch)?)?;
    }
    Ok(total / a.channels as f64)
}
