//! Edge and texture operators for haze images, and the self-supervised consistency
//! metrics built on them.
//!
//! * gradient (pixel-difference) convolution: `v'_i = sum_j w[p_i - p_j] (v_j - v_i)`
//! * adaptive (bilateral) convolution: `v'_i = sum_j K(f_i, f_j) w[p_i - p_j] v_j`,
//!   normalized by the kernel mass, with `K = exp(-|f_i - f_j|^2 / (2 alpha1))` on RGB
//!   features and `w = exp(-|p_i - p_j|^2 / (2 alpha2))`
//!
//! Borders use replicate padding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{clamp01, ImageBuffer, Matte};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvVariant {
    Vanilla,
    Gradient,
    Adaptive,
}

/// Window size, spatial weights `w[p_i - p_j]` and operator variant.
///
/// `weights[(dy + r) * k + (dx + r)]` is the weight for offset `p_i - p_j = (dy, dx)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub k: usize,
    pub weights: Vec<f64>,
    pub variant: ConvVariant,
}

impl ConvSpec {
    pub fn uniform(k: usize, variant: ConvVariant) -> Self {
        Self {
            k,
            weights: vec![1.0; k * k],
            variant,
        }
    }

    /// 3x3 weights on the four axis-aligned neighbours.
    pub fn four_neighbor() -> Self {
        Self {
            k: 3,
            weights: vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            variant: ConvVariant::Gradient,
        }
    }

    /// 3x3 weights on the four diagonal neighbours.
    pub fn diagonal() -> Self {
        Self {
            k: 3,
            weights: vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            variant: ConvVariant::Gradient,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k % 2 == 0 {
            return Err(Error::param(format!("window side must be odd, got {}", self.k)));
        }
        if self.weights.len() != self.k * self.k {
            return Err(Error::param("weights must have k * k entries"));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("weights must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilateralParams {
    /// Range variance on RGB features.
    pub alpha1: f64,
    /// Spatial variance, pixels squared.
    pub alpha2: f64,
    pub radius: usize,
}

impl BilateralParams {
    /// Defaults for a given radius: `alpha1 = 0.02`, `alpha2 = (k / 3)^2` with `k = 2r + 1`.
    pub fn with_radius(radius: usize) -> Self {
        let k = (2 * radius + 1) as f64;
        Self {
            alpha1: 0.02,
            alpha2: (k / 3.0).powi(2),
            radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0) {
            return Err(Error::param(format!("alpha1 must be > 0, got {}", self.alpha1)));
        }
        if !(self.alpha2 > 0.0) {
            return Err(Error::param(format!("alpha2 must be > 0, got {}", self.alpha2)));
        }
        if self.radius < 1 {
            return Err(Error::param("bilateral radius must be >= 1"));
        }
        Ok(())
    }
}

impl Default for BilateralParams {
    fn default() -> Self {
        Self::with_radius(5)
    }
}

#[inline]
fn clamp_idx(v: isize, len: usize) -> usize {
    v.clamp(0, len as isize - 1) as usize
}

/// Shared window walk for vanilla and gradient convolution.
fn window_conv(img: &ImageBuffer, spec: &ConvSpec, difference: bool) -> Result<ImageBuffer> {
    spec.validate()?;
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let r = (spec.k / 2) as isize;
    let mut out = ImageBuffer::zeros(w, h, ch)?;
    for y in 0..h {
        for x in 0..w {
            for dy in -r..=r {
                for dx in -r..=r {
                    let wt = spec.weights[((dy + r) as usize) * spec.k + (dx + r) as usize];
                    if wt == 0.0 {
                        continue;
                    }
                    let sy = clamp_idx(y as isize - dy, h);
                    let sx = clamp_idx(x as isize - dx, w);
                    for c in 0..ch {
                        let vj = img.get(sx, sy, c);
                        let term = if difference { vj - img.get(x, y, c) } else { vj };
                        let o = out.get(x, y, c);
                        out.set(x, y, c, o + wt * term);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `v'_i = sum_j w[p_i - p_j] v_j`.
pub fn vanilla_conv(img: &ImageBuffer, spec: &ConvSpec) -> Result<ImageBuffer> {
    window_conv(img, spec, false)
}

/// Central pixel-difference convolution `v'_i = sum_j w[p_i - p_j] (v_j - v_i)`.
///
/// The result is a signed feature map, not an image in `[0, 1]`.
pub fn gradient_conv(img: &ImageBuffer, spec: &ConvSpec) -> Result<ImageBuffer> {
    if spec.variant != ConvVariant::Gradient {
        return Err(Error::param("gradient_conv requires the gradient variant"));
    }
    window_conv(img, spec, true)
}

/// Edge strength in `[0, 1]`: channel mean of `sqrt(g4^2 + gd^2)` over the 4-neighbour and
/// diagonal difference responses, min-max normalized per image. Flat inputs map to zero.
pub fn edge_map(img: &ImageBuffer) -> Matte {
    let g4 = gradient_conv(img, &ConvSpec::four_neighbor()).expect("valid spec");
    let gd = gradient_conv(img, &ConvSpec::diagonal()).expect("valid spec");
    let ch = img.channels();
    let mut mag: Vec<f64> = g4
        .data()
        .chunks_exact(ch)
        .zip(gd.data().chunks_exact(ch))
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(p, q)| (p * p + q * q).sqrt())
                .sum::<f64>()
                / ch as f64
        })
        .collect();
    let (lo, hi) = mag
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 1e-12) {
        mag.iter_mut().for_each(|v| *v = 0.0);
    } else {
        mag.iter_mut().for_each(|v| *v = (*v - lo) / range);
    }
    Matte::new(img.width(), img.height(), mag).expect("shape preserved")
}

/// Normalized bilateral (adaptive) filter.
pub fn bilateral_filter(img: &ImageBuffer, params: &BilateralParams) -> Result<ImageBuffer> {
    params.validate()?;
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let r = params.radius as isize;
    let side = 2 * params.radius + 1;
    let mut spatial = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push((-((dx * dx + dy * dy) as f64) / (2.0 * params.alpha2)).exp());
        }
    }
    let range_scale = 1.0 / (2.0 * params.alpha1);
    let mut out = ImageBuffer::zeros(w, h, ch)?;
    let mut acc = vec![0.0; ch];
    for y in 0..h {
        for x in 0..w {
            let fi = img.pixel(x, y);
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut mass = 0.0;
            let mut s = 0;
            for dy in -r..=r {
                let sy = clamp_idx(y as isize + dy, h);
                for dx in -r..=r {
                    let sx = clamp_idx(x as isize + dx, w);
                    let fj = img.pixel(sx, sy);
                    let dist2: f64 = fi.iter().zip(fj).map(|(a, b)| (a - b) * (a - b)).sum();
                    let wt = (-dist2 * range_scale).exp() * spatial[s];
                    s += 1;
                    mass += wt;
                    for c in 0..ch {
                        acc[c] += wt * fj[c];
                    }
                }
            }
            for c in 0..ch {
                out.set(x, y, c, acc[c] / mass);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureMap {
    /// `img - bilateral_filter(img)`, signed.
    pub residual: ImageBuffer,
    /// `clamp01(residual + 0.5)`.
    pub visualization: ImageBuffer,
}

pub fn texture_map(img: &ImageBuffer, params: &BilateralParams) -> Result<TextureMap> {
    let smooth = bilateral_filter(img, params)?;
    let mut residual = img.clone();
    for (r, s) in residual.data_mut().iter_mut().zip(smooth.data()) {
        *r -= s;
    }
    let visualization = clamp01(&residual.map(|v| v + 0.5))?;
    Ok(TextureMap {
        residual,
        visualization,
    })
}

/// Mean-reduced L1 consistency terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyMetrics {
    /// `mean |a * matte - light|`.
    #[serde(rename = "L_ls")]
    pub light_source: f64,
    /// `mean |edge_map(a) - edge_map(b)|`.
    #[serde(rename = "L_g")]
    pub gradient: f64,
    /// `mean |bilateral(a) - bilateral(b)|`.
    #[serde(rename = "L_k")]
    pub kernel: f64,
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

pub fn consistency_metrics(
    a: &ImageBuffer,
    b: &ImageBuffer,
    matte: &Matte,
    light: &ImageBuffer,
    params: &BilateralParams,
) -> Result<ConsistencyMetrics> {
    if !a.same_shape(b) || !a.same_shape(light) {
        return Err(Error::param("consistency inputs must share dimensions and channels"));
    }
    if matte.width() != a.width() || matte.height() != a.height() {
        return Err(Error::param("matte dimensions differ from the images"));
    }
    let masked = a.mul_matte(matte)?;
    let light_source = mean_abs_diff(masked.data(), light.data());
    let gradient = mean_abs_diff(edge_map(a).data(), edge_map(b).data());
    let kernel = mean_abs_diff(
        bilateral_filter(a, params)?.data(),
        bilateral_filter(b, params)?.data(),
    );
    Ok(ConsistencyMetrics {
        light_source,
        gradient,
        kernel,
    })
}
