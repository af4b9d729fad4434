//! Attention-guided low-light enhancement.
//!
//! `O_e = (1 - A) O_c + A O_c^gamma`. The attention map `A` is high on dark structured
//! regions and low on bright uniform haze or sky. How it is built is pluggable through
//! [`AttentionStrategy`]; the default is [`BrightnessPrior`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{luma, max_channel, ImageBuffer, Matte};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhanceParams {
    pub gamma: f64,
    /// Guided-filter radius used to refine the coarse attention.
    pub smooth_radius: usize,
    pub guided_eps: f64,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self {
            gamma: 0.3,
            smooth_radius: 16,
            guided_eps: 1e-3,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::param(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.smooth_radius < 1 {
            return Err(Error::param("smooth_radius must be >= 1"));
        }
        if !(self.guided_eps > 0.0 && self.guided_eps.is_finite()) {
            return Err(Error::param(format!(
                "guided_eps must be > 0, got {}",
                self.guided_eps
            )));
        }
        Ok(())
    }
}

pub trait AttentionStrategy {
    fn attention(&self, haze: &ImageBuffer, params: &EnhanceParams) -> Result<Matte>;
}

/// `A0 = 1 - box(max_channel(haze))`, then a guided filter with the haze luma as guide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrightnessPrior {
    pub coarse_radius: usize,
}

impl Default for BrightnessPrior {
    fn default() -> Self {
        Self { coarse_radius: 7 }
    }
}

impl AttentionStrategy for BrightnessPrior {
    fn attention(&self, haze: &ImageBuffer, params: &EnhanceParams) -> Result<Matte> {
        params.validate()?;
        let (w, h) = (haze.width(), haze.height());
        let bright = max_channel(haze);
        let coarse: Vec<f64> = box_mean(bright.data(), w, h, self.coarse_radius)
            .into_iter()
            .map(|v| 1.0 - v)
            .collect();
        let guide = luma(haze);
        let refined = guided_filter(
            guide.data(),
            &coarse,
            w,
            h,
            params.smooth_radius,
            params.guided_eps,
        );
        Matte::new(w, h, refined.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }
}

/// Attention map from the haze input with the default strategy.
pub fn attention_map(haze: &ImageBuffer, params: &EnhanceParams) -> Result<Matte> {
    BrightnessPrior::default().attention(haze, params)
}

/// Mean over the `(2r+1)^2` window clipped to the image, via a summed-area table.
pub fn box_mean(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let stride = w + 1;
    let mut sat = vec![0.0; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += src[y * w + x];
            sat[(y + 1) * stride + x + 1] = sat[y * stride + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let s = sat[y1 * stride + x1] - sat[y0 * stride + x1] - sat[y1 * stride + x0]
                + sat[y0 * stride + x0];
            out[y * w + x] = s / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

/// Gray-guided filter (He et al.): per-window linear model `q = a I + b`.
pub fn guided_filter(guide: &[f64], src: &[f64], w: usize, h: usize, r: usize, eps: f64) -> Vec<f64> {
    let mean_i = box_mean(guide, w, h, r);
    let mean_p = box_mean(src, w, h, r);
    let ii: Vec<f64> = guide.iter().map(|v| v * v).collect();
    let ip: Vec<f64> = guide.iter().zip(src).map(|(a, b)| a * b).collect();
    let corr_i = box_mean(&ii, w, h, r);
    let corr_ip = box_mean(&ip, w, h, r);
    let mut a = vec![0.0; w * h];
    let mut b = vec![0.0; w * h];
    for k in 0..w * h {
        let var = corr_i[k] - mean_i[k] * mean_i[k];
        let cov = corr_ip[k] - mean_i[k] * mean_p[k];
        a[k] = cov / (var + eps);
        b[k] = mean_p[k] - a[k] * mean_i[k];
    }
    let mean_a = box_mean(&a, w, h, r);
    let mean_b = box_mean(&b, w, h, r);
    (0..w * h).map(|k| mean_a[k] * guide[k] + mean_b[k]).collect()
}

/// `(1 - A) x + A x^gamma` per sample. Inputs must lie in `[0, 1]`.
pub fn gamma_enhance(dehazed: &ImageBuffer, attention: &Matte, params: &EnhanceParams) -> Result<ImageBuffer> {
    params.validate()?;
    if attention.width() != dehazed.width() || attention.height() != dehazed.height() {
        return Err(Error::param(format!(
            "attention {}x{} does not match image {}x{}",
            attention.width(),
            attention.height(),
            dehazed.width(),
            dehazed.height()
        )));
    }
    if let Some(v) = dehazed.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::param(format!("dehazed sample {v} outside [0, 1]")));
    }
    if let Some(v) = attention.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::param(format!("attention value {v} outside [0, 1]")));
    }
    let ch = dehazed.channels();
    let mut out = dehazed.clone();
    for (px, &a) in out.data_mut().chunks_exact_mut(ch).zip(attention.data()) {
        if a == 0.0 {
            continue;
        }
        for v in px {
            *v = (1.0 - a) * *v + a * v.powf(params.gamma);
        }
    }
    Ok(out)
}
