//! Light-source detection: threshold mask, closed-form matting refinement, light-source
//! image and the `light_sz` coverage statistic.
//!
//! The refinement solves `(L + lambda I) alpha = lambda m` where `L` is the closed-form
//! matting Laplacian and `m` the binary threshold mask. Every pixel is softly pulled
//! towards its binary label while `L` enforces the local color-line model, so the solve
//! needs no trimap. `L + lambda I` is symmetric positive definite and is applied
//! matrix-free inside a Jacobi-preconditioned conjugate gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{max_channel, ImageBuffer, Matte};

/// Images above this many pixels are matted at half resolution under
/// [`MattingResolution::Auto`].
pub const HALF_RES_THRESHOLD: usize = 1_000_000;

/// Pre-clamp matte values outside this band indicate a misconfigured solve.
pub const OVERSHOOT_BAND: (f64, f64) = (-0.05, 1.05);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MattingResolution {
    /// Half resolution above [`HALF_RES_THRESHOLD`] pixels.
    #[default]
    Auto,
    Full,
    Half,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MattingConfig {
    pub window: usize,
    pub eps: f64,
    pub lambda: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub resolution: MattingResolution,
}

impl Default for MattingConfig {
    fn default() -> Self {
        Self {
            window: 3,
            eps: 1e-7,
            lambda: 100.0,
            cg_tol: 1e-6,
            cg_max_iter: 2000,
            resolution: MattingResolution::Auto,
        }
    }
}

impl MattingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::param(format!(
                "matting window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::param(format!("matting eps must be > 0, got {}", self.eps)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::param(format!(
                "matting lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::param(format!(
                "cg_tol must be in (0, 1), got {}",
                self.cg_tol
            )));
        }
        if self.cg_max_iter == 0 {
            return Err(Error::param("cg_max_iter must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightSourceResult {
    pub matte: Matte,
    pub light_image: ImageBuffer,
    /// Percentage of the image covered by the matte, in `[0, 100]`.
    pub light_sz: f64,
}

/// Convergence summary of a matting solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `||b - A x|| / ||b||` recomputed from the returned solution.
    pub relative_residual: f64,
}

/// `1` where the brightest channel exceeds `tau`, else `0`.
pub fn threshold_mask(img: &ImageBuffer, tau: f64) -> Matte {
    let mut m = max_channel(img);
    for v in m.data_mut() {
        *v = if *v > tau { 1.0 } else { 0.0 };
    }
    m
}

/// Per-window statistics of the closed-form matting Laplacian.
struct Window {
    /// Row-major top-left pixel of the window.
    origin: usize,
    mean: [f64; 3],
    /// `(Sigma + eps / |w| I)^-1`, symmetric.
    inv: [[f64; 3]; 3],
}

/// Matrix-free closed-form matting Laplacian over all fully interior windows.
pub struct MattingLaplacian {
    width: usize,
    height: usize,
    side: usize,
    colors: Vec<[f64; 3]>,
    windows: Vec<Window>,
}

impl MattingLaplacian {
    pub fn new(img: &ImageBuffer, window: usize, eps: f64) -> Result<Self> {
        if window < 1 || window % 2 == 0 {
            return Err(Error::param("matting window must be odd"));
        }
        let rgb = img.to_rgb();
        let (w, h) = (rgb.width(), rgb.height());
        let colors: Vec<[f64; 3]> = rgb
            .data()
            .chunks_exact(3)
            .map(|p| [p[0], p[1], p[2]])
            .collect();
        let n = (window * window) as f64;
        let mut windows = Vec::new();
        if w >= window && h >= window {
            windows.reserve((w - window + 1) * (h - window + 1));
            for y0 in 0..=h - window {
                for x0 in 0..=w - window {
                    let origin = y0 * w + x0;
                    let mut mean = [0.0; 3];
                    for dy in 0..window {
                        for dx in 0..window {
                            let c = colors[origin + dy * w + dx];
                            for k in 0..3 {
                                mean[k] += c[k];
                            }
                        }
                    }
                    for m in &mut mean {
                        *m /= n;
                    }
                    let mut cov = [[0.0; 3]; 3];
                    for dy in 0..window {
                        for dx in 0..window {
                            let c = colors[origin + dy * w + dx];
                            let d = [c[0] - mean[0], c[1] - mean[1], c[2] - mean[2]];
                            for a in 0..3 {
                                for b in a..3 {
                                    cov[a][b] += d[a] * d[b];
                                }
                            }
                        }
                    }
                    for a in 0..3 {
                        for b in a..3 {
                            cov[a][b] /= n;
                            cov[b][a] = cov[a][b];
                        }
                        cov[a][a] += eps / n;
                    }
                    let inv = invert_sym3(&cov).ok_or_else(|| {
                        Error::Numeric(format!("singular window covariance at pixel {origin}"))
                    })?;
                    windows.push(Window { origin, mean, inv });
                }
            }
        }
        Ok(Self {
            width: w,
            height: h,
            side: window,
            colors,
            windows,
        })
    }

    pub fn dim(&self) -> usize {
        self.width * self.height
    }

    /// `out = L v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let n = (self.side * self.side) as f64;
        for win in &self.windows {
            let mut s = 0.0;
            let mut t = [0.0; 3];
            for dy in 0..self.side {
                let row = win.origin + dy * self.width;
                for j in row..row + self.side {
                    let c = self.colors[j];
                    s += v[j];
                    for k in 0..3 {
                        t[k] += (c[k] - win.mean[k]) * v[j];
                    }
                }
            }
            let u = mat_vec(&win.inv, &t);
            for dy in 0..self.side {
                let row = win.origin + dy * self.width;
                for i in row..row + self.side {
                    let c = self.colors[i];
                    let proj = (c[0] - win.mean[0]) * u[0]
                        + (c[1] - win.mean[1]) * u[1]
                        + (c[2] - win.mean[2]) * u[2];
                    out[i] += v[i] - (s + proj) / n;
                }
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.dim()];
        let n = (self.side * self.side) as f64;
        for win in &self.windows {
            for dy in 0..self.side {
                let row = win.origin + dy * self.width;
                for i in row..row + self.side {
                    let c = self.colors[i];
                    let d = [c[0] - win.mean[0], c[1] - win.mean[1], c[2] - win.mean[2]];
                    let q = dot3(&d, &mat_vec(&win.inv, &d));
                    diag[i] += 1.0 - (1.0 + q) / n;
                }
            }
        }
        diag
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn mat_vec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [dot3(&m[0], v), dot3(&m[1], v), dot3(&m[2], v)]
}

fn invert_sym3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    if !(det.is_finite() && det != 0.0) {
        return None;
    }
    let inv_det = 1.0 / det;
    let c11 = m[0][0] * m[2][2] - m[0][2] * m[2][0];
    let c12 = m[0][2] * m[1][0] - m[0][0] * m[1][2];
    let c22 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    Some([
        [c00 * inv_det, c01 * inv_det, c02 * inv_det],
        [c01 * inv_det, c11 * inv_det, c12 * inv_det],
        [c02 * inv_det, c12 * inv_det, c22 * inv_det],
    ])
}

/// Refines a binary mask into a soft matte, clamped to `[0, 1]`.
pub fn matting_refine(img: &ImageBuffer, mask: &Matte, cfg: &MattingConfig) -> Result<Matte> {
    let (raw, _) = matting_solve(img, mask, cfg)?;
    Ok(raw.clamped())
}

/// Full-resolution solve returning the pre-clamp matte and convergence report.
///
/// Fails with [`Error::MatteOvershoot`] when any pre-clamp value leaves
/// [`OVERSHOOT_BAND`].
pub fn matting_solve(
    img: &ImageBuffer,
    mask: &Matte,
    cfg: &MattingConfig,
) -> Result<(Matte, SolveReport)> {
    cfg.validate()?;
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(Error::param("image and mask dimensions differ"));
    }
    let lap = MattingLaplacian::new(img, cfg.window, cfg.eps)?;
    let b: Vec<f64> = mask.data().iter().map(|m| cfg.lambda * m).collect();
    let (x, report) = solve_pcg(&lap, cfg.lambda, &b, cfg.cg_tol, cfg.cg_max_iter)?;
    if let Some((index, &value)) = x
        .iter()
        .enumerate()
        .find(|(_, v)| !(OVERSHOOT_BAND.0..=OVERSHOOT_BAND.1).contains(*v))
    {
        return Err(Error::MatteOvershoot { index, value });
    }
    Ok((Matte::new(img.width(), img.height(), x)?, report))
}

/// Jacobi-preconditioned CG on `(L + lambda I) x = b`.
fn solve_pcg(
    lap: &MattingLaplacian,
    lambda: f64,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        lap.apply(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += lambda * vi;
        }
    };
    let inv_diag: Vec<f64> = lap.diagonal().iter().map(|d| 1.0 / (d + lambda)).collect();

    // warm start at the constraint targets b / lambda
    let mut x: Vec<f64> = b.iter().map(|bi| bi / lambda).collect();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    while norm(&r) > tol * b_norm {
        if iterations == max_iter {
            return Err(Error::Convergence {
                iterations,
                residual: norm(&r) / b_norm,
            });
        }
        apply(&p, &mut ap);
        let step = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
    }

    apply(&x, &mut ax);
    let true_res = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt() / b_norm;
    Ok((
        x,
        SolveReport {
            iterations,
            relative_residual: true_res,
        },
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// 2x2 box downsampling; odd trailing rows/columns average what is available.
fn downsample2(img: &ImageBuffer) -> ImageBuffer {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let (lw, lh) = (w.div_ceil(2), h.div_ceil(2));
    ImageBuffer::from_fn(lw, lh, ch, |x, y, c| {
        let mut sum = 0.0;
        let mut count = 0.0;
        for sy in 2 * y..(2 * y + 2).min(h) {
            for sx in 2 * x..(2 * x + 2).min(w) {
                sum += img.get(sx, sy, c);
                count += 1.0;
            }
        }
        sum / count
    })
    .expect("valid shape")
}

/// Bilinear upsampling of a low-resolution matte to `width x height` (pixel-center aligned).
fn upsample_bilinear(low: &Matte, width: usize, height: usize) -> Matte {
    let (lw, lh) = (low.width(), low.height());
    let sx = lw as f64 / width as f64;
    let sy = lh as f64 / height as f64;
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (lh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(lh - 1);
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (lw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(lw - 1);
            let tx = fx - x0 as f64;
            let top = low.get(x0, y0) * (1.0 - tx) + low.get(x1, y0) * tx;
            let bottom = low.get(x0, y1) * (1.0 - tx) + low.get(x1, y1) * tx;
            data.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    Matte::new(width, height, data).expect("valid shape")
}

fn use_half_resolution(img: &ImageBuffer, cfg: &MattingConfig) -> bool {
    match cfg.resolution {
        MattingResolution::Full => false,
        MattingResolution::Half => img.width() >= 2 && img.height() >= 2,
        MattingResolution::Auto => img.pixel_count() > HALF_RES_THRESHOLD,
    }
}

/// Threshold, refine, and isolate the light sources of `img`.
pub fn detect_light_sources(
    img: &ImageBuffer,
    tau: f64,
    cfg: &MattingConfig,
) -> Result<LightSourceResult> {
    cfg.validate()?;
    if !tau.is_finite() {
        return Err(Error::param(format!("tau must be finite, got {tau}")));
    }
    let mask = threshold_mask(img, tau);
    let matte = if use_half_resolution(img, cfg) {
        let small_img = downsample2(img);
        let small_mask = max_channel(&downsample2(&mask.to_image()));
        let small = matting_refine(&small_img, &small_mask, cfg)?;
        upsample_bilinear(&small, img.width(), img.height()).clamped()
    } else {
        matting_refine(img, &mask, cfg)?
    };
    let light_image = img.mul_matte(&matte)?;
    let light_sz = light_size_percent(&matte);
    Ok(LightSourceResult {
        matte,
        light_image,
        light_sz,
    })
}

/// `100 * sum(matte) / numel(matte)`.
pub fn light_size_percent(matte: &Matte) -> f64 {
    if matte.data().is_empty() {
        return 0.0;
    }
    100.0 * matte.sum() / matte.data().len() as f64
}
