//! "Same"-size linear 2D convolution with zero padding, per channel.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::apsf::ApsfKernel2D;
use crate::error::{Error, Result};
use crate::imgio::ImageBuffer;

/// Kernels at least this wide use the FFT path under [`ConvMode::Auto`].
pub const FFT_MIN_KERNEL: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConvMode {
    #[default]
    Auto,
    Fft,
    Direct,
}

pub fn convolve2d(img: &ImageBuffer, kernel: &ApsfKernel2D, mode: ConvMode) -> Result<ImageBuffer> {
    let use_fft = match mode {
        ConvMode::Fft => true,
        ConvMode::Direct => false,
        ConvMode::Auto => kernel.size() >= FFT_MIN_KERNEL,
    };
    if use_fft {
        Ok(convolve_fft(img, kernel))
    } else {
        convolve_direct(img, kernel)
    }
}

/// Nested-loop convolution. The kernel may not exceed the image in either dimension.
pub fn convolve_direct(img: &ImageBuffer, kernel: &ApsfKernel2D) -> Result<ImageBuffer> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let k = kernel.size();
    if k > w || k > h {
        return Err(Error::param(format!(
            "kernel {k}x{k} larger than image {w}x{h} in direct mode"
        )));
    }
    let r = kernel.radius() as isize;
    let mut out = ImageBuffer::zeros(w, h, ch)?;
    let src = img.data();
    let dst = out.data_mut();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let base = (y as usize * w + x as usize) * ch;
            for i in 0..k as isize {
                let sy = y + r - i;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for j in 0..k as isize {
                    let sx = x + r - j;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let kv = kernel.get(i as usize, j as usize);
                    let s = (sy as usize * w + sx as usize) * ch;
                    for c in 0..ch {
                        dst[base + c] += kv * src[s + c];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Smallest `n >= min` whose prime factors are all in {2, 3, 5, 7}.
fn fast_len(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5, 7] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

/// Row/column FFT plans for a `rows x cols` buffer.
struct Plan2d {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Plan2d {
    fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            col_fwd: planner.plan_fft_forward(rows),
            row_inv: planner.plan_fft_inverse(cols),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    /// Forward transform; the result is left transposed (`cols x rows`).
    fn forward(&self, buf: &mut Vec<Complex<f64>>) {
        self.row_fwd.process(buf);
        *buf = transpose(buf, self.rows, self.cols);
        self.col_fwd.process(buf);
    }

    /// Inverse of [`Plan2d::forward`], taking a transposed spectrum back to `rows x cols`.
    fn inverse(&self, buf: &mut Vec<Complex<f64>>) {
        self.col_inv.process(buf);
        *buf = transpose(buf, self.cols, self.rows);
        self.row_inv.process(buf);
    }
}

fn transpose(src: &[Complex<f64>], rows: usize, cols: usize) -> Vec<Complex<f64>> {
    let mut dst = vec![Complex::default(); src.len()];
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
    dst
}

/// FFT convolution on a zero-padded grid. Two channels share one complex transform
/// (real and imaginary parts), which is exact because the kernel is real.
pub fn convolve_fft(img: &ImageBuffer, kernel: &ApsfKernel2D) -> ImageBuffer {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let k = kernel.size();
    let r = kernel.radius();
    let rows = fast_len(h + k - 1);
    let cols = fast_len(w + k - 1);
    let plan = Plan2d::new(rows, cols);
    let scale = 1.0 / (rows * cols) as f64;

    let mut kspec = vec![Complex::default(); rows * cols];
    for i in 0..k {
        for j in 0..k {
            kspec[i * cols + j] = Complex::new(kernel.get(i, j) * scale, 0.0);
        }
    }
    plan.forward(&mut kspec);

    let planes: Vec<Vec<f64>> = (0..ch).map(|c| img.channel_plane(c)).collect();
    let mut out_planes: Vec<Vec<f64>> = vec![vec![0.0; w * h]; ch];
    let mut c = 0;
    while c < ch {
        let paired = c + 1 < ch;
        let mut buf = vec![Complex::default(); rows * cols];
        for y in 0..h {
            for x in 0..w {
                let re = planes[c][y * w + x];
                let im = if paired { planes[c + 1][y * w + x] } else { 0.0 };
                buf[y * cols + x] = Complex::new(re, im);
            }
        }
        plan.forward(&mut buf);
        for (b, s) in buf.iter_mut().zip(&kspec) {
            *b *= s;
        }
        plan.inverse(&mut buf);
        for y in 0..h {
            for x in 0..w {
                let v = buf[(y + r) * cols + x + r];
                out_planes[c][y * w + x] = v.re;
                if paired {
                    out_planes[c + 1][y * w + x] = v.im;
                }
            }
        }
        c += 2;
    }
    ImageBuffer::from_planes(w, h, &out_planes).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, ch: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, ch, |x, y, c| ((x * 3 + y * 5 + c * 7) % 13) as f64 / 12.0).unwrap()
    }

    #[test]
    fn delta_is_identity() {
        let img = ramp(9, 7, 3);
        let d = ApsfKernel2D::delta();
        assert_eq!(convolve2d(&img, &d, ConvMode::Direct).unwrap(), img);
        let f = convolve2d(&img, &d, ConvMode::Fft).unwrap();
        for (a, b) in f.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_image_stays_zero() {
        let img = ImageBuffer::zeros(20, 20, 3).unwrap();
        let k = ApsfKernel2D::from_weights(5, vec![0.04; 25]).unwrap();
        for mode in [ConvMode::Direct, ConvMode::Fft] {
            let out = convolve2d(&img, &k, mode).unwrap();
            assert!(out.data().iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn asymmetric_kernel_orientation() {
        // kernel with a single tap right of center shifts content right by one
        let mut wts = vec![0.0; 9];
        wts[5] = 1.0;
        let k = ApsfKernel2D::from_weights(3, wts).unwrap();
        let img = ramp(6, 4, 1);
        let direct = convolve_direct(&img, &k).unwrap();
        let fft = convolve_fft(&img, &k);
        for y in 0..4 {
            for x in 0..6 {
                let expected = if x >= 1 { img.get(x - 1, y, 0) } else { 0.0 };
                assert_eq!(direct.get(x, y, 0), expected);
                assert!((fft.get(x, y, 0) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn odd_channel_counts_agree() {
        for ch in [1, 3] {
            let img = ramp(17, 13, ch);
            let k = ApsfKernel2D::from_weights(5, (0..25).map(|i| i as f64 / 300.0).collect()).unwrap();
            let a = convolve_direct(&img, &k).unwrap();
            let b = convolve_fft(&img, &k);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn direct_rejects_oversized_kernel_fft_accepts() {
        let img = ramp(5, 5, 3);
        let k = ApsfKernel2D::from_weights(7, vec![1.0 / 49.0; 49]).unwrap();
        assert!(convolve2d(&img, &k, ConvMode::Direct).is_err());
        let out = convolve2d(&img, &k, ConvMode::Fft).unwrap();
        assert!(out.same_shape(&img));
    }

    #[test]
    fn fast_len_factors() {
        assert_eq!(fast_len(1), 1);
        assert_eq!(fast_len(11), 12);
        assert_eq!(fast_len(638), 640);
        assert_eq!(fast_len(97), 98);
    }
}
