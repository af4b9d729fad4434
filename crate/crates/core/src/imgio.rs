//! Floating-point image buffers, mattes, PNG/JPEG codecs and small pixel utilities.
//!
//! Samples are stored row-major and interleaved (`(y * width + x) * channels + c`) as
//! `f64` intensities in `[0, 1]`. Decoding divides integer samples by the type maximum;
//! encoding always produces 8-bit PNG with round-half-up quantization.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageEncoder};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::param(format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::param(format!(
                "sample count {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::new(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image by evaluating `f(x, y, c)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Copies channel `c` into a dense `height * width` plane.
    pub fn channel_plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::param("plane size does not match image dimensions"));
        }
        let mut data = vec![0.0; n * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + c] = *v;
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Multiplies every channel by the matte value at the same pixel.
    pub fn mul_matte(&self, matte: &Matte) -> Result<ImageBuffer> {
        if matte.width() != self.width || matte.height() != self.height {
            return Err(Error::param("matte and image dimensions differ"));
        }
        let mut out = self.clone();
        for (px, m) in out.data.chunks_exact_mut(self.channels).zip(matte.data()) {
            for v in px {
                *v *= m;
            }
        }
        Ok(out)
    }

    /// Horizontal mirror.
    pub fn flip_horizontal(&self) -> ImageBuffer {
        ImageBuffer::from_fn(self.width, self.height, self.channels, |x, y, c| {
            self.get(self.width - 1 - x, y, c)
        })
        .expect("shape preserved")
    }

    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        ImageBuffer::from_fn(self.width, self.height, 3, |x, y, _| self.get(x, y, 0))
            .expect("shape preserved")
    }
}

/// Single-channel soft map in `[0, 1]` (light-source matte, threshold mask, attention).
#[derive(Debug, Clone, PartialEq)]
pub struct Matte {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Matte {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::param(format!(
                "matte value count {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn clamped(&self) -> Matte {
        Matte {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    /// Single-channel image view of the matte, for saving.
    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.clone(),
        }
    }

    /// Interprets a loaded image as a matte using its per-pixel maximum channel.
    pub fn from_image(img: &ImageBuffer) -> Matte {
        max_channel(img)
    }
}

/// Per-pixel maximum over channels. Identity for single-channel images.
pub fn max_channel(img: &ImageBuffer) -> Matte {
    let data = img
        .data
        .chunks_exact(img.channels)
        .map(|px| px.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Matte {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Rec. 601 luma `0.299 R + 0.587 G + 0.114 B`. Identity for single-channel images.
pub fn luma(img: &ImageBuffer) -> Matte {
    let data = if img.channels == 1 {
        img.data.clone()
    } else {
        img.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    };
    Matte {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Clamps every sample into `[0, 1]`. NaN samples are rejected.
pub fn clamp01(img: &ImageBuffer) -> Result<ImageBuffer> {
    if let Some(i) = img.data.iter().position(|v| v.is_nan()) {
        return Err(Error::Numeric(format!("NaN sample at index {i}")));
    }
    Ok(img.map(|v| v.clamp(0.0, 1.0)))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(from_dynamic(&decoded))
}

fn from_dynamic(img: &DynamicImage) -> ImageBuffer {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = !img.color().has_color();
    let sixteen = img.color().bytes_per_pixel() / img.color().channel_count() >= 2;
    let (channels, data): (usize, Vec<f64>) = match (gray, sixteen) {
        (true, false) => (1, norm8(img.to_luma8().into_raw())),
        (true, true) => (1, norm16(img.to_luma16().into_raw())),
        (false, false) => (3, norm8(img.to_rgb8().into_raw())),
        (false, true) => (3, norm16(img.to_rgb16().into_raw())),
    };
    ImageBuffer {
        width: w,
        height: h,
        channels,
        data,
    }
}

fn norm8(raw: Vec<u8>) -> Vec<f64> {
    raw.into_iter().map(|v| v as f64 / 255.0).collect()
}

fn norm16(raw: Vec<u16>) -> Vec<f64> {
    raw.into_iter().map(|v| v as f64 / 65535.0).collect()
}

/// Round-half-up quantization to a byte; out-of-range samples saturate.
#[inline]
pub fn quantize_u8(sample: f64) -> u8 {
    (sample * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Encodes the image as an 8-bit PNG in memory.
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize_u8(v)).collect();
    let color = if img.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(&bytes, img.width as u32, img.height as u32, color)
        .map_err(|e| Error::Format {
            path: Default::default(),
            message: e.to_string(),
        })?;
    Ok(out)
}

pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let png = encode_png(img)?;
    write_atomic(path, &png)
}

pub fn save_matte(matte: &Matte, path: impl AsRef<Path>) -> Result<()> {
    save_image(&matte.to_image(), path)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, so readers never
/// see a partially written file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::param(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
