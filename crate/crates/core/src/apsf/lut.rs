//! Persisted Legendre lookup table.
//!
//! The table holds `L_m(cos theta)` for `m = 0..=max_order` on a uniform grid of
//! `grid` scattering angles spanning `[0, pi]`. Sampling uniformly in angle keeps the
//! spacing between high-order oscillations resolvable near `mu = +-1`, where a grid
//! uniform in `mu` would need millions of points. Lookups use four-point cubic
//! interpolation with mirror extension at both ends (`L_m(cos theta)` is even about
//! `theta = 0` and `theta = pi`).
//!
//! File layout (little endian):
//!
//! ```text
//! magic      8 bytes  "LEGLUT\0\0"
//! version    u32
//! max_order  u32
//! grid       u64
//! values     (max_order + 1) * grid f64, row-major by order
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use super::legendre::{fill_unchecked, LegendreSource};
use crate::error::{Error, Result};
use crate::imgio::write_atomic;

pub const LUT_MAGIC: [u8; 8] = *b"LEGLUT\0\0";
pub const LUT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8;

/// Grid used when callers do not ask for a specific resolution.
pub const DEFAULT_LUT_GRID: usize = 8193;

#[derive(Debug, Clone, PartialEq)]
pub struct LegendreTable {
    max_order: usize,
    grid: usize,
    values: Vec<f64>,
}

impl LegendreTable {
    pub fn generate(grid: usize, max_order: usize) -> Result<Self> {
        if grid < 4 {
            return Err(Error::param(format!("LUT grid must have at least 4 samples, got {grid}")));
        }
        let rows = max_order + 1;
        let mut values = vec![0.0; rows * grid];
        let mut column = vec![0.0; rows];
        let step = PI / (grid - 1) as f64;
        for k in 0..grid {
            let mu = (k as f64 * step).cos().clamp(-1.0, 1.0);
            fill_unchecked(mu, &mut column);
            for (m, v) in column.iter().enumerate() {
                values[m * grid + k] = *v;
            }
        }
        Ok(Self {
            max_order,
            grid,
            values,
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Raw grid sample `L_m(cos(pi * k / (grid - 1)))`.
    pub fn sample(&self, m: usize, k: usize) -> f64 {
        self.values[m * self.grid + k]
    }

    /// Interpolated `L_m(mu)`.
    pub fn value(&self, m: usize, mu: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&mu) {
            return Err(Error::Domain(format!("Legendre argument {mu} outside [-1, 1]")));
        }
        if m > self.max_order {
            return Err(Error::param(format!(
                "order {m} exceeds table max order {}",
                self.max_order
            )));
        }
        let (idx, w) = self.stencil(mu.acos());
        let row = &self.values[m * self.grid..(m + 1) * self.grid];
        Ok(idx.iter().zip(w).map(|(&i, w)| row[i] * w).sum())
    }

    /// Indices and cubic Lagrange weights for an angle in `[0, pi]`.
    fn stencil(&self, theta: f64) -> ([usize; 4], [f64; 4]) {
        let last = (self.grid - 1) as isize;
        let t = (theta.abs().min(PI) / PI) * last as f64;
        let base = (t.floor() as isize).min(last - 1);
        let s = t - base as f64;
        let mirror = |j: isize| -> usize {
            let j = if j < 0 { -j } else { j };
            (if j > last { 2 * last - j } else { j }) as usize
        };
        let idx = [
            mirror(base - 1),
            mirror(base),
            mirror(base + 1),
            mirror(base + 2),
        ];
        let w = [
            -s * (s - 1.0) * (s - 2.0) / 6.0,
            (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
            -(s + 1.0) * s * (s - 2.0) / 2.0,
            (s + 1.0) * s * (s - 1.0) / 6.0,
        ];
        (idx, w)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * 8);
        out.extend_from_slice(&LUT_MAGIC);
        out.extend_from_slice(&LUT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.max_order as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::CacheInvalid("truncated header".into()));
        }
        if bytes[..8] != LUT_MAGIC {
            return Err(Error::CacheInvalid("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != LUT_VERSION {
            return Err(Error::CacheInvalid(format!(
                "version {version}, expected {LUT_VERSION}"
            )));
        }
        let max_order = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let grid = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let expected = (max_order + 1)
            .checked_mul(grid)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(HEADER_LEN));
        if grid < 4 || expected != Some(bytes.len()) {
            return Err(Error::CacheInvalid("payload size does not match header".into()));
        }
        let values = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            max_order,
            grid,
            values,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl LegendreSource for LegendreTable {
    fn max_order(&self) -> usize {
        self.max_order
    }

    fn fill(&self, theta: f64, out: &mut [f64]) {
        assert!(out.len() <= self.max_order + 1, "table order exceeded");
        let (idx, w) = self.stencil(theta);
        for (m, slot) in out.iter_mut().enumerate() {
            let row = &self.values[m * self.grid..(m + 1) * self.grid];
            *slot = row[idx[0]] * w[0] + row[idx[1]] * w[1] + row[idx[2]] * w[2] + row[idx[3]] * w[3];
        }
    }
}

/// Loads the table at `path` when it exists and matches the request; otherwise
/// regenerates it and replaces the file.
pub fn lut_cache(path: impl AsRef<Path>, grid: usize, max_order: usize) -> Result<LegendreTable> {
    let path = path.as_ref();
    match LegendreTable::load(path) {
        Ok(t) if t.grid == grid && t.max_order >= max_order => return Ok(t),
        Ok(_) => log::info!("LUT {} has a different shape, regenerating", path.display()),
        Err(Error::CacheInvalid(why)) => {
            log::warn!("LUT {} invalid ({why}), regenerating", path.display())
        }
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(e),
    }
    let table = LegendreTable::generate(grid, max_order)?;
    table.save(path)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apsf::legendre::legendre;

    #[test]
    fn interpolated_l2_at_half() {
        let t = LegendreTable::generate(10_001, 4).unwrap();
        assert!((t.value(2, 0.5).unwrap() + 0.125).abs() < 1e-6);
    }

    #[test]
    fn grid_samples_are_exact() {
        let t = LegendreTable::generate(101, 30).unwrap();
        for k in [0, 1, 50, 99, 100] {
            let mu = (k as f64 * (PI / 100.0)).cos().clamp(-1.0, 1.0);
            for m in [0, 1, 7, 30] {
                assert_eq!(t.sample(m, k), legendre(m, mu).unwrap());
            }
        }
    }

    #[test]
    fn endpoints_interpolate_exactly() {
        let t = LegendreTable::generate(513, 60).unwrap();
        for m in 0..=60 {
            assert!((t.value(m, 1.0).unwrap() - 1.0).abs() < 1e-12);
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert!((t.value(m, -1.0).unwrap() - sign).abs() < 1e-12);
        }
    }

    #[test]
    fn bytes_round_trip_bit_identical() {
        let t = LegendreTable::generate(33, 12).unwrap();
        let back = LegendreTable::from_bytes(&t.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), t.to_bytes());
        assert_eq!(back, t);
    }

    #[test]
    fn corrupt_and_version_mismatch_rejected() {
        let t = LegendreTable::generate(16, 3).unwrap();
        let mut bytes = t.to_bytes();
        assert!(matches!(LegendreTable::from_bytes(&bytes[..20]), Err(Error::CacheInvalid(_))));
        bytes.pop();
        assert!(matches!(LegendreTable::from_bytes(&bytes), Err(Error::CacheInvalid(_))));
        let mut bytes = t.to_bytes();
        bytes[8] = 99;
        assert!(matches!(LegendreTable::from_bytes(&bytes), Err(Error::CacheInvalid(_))));
        let mut bytes = t.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(LegendreTable::from_bytes(&bytes), Err(Error::CacheInvalid(_))));
    }

    #[test]
    fn cache_regenerates_missing_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("legendre.lut");
        let t = lut_cache(&path, 257, 20).unwrap();
        assert!(path.exists());
        assert!((t.value(2, 0.5).unwrap() - legendre(2, 0.5).unwrap()).abs() < 1e-6);

        let reloaded = lut_cache(&path, 257, 20).unwrap();
        assert_eq!(reloaded, t);

        fs::write(&path, b"garbage").unwrap();
        let regenerated = lut_cache(&path, 257, 20).unwrap();
        assert_eq!(regenerated, t);
        assert_eq!(LegendreTable::load(&path).unwrap(), t);

        // shape mismatch triggers regeneration as well
        let bigger = lut_cache(&path, 257, 40).unwrap();
        assert_eq!(bigger.max_order(), 40);
    }
}
