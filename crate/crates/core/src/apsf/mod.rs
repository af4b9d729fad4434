//! Atmospheric point spread function.
//!
//! The scattered intensity of an isotropic point source seen through a medium of
//! optical thickness `T` is expanded in Legendre polynomials of `mu = cos(theta)`:
//!
//! ```text
//! I(T, mu) = sum_{m>=1} g_m(T) (L_{m-1}(mu) + L_m(mu))
//! g_m(T)   = exp(-beta_m T - alpha_m ln T)
//! alpha_m  = m + 1
//! beta_m   = (2m + 1) / m * (1 - q^(m-1))
//! ```
//!
//! The series is truncated at `num_terms`, scaled by `T^2` and sampled over
//! `theta in [-180, 180]` degrees. [`apsf_kernel_2d`] maps the angular profile onto a
//! square convolution kernel.

mod kernel;
mod legendre;
mod lut;

pub use kernel::{apsf_kernel_2d, ApsfKernel2D};
pub use legendre::{legendre, legendre_all, LegendreSource, Recurrence};
pub use lut::{lut_cache, LegendreTable, DEFAULT_LUT_GRID, LUT_MAGIC, LUT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApsfParams {
    /// Optical thickness `T`.
    pub optical_thickness: f64,
    /// Forward scattering parameter `q`, in `(0, 1)`.
    pub forward_scatter: f64,
    /// Series truncation order.
    pub num_terms: usize,
    /// Number of angle samples over `[-180, 180]`; odd so that 0 is sampled.
    pub num_angles: usize,
}

impl Default for ApsfParams {
    fn default() -> Self {
        Self {
            optical_thickness: 1.2,
            forward_scatter: 0.9,
            num_terms: 200,
            num_angles: 721,
        }
    }
}

impl ApsfParams {
    pub fn new(optical_thickness: f64, forward_scatter: f64) -> Self {
        Self {
            optical_thickness,
            forward_scatter,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.optical_thickness;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::param(format!("T must be > 0, got {t}")));
        }
        let q = self.forward_scatter;
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::param(format!("q must be in (0, 1), got {q}")));
        }
        if self.num_terms < 1 {
            return Err(Error::param("num_terms must be >= 1"));
        }
        if self.num_angles < 3 || self.num_angles % 2 == 0 {
            return Err(Error::param(format!(
                "num_angles must be odd and >= 3, got {}",
                self.num_angles
            )));
        }
        Ok(())
    }
}

pub fn alpha_m(m: usize) -> f64 {
    (m + 1) as f64
}

pub fn beta_m(m: usize, q: f64) -> f64 {
    let m_f = m as f64;
    (2.0 * m_f + 1.0) * (1.0 - q.powi(m as i32 - 1)) / m_f
}

/// Series coefficient `g_m(T)` with unit source intensity.
pub fn g_m(m: usize, t: f64, q: f64) -> f64 {
    (-beta_m(m, q) * t - alpha_m(m) * t.ln()).exp()
}

/// Angular APSF profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Apsf1D {
    angles_deg: Vec<f64>,
    raw: Vec<f64>,
    weights: Vec<f64>,
}

impl Apsf1D {
    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    /// Weights with negative series values clamped to zero.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Series values before clamping.
    pub fn raw_weights(&self) -> &[f64] {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn angle_step_deg(&self) -> f64 {
        360.0 / (self.angles_deg.len() - 1) as f64
    }

    /// Clamped weight linearly interpolated at `theta_deg`, folded into `[0, 180]`.
    pub fn weight_at(&self, theta_deg: f64) -> f64 {
        let center = (self.weights.len() - 1) / 2;
        let pos = theta_deg.abs().min(180.0) / self.angle_step_deg();
        let i = (pos.floor() as usize).min(center);
        if i == center {
            return self.weights[self.weights.len() - 1];
        }
        let frac = pos - i as f64;
        let a = self.weights[center + i];
        let b = self.weights[center + i + 1];
        a + (b - a) * frac
    }
}

/// Uniform angle grid over `[-180, 180]` built so that `angles[c - k] == -angles[c + k]`.
fn angle_grid(num_angles: usize) -> Vec<f64> {
    let center = (num_angles - 1) / 2;
    let step = 360.0 / (num_angles - 1) as f64;
    (0..num_angles)
        .map(|i| (i as f64 - center as f64) * step)
        .collect()
}

/// Truncated series `T^2 * sum_m g_m (L_{m-1} + L_m)` at one angle, before clamping.
pub fn series_value(params: &ApsfParams, theta_rad: f64, source: &dyn LegendreSource) -> f64 {
    let coeffs = coefficients(params);
    let mut leg = vec![0.0; params.num_terms + 1];
    source.fill(theta_rad, &mut leg);
    series_with(&coeffs, &leg) * params.optical_thickness.powi(2)
}

fn coefficients(params: &ApsfParams) -> Vec<f64> {
    (1..=params.num_terms)
        .map(|m| g_m(m, params.optical_thickness, params.forward_scatter))
        .collect()
}

fn series_with(coeffs: &[f64], leg: &[f64]) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, g)| g * (leg[i] + leg[i + 1]))
        .sum()
}

/// APSF weights using the exact Legendre recurrence.
pub fn apsf_weights(params: &ApsfParams) -> Result<Apsf1D> {
    apsf_weights_with(params, &Recurrence)
}

/// APSF weights using any Legendre source (recurrence or lookup table).
pub fn apsf_weights_with(params: &ApsfParams, source: &dyn LegendreSource) -> Result<Apsf1D> {
    params.validate()?;
    if source.max_order() < params.num_terms {
        return Err(Error::param(format!(
            "Legendre source supports order {} but {} terms were requested",
            source.max_order(),
            params.num_terms
        )));
    }
    let angles_deg = angle_grid(params.num_angles);
    let coeffs = coefficients(params);
    let t2 = params.optical_thickness.powi(2);
    let center = (params.num_angles - 1) / 2;
    let mut leg = vec![0.0; params.num_terms + 1];
    let mut raw = vec![0.0; params.num_angles];

    // evaluate theta >= 0 and mirror, so weight(theta) == weight(-theta) bit for bit
    for k in 0..=center {
        source.fill(angles_deg[center + k].to_radians(), &mut leg);
        let v = series_with(&coeffs, &leg) * t2;
        raw[center + k] = v;
        raw[center - k] = v;
    }
    if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "APSF series is not finite ({bad}) for T={}, q={}",
            params.optical_thickness, params.forward_scatter
        )));
    }
    let weights = raw.iter().map(|v| v.max(0.0)).collect();
    Ok(Apsf1D {
        angles_deg,
        raw,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_term_identity() {
        for t in [0.5, 1.0, 1.2, 2.0, 4.0] {
            for q in [0.2, 0.5, 0.9] {
                assert!((t * t * g_m(1, t, q) - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(beta_m(1, 0.3), 0.0);
        assert_eq!(alpha_m(1), 2.0);
    }

    #[test]
    fn beta_two_at_q_09() {
        assert!((beta_m(2, 0.9) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_term_series_is_one_plus_mu() {
        let params = ApsfParams {
            num_terms: 1,
            ..ApsfParams::new(2.7, 0.4)
        };
        let apsf = apsf_weights(&params).unwrap();
        for (a, w) in apsf.angles_deg().iter().zip(apsf.weights()) {
            let expected = 1.0 + a.to_radians().cos();
            assert!((w - expected).abs() < 1e-12, "{a}: {w} vs {expected}");
        }
    }

    #[test]
    fn symmetric_and_clamped() {
        let apsf = apsf_weights(&ApsfParams::new(1.2, 0.9)).unwrap();
        let n = apsf.len();
        for i in 0..n {
            assert_eq!(apsf.raw_weights()[i], apsf.raw_weights()[n - 1 - i]);
            assert!(apsf.weights()[i] >= 0.0);
        }
        let idx = apsf
            .angles_deg()
            .iter()
            .position(|a| (a - 37.0).abs() < 1e-9)
            .unwrap();
        assert_eq!(apsf.weights()[idx], apsf.weights()[n - 1 - idx]);
        assert_eq!(apsf.angles_deg()[idx], -apsf.angles_deg()[n - 1 - idx]);
    }

    #[test]
    fn parameter_errors() {
        assert!(apsf_weights(&ApsfParams::new(0.0, 0.5)).is_err());
        assert!(apsf_weights(&ApsfParams::new(-1.0, 0.5)).is_err());
        assert!(apsf_weights(&ApsfParams::new(1.0, 0.0)).is_err());
        assert!(apsf_weights(&ApsfParams::new(1.0, 1.0)).is_err());
        let even = ApsfParams {
            num_angles: 720,
            ..ApsfParams::default()
        };
        assert!(apsf_weights(&even).is_err());
    }

    #[test]
    fn table_source_needs_enough_orders() {
        let table = LegendreTable::generate(64, 10).unwrap();
        assert!(apsf_weights_with(&ApsfParams::default(), &table).is_err());
    }

    #[test]
    fn weight_at_interpolates() {
        let apsf = apsf_weights(&ApsfParams::default()).unwrap();
        let c = (apsf.len() - 1) / 2;
        assert_eq!(apsf.weight_at(0.0), apsf.weights()[c]);
        assert_eq!(apsf.weight_at(-0.5), apsf.weights()[c + 1]);
        let mid = apsf.weight_at(0.25);
        assert!((mid - 0.5 * (apsf.weights()[c] + apsf.weights()[c + 1])).abs() < 1e-9 * mid.abs().max(1.0));
        assert_eq!(apsf.weight_at(180.0), *apsf.weights().last().unwrap());
    }
}
