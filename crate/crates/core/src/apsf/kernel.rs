use super::Apsf1D;
use crate::error::{Error, Result};

/// Square, odd-sized convolution kernel stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ApsfKernel2D {
    size: usize,
    weights: Vec<f64>,
}

impl ApsfKernel2D {
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 {
            return Err(Error::param(format!("kernel size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::param("kernel weight count must be size * size"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::DegenerateKernel("non-finite weight".into()));
        }
        Ok(Self { size, weights })
    }

    /// 1x1 identity kernel.
    pub fn delta() -> Self {
        Self {
            size: 1,
            weights: vec![1.0],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Maps the angular profile radially onto a `size x size` kernel.
///
/// A cell at distance `r` pixels from the center takes the 1D weight interpolated at
/// `theta = r / r_max * 180` degrees, with `r_max = (size - 1) / 2`; corner cells with
/// `r > r_max` are clamped to 180 degrees.
pub fn apsf_kernel_2d(apsf: &Apsf1D, size: usize, normalize: bool) -> Result<ApsfKernel2D> {
    if size % 2 == 0 || size == 0 {
        return Err(Error::param(format!("kernel size must be odd, got {size}")));
    }
    let r_max = ((size - 1) / 2) as f64;
    let c = r_max;
    let mut weights = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let dy = row as f64 - c;
            let dx = col as f64 - c;
            let r = (dx * dx + dy * dy).sqrt();
            let theta = if r_max == 0.0 { 0.0 } else { (r / r_max * 180.0).min(180.0) };
            weights.push(apsf.weight_at(theta));
        }
    }
    let sum: f64 = weights.iter().sum();
    if !(sum.is_finite() && sum > 0.0) {
        return Err(Error::DegenerateKernel(format!("kernel mass is {sum}")));
    }
    if normalize {
        for w in &mut weights {
            *w /= sum;
        }
    }
    ApsfKernel2D::from_weights(size, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apsf::{apsf_weights, series_value, ApsfParams, Recurrence};

    #[test]
    fn size_one_is_unit() {
        let apsf = apsf_weights(&ApsfParams::default()).unwrap();
        let k = apsf_kernel_2d(&apsf, 1, true).unwrap();
        assert_eq!(k.weights(), &[1.0]);
    }

    #[test]
    fn even_size_rejected() {
        let apsf = apsf_weights(&ApsfParams::default()).unwrap();
        assert!(apsf_kernel_2d(&apsf, 8, true).is_err());
    }

    #[test]
    fn normalized_sum_and_center_peak() {
        let params = ApsfParams::new(1.2, 0.9);
        let apsf = apsf_weights(&params).unwrap();
        let k = apsf_kernel_2d(&apsf, 31, true).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-9);

        let raw = apsf_kernel_2d(&apsf, 31, false).unwrap();
        // brute-force series evaluation at theta = 0
        let peak = series_value(&params, 0.0, &Recurrence);
        assert!((raw.get(15, 15) - peak).abs() <= 1e-12 * peak.abs());
        let max = raw.weights().iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, raw.get(15, 15));
    }

    #[test]
    fn rotational_symmetry_at_equal_radius() {
        let apsf = apsf_weights(&ApsfParams::new(2.0, 0.7)).unwrap();
        let k = apsf_kernel_2d(&apsf, 21, true).unwrap();
        let c = 10usize;
        // (3,4) and (5,0) share radius 5
        let cells = [(c + 3, c + 4), (c + 4, c + 3), (c - 5, c), (c, c + 5), (c - 3, c - 4)];
        let v0 = k.get(cells[0].0, cells[0].1);
        for (r, col) in cells {
            assert!((k.get(r, col) - v0).abs() < 1e-12);
        }
        for r in 0..21 {
            for col in 0..21 {
                assert_eq!(k.get(r, col), k.get(col, r));
                assert_eq!(k.get(r, col), k.get(20 - r, col));
            }
        }
    }

    #[test]
    fn degenerate_when_all_zero() {
        // no parameter choice yields an all-zero profile, so build one directly
        let apsf = apsf_weights(&ApsfParams::default()).unwrap();
        let zero = Apsf1D {
            angles_deg: apsf.angles_deg().to_vec(),
            raw: vec![0.0; apsf.len()],
            weights: vec![0.0; apsf.len()],
        };
        assert!(matches!(apsf_kernel_2d(&zero, 5, true), Err(Error::DegenerateKernel(_))));
    }
}
