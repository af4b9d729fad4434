use crate::error::{Error, Result};

/// Legendre polynomial `L_m(mu)` by the three-term recurrence
/// `(m+1) L_{m+1} = (2m+1) mu L_m - m L_{m-1}`.
pub fn legendre(m: usize, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    let mut prev = 1.0;
    if m == 0 {
        return Ok(prev);
    }
    let mut cur = mu;
    for k in 1..m {
        let next = ((2 * k + 1) as f64 * mu * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Fills `out[m] = L_m(mu)` for `m = 0..out.len()`.
pub fn legendre_all(mu: f64, out: &mut [f64]) -> Result<()> {
    check_mu(mu)?;
    fill_unchecked(mu, out);
    Ok(())
}

pub(crate) fn fill_unchecked(mu: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = mu;
    for k in 1..out.len() - 1 {
        out[k + 1] = ((2 * k + 1) as f64 * mu * out[k] - k as f64 * out[k - 1]) / (k + 1) as f64;
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&mu) {
        return Err(Error::Domain(format!("Legendre argument {mu} outside [-1, 1]")));
    }
    Ok(())
}

/// Source of Legendre values at a scattering angle. Implemented by the direct
/// recurrence and by the on-disk lookup table.
pub trait LegendreSource {
    /// Largest order this source can produce.
    fn max_order(&self) -> usize;

    /// Writes `L_m(cos theta)` for `m = 0..out.len()`; `theta` in radians.
    fn fill(&self, theta: f64, out: &mut [f64]);
}

/// Exact evaluation through the recurrence.
#[derive(Debug, Clone, Copy, Default)]
pub struct Recurrence;

impl LegendreSource for Recurrence {
    fn max_order(&self) -> usize {
        usize::MAX
    }

    fn fill(&self, theta: f64, out: &mut [f64]) {
        fill_unchecked(theta.cos().clamp(-1.0, 1.0), out);
    }
}
