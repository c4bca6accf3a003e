use std::f64::consts::PI;

use crate::error::{domain, Result};

/// Kernel contributions beyond this many bandwidths are dropped (< 1e-13 relative).
const KERNEL_CUTOFF: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// `1.06 s n^{-1/5}` with `s` the sample standard deviation.
    Silverman,
}

pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(domain("automatic bandwidth needs at least two samples"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let h = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    if !(h > 0.0) || !h.is_finite() {
        return Err(domain(format!("degenerate automatic bandwidth {h}")));
    }
    Ok(h)
}

/// Gaussian-kernel density estimate evaluated on `grid`.
pub fn kde(samples: &[f64], grid: &[f64], bandwidth: Bandwidth) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(domain("kernel density estimate of an empty sample"));
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(domain(format!("bandwidth must be positive, got {h}"))),
        Bandwidth::Silverman => silverman_bandwidth(samples)?,
    };
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * PI).sqrt());
    let reach = KERNEL_CUTOFF * h;
    Ok(grid
        .iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&s| s < x - reach);
            let hi = sorted.partition_point(|&s| s <= x + reach);
            let sum: f64 = sorted[lo..hi]
                .iter()
                .map(|&s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            sum * norm
        })
        .collect())
}
