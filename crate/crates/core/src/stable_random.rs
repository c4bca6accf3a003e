//! Seeded variate generation.
//!
//! Every stream is a ChaCha8 generator keyed by `master_seed` (expanded with
//! `seed_from_u64`) and positioned on ChaCha stream `stream_index`, so a
//! `(master_seed, stream_index)` pair always reproduces the same sequence and
//! distinct indices never overlap.
//!
//! Alpha-stable draws use the Chambers–Mallows–Stuck construction from one
//! uniform angle and one unit exponential.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};

/// Exponents closer than this to one take the `alpha = 1` branch.
pub const ALPHA_ONE_BAND: f64 = 1e-8;

const COS_FLOOR: f64 = 1e-300;

/// Parameters of a one-dimensional stable law `S_alpha(sigma, beta, mu)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableParams {
    alpha: f64,
    beta: f64,
    sigma: f64,
    mu: f64,
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64, sigma: f64, mu: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(domain(format!("alpha must lie in (0, 2], got {alpha}")));
        }
        if !(-1.0..=1.0).contains(&beta) {
            return Err(domain(format!("beta must lie in [-1, 1], got {beta}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(domain(format!("sigma must be positive, got {sigma}")));
        }
        if !mu.is_finite() {
            return Err(domain(format!("mu must be finite, got {mu}")));
        }
        Ok(Self {
            alpha,
            beta,
            sigma,
            mu,
        })
    }

    /// Standardised law `S_alpha(1, beta, 0)`.
    pub fn standard(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, 1.0, 0.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn is_alpha_one(&self) -> bool {
        (self.alpha - 1.0).abs() < ALPHA_ONE_BAND
    }
}

/// One reproducible random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Unit-rate exponential via the inverse CDF `-ln(1 - u)`.
    pub fn exponential(&mut self) -> f64 {
        -(1.0 - self.uniform_open()).ln()
    }

    /// Standard normal by Box–Muller (the cosine branch; the sine partner is discarded).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    pub fn gaussian(&mut self, mean: f64, variance: f64) -> Result<f64> {
        sample_gaussian(self, mean, variance)
    }

    pub fn stable(&mut self, p: &StableParams) -> f64 {
        sample_stable(self, p)
    }
}

pub fn sample_gaussian(rng: &mut RngStream, mean: f64, variance: f64) -> Result<f64> {
    if !(variance >= 0.0) {
        return Err(domain(format!("variance must be non-negative, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(mean);
    }
    Ok(mean + variance.sqrt() * rng.standard_normal())
}

/// Draws from `S_alpha(sigma, beta, mu)`.
///
/// For `alpha = 1` the standardised draw is shifted by `(2/pi) beta sigma ln sigma`
/// so that the result has the `alpha = 1` characteristic function exactly.
pub fn sample_stable(rng: &mut RngStream, p: &StableParams) -> f64 {
    // V ~ U(-pi/2, pi/2), W ~ Exp(1), independent.
    let v = PI * (rng.uniform_open() - 0.5);
    let w = rng.exponential();
    let (alpha, beta, sigma) = (p.alpha, p.beta, p.sigma);
    if p.is_alpha_one() {
        let b = FRAC_PI_2 + beta * v;
        let cos_v = v.cos().max(COS_FLOOR);
        let x = (2.0 / PI) * (b * v.tan() - beta * ((FRAC_PI_2 * w * cos_v) / b).ln());
        return sigma * x + (2.0 / PI) * beta * sigma * sigma.ln() + p.mu;
    }
    let tan_pa = (PI * alpha / 2.0).tan();
    let shift = (beta * tan_pa).atan() / alpha;
    let scale = (1.0 + beta * beta * tan_pa * tan_pa).powf(1.0 / (2.0 * alpha));
    let cos_v = v.cos().max(COS_FLOOR);
    let angle = alpha * (v + shift);
    let x = scale * angle.sin() / cos_v.powf(1.0 / alpha)
        * ((v - angle).cos() / w).powf((1.0 - alpha) / alpha);
    sigma * x + p.mu
}

/// Analytic `ln phi(t)` of `S_alpha(sigma, beta, mu)`.
pub fn stable_log_cf(t: f64, p: &StableParams) -> Complex64 {
    if t == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let sign = t.signum();
    let at = t.abs();
    let skew = if p.is_alpha_one() {
        -p.beta * sign * (2.0 / PI) * at.ln()
    } else {
        p.beta * sign * (PI * p.alpha / 2.0).tan()
    };
    let mag = if p.is_alpha_one() {
        p.sigma * at
    } else {
        (p.sigma * at).powf(p.alpha)
    };
    // -mag * (1 - i skew) + i mu t
    Complex64::new(-mag, mag * skew + p.mu * t)
}

/// `(1/n) sum exp(i t x_j)`.
pub fn empirical_cf(samples: &[f64], t: f64) -> Result<Complex64> {
    if samples.is_empty() {
        return Err(domain("empirical characteristic function of an empty sample"));
    }
    let (mut re, mut im) = (0.0, 0.0);
    for &x in samples {
        let (s, c) = (t * x).sin_cos();
        re += c;
        im += s;
    }
    let n = samples.len() as f64;
    Ok(Complex64::new(re / n, im / n))
}
