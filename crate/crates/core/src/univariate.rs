//! Allocation-free recursions for the `1 x 1` model.
//!
//! Same arithmetic as the matrix code in `kalman` and `smoother`, on plain
//! scalars; the Monte Carlo fits spend nearly all their time here.

use std::f64::consts::PI;

use crate::Scalar;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Coeffs<T> {
    pub mu: T,
    pub sigma: T,
    pub a: T,
    pub c: T,
    pub q: T,
    pub r: T,
}

impl<T: Scalar> Coeffs<T> {
    pub fn of(p: &crate::state_space::ModelParams<T>) -> Self {
        Self {
            mu: p.mu[0],
            sigma: p.sigma[(0, 0)],
            a: p.a[(0, 0)],
            c: p.c[(0, 0)],
            q: p.q[(0, 0)],
            r: p.r[(0, 0)],
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Filtered<T> {
    pub pred_mean: Vec<T>,
    pub pred_cov: Vec<T>,
    pub mean: Vec<T>,
    pub cov: Vec<T>,
    pub innovation: Vec<T>,
    pub innovation_cov: Vec<T>,
    pub gain: Vec<T>,
}

impl<T> Filtered<T> {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            pred_mean: Vec::with_capacity(n),
            pred_cov: Vec::with_capacity(n),
            mean: Vec::with_capacity(n),
            cov: Vec::with_capacity(n),
            innovation: Vec::with_capacity(n),
            innovation_cov: Vec::with_capacity(n),
            gain: Vec::with_capacity(n),
        }
    }
}

pub(crate) struct Summary<T> {
    /// NaN when some innovation variance was not positive.
    pub loglik: T,
    pub used_pseudo_inverse: bool,
}

/// Forward pass; `out` is filled only when given.
pub(crate) fn filter<T: Scalar>(p: &Coeffs<T>, y: &[T], mut out: Option<&mut Filtered<T>>) -> Summary<T> {
    let half = T::lit(0.5);
    let ln2pi = T::lit((2.0 * PI).ln());
    let mut loglik = T::zero();
    let mut singular = false;
    let (mut m, mut v) = (p.mu, p.sigma);
    for (k, &yk) in y.iter().enumerate() {
        let (pm, pv) = if k == 0 { (m, v) } else { (p.a * m, p.a * v * p.a + p.q) };
        let nu = yk - p.c * pm;
        let cp = p.c * pv;
        let h = cp * p.c + p.r;
        let g;
        if h > T::zero() {
            g = cp / h;
            loglik += -half * (ln2pi + h.ln() + nu * nu / h);
        } else {
            g = T::zero();
            singular = true;
        }
        m = pm + g * nu;
        v = pv - g * cp;
        if let Some(o) = out.as_deref_mut() {
            o.pred_mean.push(pm);
            o.pred_cov.push(pv);
            o.mean.push(m);
            o.cov.push(v);
            o.innovation.push(nu);
            o.innovation_cov.push(h);
            o.gain.push(g);
        }
    }
    Summary {
        loglik: if singular { T::lit(f64::NAN) } else { loglik },
        used_pseudo_inverse: singular,
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Smoothed<T> {
    pub mean: Vec<T>,
    pub cov: Vec<T>,
    /// `Sigma_{k,k-1|N}` at index `k - 1`.
    pub lag: Vec<T>,
    pub gain: Vec<T>,
    pub used_pseudo_inverse: bool,
}

pub(crate) fn smooth<T: Scalar>(a: T, c: T, f: &Filtered<T>) -> Smoothed<T> {
    let len = f.mean.len();
    let n = len - 1;
    let mut mean = f.mean.clone();
    let mut cov = f.cov.clone();
    let mut gain = vec![T::zero(); n];
    let mut pinv = false;
    for k in (0..n).rev() {
        let pv = f.pred_cov[k + 1];
        let j = if pv > T::zero() {
            f.cov[k] * a / pv
        } else {
            pinv = true;
            T::zero()
        };
        mean[k] = f.mean[k] + j * (mean[k + 1] - f.pred_mean[k + 1]);
        cov[k] = f.cov[k] + j * (cov[k + 1] - pv) * j;
        gain[k] = j;
    }
    let mut lag = vec![T::zero(); n];
    if n > 0 {
        lag[n - 1] = (T::one() - f.gain[n] * c) * a * f.cov[n - 1];
        for k in (2..=n).rev() {
            let pk1 = f.cov[k - 1];
            let jt = gain[k - 2];
            lag[k - 2] = pk1 * jt + gain[k - 1] * (lag[k - 1] - a * pk1) * jt;
        }
    }
    Smoothed {
        mean,
        cov,
        lag,
        gain,
        used_pseudo_inverse: pinv,
    }
}
