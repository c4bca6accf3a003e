//! EM for the time-invariant linear-Gaussian model.
//!
//! E-step: filter, RTS smoother and lag-one covariances at the current
//! parameters give the conditional moments of the complete-data
//! log-likelihood. M-step: each block is the maximiser of that expectation
//! with the other blocks held fixed, updated in the order
//! `C -> R`, `A -> Q`, `mu -> Sigma`. Observation sums run over `k = 0..N`,
//! transition sums over `k = 1..N`.

use nalgebra::{DMatrix, DVector};

use super::{EmConfig, FitResult, Param, ParamMask};
use crate::error::{domain, Error, Result};
use crate::kalman::{filter_pass, filter_scalar};
use crate::linalg::{floor_eigenvalues, right_solve, spectral_norm_sym, symmetrized, PsdInverse};
use crate::smoother::smooth_pass;
use crate::state_space::ModelParams;
use crate::univariate;
use crate::Scalar;

const COV_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct MStep<T: Scalar> {
    pub params: ModelParams<T>,
    /// A normal-equation matrix was singular and the pseudo-inverse was used.
    pub used_pseudo_inverse: bool,
}

/// Smoothed second moments at one parameter value.
struct Moments<T: Scalar> {
    /// Number of transitions `N`.
    n: usize,
    loglik: T,
    x0: DVector<T>,
    p0: DMatrix<T>,
    /// `sum_{k=0}^N E[x_k x_k*]`
    sxx: DMatrix<T>,
    /// `sum_{k=0}^N y_k E[x_k]*`
    syx: DMatrix<T>,
    /// `sum_{k=0}^N y_k y_k*`
    syy: DMatrix<T>,
    /// `sum_{k=1}^N E[x_k x_k*]`
    s11: DMatrix<T>,
    /// `sum_{k=1}^N E[x_k x_{k-1}*]`
    s10: DMatrix<T>,
    /// `sum_{k=1}^N E[x_{k-1} x_{k-1}*]`
    s00: DMatrix<T>,
}

fn e_step_scalar<T: Scalar>(params: &ModelParams<T>, observations: &[DVector<T>]) -> Result<Moments<T>> {
    let (f, summary) = filter_scalar(params, observations)?;
    if !summary.loglik.is_finite() {
        return Err(Error::Numerical("log-likelihood is not finite in the E-step".into()));
    }
    let sm = univariate::smooth(params.a[(0, 0)], params.c[(0, 0)], &f);
    let n = observations.len() - 1;
    let (mut sxx, mut syx, mut syy) = (T::zero(), T::zero(), T::zero());
    let mut exx = Vec::with_capacity(n + 1);
    for (k, y) in observations.iter().enumerate() {
        let (x, y) = (sm.mean[k], y[0]);
        let e = sm.cov[k] + x * x;
        exx.push(e);
        sxx += e;
        syx += y * x;
        syy += y * y;
    }
    let mut s10 = T::zero();
    for k in 1..=n {
        s10 += sm.lag[k - 1] + sm.mean[k] * sm.mean[k - 1];
    }
    let one = |v: T| DMatrix::from_element(1, 1, v);
    Ok(Moments {
        n,
        loglik: summary.loglik,
        x0: DVector::from_element(1, sm.mean[0]),
        p0: one(sm.cov[0]),
        sxx: one(sxx),
        syx: one(syx),
        syy: one(syy),
        s11: one(sxx - exx[0]),
        s10: one(s10),
        s00: one(sxx - exx[n]),
    })
}

fn e_step<T: Scalar>(params: &ModelParams<T>, observations: &[DVector<T>]) -> Result<Moments<T>> {
    if params.is_scalar() {
        return e_step_scalar(params, observations);
    }
    let filt = filter_pass(params, observations)?;
    if !filt.loglik.is_finite() {
        return Err(Error::Numerical("log-likelihood is not finite in the E-step".into()));
    }
    let sm = smooth_pass(params, &filt)?;
    let m = params.state_dim();
    let d = params.obs_dim();
    let n = observations.len() - 1;

    let mut sxx = DMatrix::zeros(m, m);
    let mut syx = DMatrix::zeros(d, m);
    let mut syy = DMatrix::zeros(d, d);
    let mut first = DMatrix::zeros(m, m);
    let mut last = DMatrix::zeros(m, m);
    for (k, y) in observations.iter().enumerate() {
        let x = &sm.smoothed_means[k];
        let exx = &sm.smoothed_covs[k] + x * x.transpose();
        if k == 0 {
            first = exx.clone();
        }
        if k == n {
            last = exx.clone();
        }
        sxx += exx;
        syx += y * x.transpose();
        syy += y * y.transpose();
    }
    let mut s10 = DMatrix::zeros(m, m);
    for k in 1..=n {
        s10 += &sm.lag_one_covs[k - 1]
            + &sm.smoothed_means[k] * sm.smoothed_means[k - 1].transpose();
    }
    let s11 = &sxx - first;
    let s00 = &sxx - last;
    Ok(Moments {
        n,
        loglik: filt.loglik,
        x0: sm.smoothed_means[0].clone(),
        p0: sm.smoothed_covs[0].clone(),
        sxx,
        syx,
        syy,
        s11,
        s10,
        s00,
    })
}

/// `S_yy - C S_yx* - S_yx C* + C S_xx C*`
fn residual_moment<T: Scalar>(
    syy: &DMatrix<T>,
    syx: &DMatrix<T>,
    sxx: &DMatrix<T>,
    c: &DMatrix<T>,
) -> DMatrix<T> {
    let cross = c * syx.transpose();
    symmetrized(syy - &cross - cross.transpose() + c * sxx * c.transpose())
}

fn floored<T: Scalar>(m: DMatrix<T>) -> DMatrix<T> {
    let norm = spectral_norm_sym(&m);
    let scale = if norm > T::zero() { norm } else { T::one() };
    floor_eigenvalues(&m, scale * T::lit(COV_FLOOR))
}

fn m_step<T: Scalar>(params: &ModelParams<T>, mo: &Moments<T>, mask: ParamMask) -> MStep<T> {
    let mut next = params.clone();
    let mut pinv = false;
    let n1 = T::lit((mo.n + 1) as f64);

    if mask.contains(Param::C) {
        let inv = PsdInverse::new(&mo.sxx);
        pinv |= inv.is_pseudo();
        next.c = right_solve(&mo.syx, &inv);
    }
    if mask.contains(Param::R) {
        let u = residual_moment(&mo.syy, &mo.syx, &mo.sxx, &next.c) / n1;
        next.r = floored(u);
    }
    if mo.n > 0 {
        let nt = T::lit(mo.n as f64);
        if mask.contains(Param::A) {
            let inv = PsdInverse::new(&mo.s00);
            pinv |= inv.is_pseudo();
            next.a = right_solve(&mo.s10, &inv);
        }
        if mask.contains(Param::Q) {
            let u = residual_moment(&mo.s11, &mo.s10, &mo.s00, &next.a) / nt;
            next.q = floored(u);
        }
    }
    if mask.contains(Param::Mu) {
        next.mu = mo.x0.clone();
    }
    if mask.contains(Param::Sigma) {
        let dx = &mo.x0 - &next.mu;
        next.sigma = symmetrized(&mo.p0 + &dx * dx.transpose());
    }
    MStep {
        params: next,
        used_pseudo_inverse: pinv,
    }
}

/// One EM iteration: E-step at `params`, closed-form update of every block in
/// `mask`; the other blocks pass through unchanged.
pub fn em_update<T: Scalar>(
    params: &ModelParams<T>,
    observations: &[DVector<T>],
    mask: ParamMask,
) -> Result<MStep<T>> {
    if observations.is_empty() {
        return Err(domain("EM needs at least one observation"));
    }
    let mo = e_step(params, observations)?;
    Ok(m_step(params, &mo, mask))
}

/// Iterates [`em_update`] until the log-likelihood gain drops below
/// `cfg.loglik_tol` or `cfg.max_iters` updates have been applied.
pub fn em_fit<T: Scalar>(
    init: &ModelParams<T>,
    observations: &[DVector<T>],
    cfg: &EmConfig,
) -> Result<FitResult<T>> {
    cfg.validate()?;
    if observations.is_empty() {
        return Err(domain("EM needs at least one observation"));
    }
    let tol = T::lit(cfg.loglik_tol);
    let mut params = init.clone();
    let mut mo = e_step(&params, observations)?;
    let mut trace = vec![mo.loglik];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        let next = m_step(&params, &mo, cfg.param_mask).params;
        let next_mo = e_step(&next, observations)?;
        let gain = next_mo.loglik - mo.loglik;
        trace.push(next_mo.loglik);
        params = next;
        mo = next_mo;
        iterations = it;
        if gain < tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        params,
        loglik_trace: trace,
        iterations,
        converged,
    })
}

fn gaussian_block<T: Scalar>(cov: &DMatrix<T>, moment: &DMatrix<T>, count: T, name: &str) -> Result<T> {
    let inv = PsdInverse::new(cov);
    let log_det = inv
        .log_det()
        .ok_or_else(|| Error::Numerical(format!("{name} is singular in the E-step objective")))?;
    let tr = inv.solve(moment).trace();
    Ok(-T::lit(0.5) * (count * log_det + tr))
}

/// `E_{theta'}[ln p_theta(x, y) | y]` up to an additive constant, with the
/// conditional moments taken at `theta_prime`.
pub fn expected_complete_loglik<T: Scalar>(
    theta: &ModelParams<T>,
    theta_prime: &ModelParams<T>,
    observations: &[DVector<T>],
) -> Result<T> {
    theta.validate()?;
    if theta.state_dim() != theta_prime.state_dim() || theta.obs_dim() != theta_prime.obs_dim() {
        return Err(crate::error::dims("theta and theta_prime have different dimensions"));
    }
    let mo = e_step(theta_prime, observations)?;
    let dx = &mo.x0 - &theta.mu;
    let init_moment = &mo.p0 + &dx * dx.transpose();
    let mut total = gaussian_block(&theta.sigma, &init_moment, T::one(), "Sigma")?;
    let obs_moment = residual_moment(&mo.syy, &mo.syx, &mo.sxx, &theta.c);
    total += gaussian_block(&theta.r, &obs_moment, T::lit((mo.n + 1) as f64), "R")?;
    if mo.n > 0 {
        let tr_moment = residual_moment(&mo.s11, &mo.s10, &mo.s00, &theta.a);
        total += gaussian_block(&theta.q, &tr_moment, T::lit(mo.n as f64), "Q")?;
    }
    Ok(total)
}
