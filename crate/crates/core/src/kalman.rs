//! Forward Kalman filter and the innovations-form Gaussian log-likelihood.
//!
//! Step 0 conditions the prior `N(mu, Sigma)` on `y_0`; steps `k >= 1`
//! alternate [`predict`] and [`correct`]. The log-likelihood includes the
//! `k = 0` innovation `y_0 - C mu` with covariance `C Sigma C* + R`, so it
//! equals the joint Gaussian log-density of `y_0..y_N`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, domain, Error, Result};
use crate::linalg::{symmetrize, PsdInverse};
use crate::state_space::ModelParams;
use crate::univariate;
use crate::Scalar;

/// Per-step filter output for `k = 0..N`. Index `k` of every sequence refers
/// to time `k`; at `k = 0` the "predicted" quantities are the prior.
#[derive(Clone, Debug)]
pub struct FilterResult<T: Scalar> {
    pub predicted_means: Vec<DVector<T>>,
    pub predicted_covs: Vec<DMatrix<T>>,
    pub filtered_means: Vec<DVector<T>>,
    pub filtered_covs: Vec<DMatrix<T>>,
    pub innovations: Vec<DVector<T>>,
    pub innovation_covs: Vec<DMatrix<T>>,
    pub gains: Vec<DMatrix<T>>,
    /// NaN when some innovation covariance was singular.
    pub loglik: T,
    /// Some innovation covariance fell back to the pseudo-inverse.
    pub used_pseudo_inverse: bool,
}

impl<T: Scalar> FilterResult<T> {
    /// Number of time points, `N + 1`.
    pub fn len(&self) -> usize {
        self.filtered_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered_means.is_empty()
    }
}

/// Output of one measurement update.
#[derive(Clone, Debug)]
pub struct Correction<T: Scalar> {
    pub filtered_mean: DVector<T>,
    pub filtered_cov: DMatrix<T>,
    pub innovation: DVector<T>,
    pub innovation_cov: DMatrix<T>,
    pub gain: DMatrix<T>,
    /// `ln N(innovation; 0, innovation_cov)`, `None` for a singular covariance.
    pub loglik_term: Option<T>,
    pub used_pseudo_inverse: bool,
}


fn check_moments<T: Scalar>(params: &ModelParams<T>, mean: &DVector<T>, cov: &DMatrix<T>) -> Result<()> {
    let m = params.state_dim();
    if mean.len() != m || cov.shape() != (m, m) {
        return Err(dims(format!(
            "state moments have shapes {} / {:?}, model state dim is {m}",
            mean.len(),
            cov.shape()
        )));
    }
    Ok(())
}

/// `x -> A x`, `P -> A P A* + Q`.
pub fn predict<T: Scalar>(
    params: &ModelParams<T>,
    filtered_mean: &DVector<T>,
    filtered_cov: &DMatrix<T>,
) -> Result<(DVector<T>, DMatrix<T>)> {
    check_moments(params, filtered_mean, filtered_cov)?;
    Ok(predict_unchecked(params, filtered_mean, filtered_cov))
}

fn predict_unchecked<T: Scalar>(
    params: &ModelParams<T>,
    mean: &DVector<T>,
    cov: &DMatrix<T>,
) -> (DVector<T>, DMatrix<T>) {
    let a = &params.a;
    let x = a * mean;
    let mut p = a * cov * a.transpose() + &params.q;
    symmetrize(&mut p);
    (x, p)
}

/// Conditions `N(pred_mean, pred_cov)` on the observation `y`.
pub fn correct<T: Scalar>(
    params: &ModelParams<T>,
    pred_mean: &DVector<T>,
    pred_cov: &DMatrix<T>,
    y: &DVector<T>,
) -> Result<Correction<T>> {
    check_moments(params, pred_mean, pred_cov)?;
    if y.len() != params.obs_dim() {
        return Err(dims(format!(
            "observation has length {}, model obs dim is {}",
            y.len(),
            params.obs_dim()
        )));
    }
    Ok(correct_unchecked(params, pred_mean, pred_cov, y))
}

fn correct_unchecked<T: Scalar>(
    params: &ModelParams<T>,
    pred_mean: &DVector<T>,
    pred_cov: &DMatrix<T>,
    y: &DVector<T>,
) -> Correction<T> {
    let c = &params.c;
    let innovation = y - c * pred_mean;
    let cp = c * pred_cov;
    let mut h = &cp * c.transpose() + &params.r;
    symmetrize(&mut h);
    let inv = PsdInverse::new(&h);
    // G = P C* H^{-1} = (H^{-1} C P)* since P and H are symmetric.
    let gain = inv.solve(&cp).transpose();
    let filtered_mean = pred_mean + &gain * &innovation;
    let mut filtered_cov = pred_cov - &gain * &cp;
    symmetrize(&mut filtered_cov);

    let loglik_term = inv.log_det().map(|log_det| {
        let white = inv.solve(&DMatrix::from_column_slice(innovation.len(), 1, innovation.as_slice()));
        let quad = innovation.dot(&white.column(0));
        let d = T::lit(innovation.len() as f64);
        -T::lit(0.5) * (d * T::lit(2.0 * PI).ln() + log_det + quad)
    });
    Correction {
        filtered_mean,
        filtered_cov,
        innovation,
        innovation_cov: h,
        gain,
        loglik_term,
        used_pseudo_inverse: inv.is_pseudo(),
    }
}

/// Exact conditional of `x_0` given `y_0` under the prior `N(mu, Sigma)`.
pub fn initialize<T: Scalar>(params: &ModelParams<T>, y0: &DVector<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    params.check_dims()?;
    let c = correct(params, &params.mu, &params.sigma, y0)?;
    Ok((c.filtered_mean, c.filtered_cov))
}

struct Step<'a, T: Scalar> {
    pred_mean: &'a DVector<T>,
    pred_cov: &'a DMatrix<T>,
    correction: Correction<T>,
}

fn check_inputs<T: Scalar>(params: &ModelParams<T>, observations: &[DVector<T>]) -> Result<()> {
    params.validate()?;
    if observations.is_empty() {
        return Err(domain("filter needs at least one observation"));
    }
    let d = params.obs_dim();
    if let Some(k) = observations.iter().position(|y| y.len() != d) {
        return Err(dims(format!("observation {k} has length {}, expected {d}", observations[k].len())));
    }
    Ok(())
}

/// Scalar observations as a flat slice.
pub(crate) fn flat<T: Scalar>(observations: &[DVector<T>]) -> Vec<T> {
    observations.iter().map(|y| y[0]).collect()
}

/// Filters a scalar model through the allocation-free path.
pub(crate) fn filter_scalar<T: Scalar>(
    params: &ModelParams<T>,
    observations: &[DVector<T>],
) -> Result<(univariate::Filtered<T>, univariate::Summary<T>)> {
    check_inputs(params, observations)?;
    let mut f = univariate::Filtered::with_capacity(observations.len());
    let s = univariate::filter(&univariate::Coeffs::of(params), &flat(observations), Some(&mut f));
    Ok((f, s))
}

/// Shared recursion; `sink` sees every step in time order.
fn run<T: Scalar>(
    params: &ModelParams<T>,
    observations: &[DVector<T>],
    mut sink: impl FnMut(Step<'_, T>),
) -> Result<(T, bool)> {
    let mut loglik = T::zero();
    let mut singular = false;
    let mut pinv = false;
    let mut mean = params.mu.clone();
    let mut cov = params.sigma.clone();
    for (k, y) in observations.iter().enumerate() {
        let (pm, pc) = if k == 0 {
            (mean, cov)
        } else {
            predict_unchecked(params, &mean, &cov)
        };
        let corr = correct_unchecked(params, &pm, &pc, y);
        match corr.loglik_term {
            Some(t) => loglik += t,
            None => singular = true,
        }
        pinv |= corr.used_pseudo_inverse;
        mean = corr.filtered_mean.clone();
        cov = corr.filtered_cov.clone();
        sink(Step {
            pred_mean: &pm,
            pred_cov: &pc,
            correction: corr,
        });
    }
    if singular {
        loglik = T::lit(f64::NAN);
    }
    Ok((loglik, pinv))
}

/// Full forward pass over `y_0..y_N`.
pub fn filter_pass<T: Scalar>(params: &ModelParams<T>, observations: &[DVector<T>]) -> Result<FilterResult<T>> {
    if params.is_scalar() {
        let (f, s) = filter_scalar(params, observations)?;
        let v = |x: &[T]| x.iter().map(|&e| DVector::from_element(1, e)).collect::<Vec<_>>();
        let m = |x: &[T]| x.iter().map(|&e| DMatrix::from_element(1, 1, e)).collect::<Vec<_>>();
        return Ok(FilterResult {
            predicted_means: v(&f.pred_mean),
            predicted_covs: m(&f.pred_cov),
            filtered_means: v(&f.mean),
            filtered_covs: m(&f.cov),
            innovations: v(&f.innovation),
            innovation_covs: m(&f.innovation_cov),
            gains: m(&f.gain),
            loglik: s.loglik,
            used_pseudo_inverse: s.used_pseudo_inverse,
        });
    }
    check_inputs(params, observations)?;
    let n = observations.len();
    let mut out = FilterResult {
        predicted_means: Vec::with_capacity(n),
        predicted_covs: Vec::with_capacity(n),
        filtered_means: Vec::with_capacity(n),
        filtered_covs: Vec::with_capacity(n),
        innovations: Vec::with_capacity(n),
        innovation_covs: Vec::with_capacity(n),
        gains: Vec::with_capacity(n),
        loglik: T::zero(),
        used_pseudo_inverse: false,
    };
    let (loglik, pinv) = run(params, observations, |s| {
        out.predicted_means.push(s.pred_mean.clone());
        out.predicted_covs.push(s.pred_cov.clone());
        let c = s.correction;
        out.filtered_means.push(c.filtered_mean);
        out.filtered_covs.push(c.filtered_cov);
        out.innovations.push(c.innovation);
        out.innovation_covs.push(c.innovation_cov);
        out.gains.push(c.gain);
    })?;
    out.loglik = loglik;
    out.used_pseudo_inverse = pinv;
    Ok(out)
}

/// `sum_k ln N(nu_k; 0, H_k)` for `k = 0..N`.
pub fn innovations_loglik<T: Scalar>(params: &ModelParams<T>, observations: &[DVector<T>]) -> Result<T> {
    check_inputs(params, observations)?;
    let loglik = if params.is_scalar() {
        univariate::filter(&univariate::Coeffs::of(params), &flat(observations), None).loglik
    } else {
        run(params, observations, |_| {})?.0
    };
    if !loglik.is_finite() {
        return Err(Error::Numerical(
            "innovation covariance is singular or the likelihood is not finite".into(),
        ));
    }
    Ok(loglik)
}
