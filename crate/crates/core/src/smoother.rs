//! Rauch–Tung–Striebel backward pass and lag-one smoothed covariances.

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, Result};
use crate::kalman::FilterResult;
use crate::linalg::{right_solve, symmetrize, PsdInverse};
use crate::state_space::ModelParams;
use crate::univariate;
use crate::Scalar;

#[derive(Clone, Debug)]
pub struct SmootherResult<T: Scalar> {
    /// `x_{k|N}`, `k = 0..N`.
    pub smoothed_means: Vec<DVector<T>>,
    /// `Sigma_{k|N}`, `k = 0..N`.
    pub smoothed_covs: Vec<DMatrix<T>>,
    /// `Sigma_{k,k-1|N}` for `k = 1..N`, stored at index `k - 1`.
    pub lag_one_covs: Vec<DMatrix<T>>,
    /// `J_k = Sigma_{k|k} A* Sigma_{k+1|k}^{-1}`, `k = 0..N-1`.
    pub gains: Vec<DMatrix<T>>,
    pub used_pseudo_inverse: bool,
}

impl<T: Scalar> SmootherResult<T> {
    pub fn len(&self) -> usize {
        self.smoothed_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smoothed_means.is_empty()
    }
}

fn check_filter<T: Scalar>(params: &ModelParams<T>, filt: &FilterResult<T>) -> Result<()> {
    let n = filt.filtered_means.len();
    let lens = [
        filt.predicted_means.len(),
        filt.predicted_covs.len(),
        filt.filtered_covs.len(),
        filt.gains.len(),
    ];
    if n == 0 || lens.iter().any(|&l| l != n) {
        return Err(dims("filter result sequences have inconsistent lengths"));
    }
    let m = params.state_dim();
    if filt.filtered_means[0].len() != m || filt.gains[0].shape() != (m, params.obs_dim()) {
        return Err(dims("filter result does not match the model dimensions"));
    }
    Ok(())
}

/// Backward recursion from `k = N - 1` down to `0`; the terminal values are the
/// filter's.
pub fn smooth_pass<T: Scalar>(params: &ModelParams<T>, filt: &FilterResult<T>) -> Result<SmootherResult<T>> {
    params.check_dims()?;
    check_filter(params, filt)?;
    if params.is_scalar() {
        let e = |x: &[DMatrix<T>]| x.iter().map(|v| v[(0, 0)]).collect::<Vec<T>>();
        let f = univariate::Filtered {
            pred_mean: filt.predicted_means.iter().map(|v| v[0]).collect(),
            pred_cov: e(&filt.predicted_covs),
            mean: filt.filtered_means.iter().map(|v| v[0]).collect(),
            cov: e(&filt.filtered_covs),
            innovation: Vec::new(),
            innovation_cov: Vec::new(),
            gain: e(&filt.gains),
        };
        let s = univariate::smooth(params.a[(0, 0)], params.c[(0, 0)], &f);
        let m = |x: Vec<T>| x.into_iter().map(|v| DMatrix::from_element(1, 1, v)).collect::<Vec<_>>();
        return Ok(SmootherResult {
            smoothed_means: s.mean.into_iter().map(|v| DVector::from_element(1, v)).collect(),
            smoothed_covs: m(s.cov),
            lag_one_covs: m(s.lag),
            gains: m(s.gain),
            used_pseudo_inverse: s.used_pseudo_inverse,
        });
    }
    let len = filt.len();
    let n = len - 1;
    let at = params.a.transpose();

    let mut means = filt.filtered_means.clone();
    let mut covs = filt.filtered_covs.clone();
    let mut gains = vec![DMatrix::zeros(0, 0); n];
    let mut pinv = false;
    for k in (0..n).rev() {
        let inv = PsdInverse::new(&filt.predicted_covs[k + 1]);
        pinv |= inv.is_pseudo();
        let j = right_solve(&(&filt.filtered_covs[k] * &at), &inv);
        let dm = &means[k + 1] - &filt.predicted_means[k + 1];
        means[k] = &filt.filtered_means[k] + &j * dm;
        let dp = &covs[k + 1] - &filt.predicted_covs[k + 1];
        let mut p = &filt.filtered_covs[k] + &j * dp * j.transpose();
        symmetrize(&mut p);
        covs[k] = p;
        gains[k] = j;
    }
    let mut out = SmootherResult {
        smoothed_means: means,
        smoothed_covs: covs,
        lag_one_covs: Vec::new(),
        gains,
        used_pseudo_inverse: pinv,
    };
    out.lag_one_covs = lag_one_pass(params, filt, &out)?;
    Ok(out)
}

/// `Sigma_{k,k-1|N}` for `k = 1..N` in ascending order.
///
/// Starts from `Sigma_{N,N-1|N} = (I - G_N C) A Sigma_{N-1|N-1}` and runs
/// `Sigma_{k-1,k-2|N} = Sigma_{k-1|k-1} J_{k-2}* + J_{k-1} (Sigma_{k,k-1|N} - A Sigma_{k-1|k-1}) J_{k-2}*`.
pub fn lag_one_pass<T: Scalar>(
    params: &ModelParams<T>,
    filt: &FilterResult<T>,
    sm: &SmootherResult<T>,
) -> Result<Vec<DMatrix<T>>> {
    check_filter(params, filt)?;
    let len = filt.len();
    if sm.len() != len || sm.gains.len() + 1 != len {
        return Err(dims("smoother result does not match the filter result"));
    }
    let n = len - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = params.state_dim();
    let a = &params.a;
    let mut lag = vec![DMatrix::zeros(m, m); n];
    let eye = DMatrix::<T>::identity(m, m);
    lag[n - 1] = (eye - &filt.gains[n] * &params.c) * a * &filt.filtered_covs[n - 1];
    for k in (2..=n).rev() {
        let pk1 = &filt.filtered_covs[k - 1];
        let jt = sm.gains[k - 2].transpose();
        let inner = &lag[k - 1] - a * pk1;
        lag[k - 2] = pk1 * &jt + &sm.gains[k - 1] * inner * &jt;
    }
    Ok(lag)
}
