//! Quasi-maximum likelihood: maximise the Gaussian innovations log-likelihood
//! over an unconstrained encoding of the free parameter blocks.
//!
//! Mean and transition blocks (`mu`, `A`, `C`) are encoded entrywise.
//! Covariance blocks (`Sigma`, `Q`, `R`) use a log-Cholesky encoding: the
//! strictly lower entries of `L` plus `ln L_ii^2` on the diagonal, so a 1x1
//! block is stored as its log-variance.

use nalgebra::{DMatrix, DVector};

use super::nelder_mead::{default_steps, minimize, NelderMeadConfig};
use super::{FitResult, Param, ParamMask};
use crate::error::{domain, Result};
use crate::kalman::innovations_loglik;
use crate::state_space::ModelParams;
use crate::Scalar;

#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub max_evals: usize,
    pub x_tol: f64,
    pub f_tol: f64,
    pub param_mask: ParamMask,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let nm = NelderMeadConfig::default();
        Self {
            max_evals: nm.max_evals,
            x_tol: nm.x_tol,
            f_tol: nm.f_tol,
            param_mask: ParamMask::all(),
        }
    }
}

fn encode_cov(m: &DMatrix<f64>, out: &mut Vec<f64>) -> Result<()> {
    let n = m.nrows();
    let l = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| domain("covariance block must be positive definite to encode"))?
        .unpack();
    for i in 0..n {
        for j in 0..i {
            out.push(l[(i, j)]);
        }
        out.push((l[(i, i)] * l[(i, i)]).ln());
    }
    Ok(())
}

fn decode_cov(z: &[f64], n: usize, pos: &mut usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            l[(i, j)] = z[*pos];
            *pos += 1;
        }
        l[(i, i)] = (0.5 * z[*pos]).exp();
        *pos += 1;
    }
    &l * l.transpose()
}

fn encode(p: &ModelParams<f64>, mask: ParamMask) -> Result<Vec<f64>> {
    let mut z = Vec::new();
    for block in mask.iter() {
        match block {
            Param::Mu => z.extend(p.mu.iter()),
            Param::A => z.extend(p.a.transpose().iter()),
            Param::C => z.extend(p.c.transpose().iter()),
            Param::Sigma => encode_cov(&p.sigma, &mut z)?,
            Param::Q => encode_cov(&p.q, &mut z)?,
            Param::R => encode_cov(&p.r, &mut z)?,
        }
    }
    Ok(z)
}

fn decode(base: &ModelParams<f64>, mask: ParamMask, z: &[f64]) -> ModelParams<f64> {
    let mut p = base.clone();
    let m = p.state_dim();
    let d = p.obs_dim();
    let mut pos = 0;
    let take = |k: usize, pos: &mut usize| {
        let s = &z[*pos..*pos + k];
        *pos += k;
        s
    };
    for block in mask.iter() {
        match block {
            Param::Mu => p.mu = DVector::from_column_slice(take(m, &mut pos)),
            Param::A => p.a = DMatrix::from_row_slice(m, m, take(m * m, &mut pos)),
            Param::C => p.c = DMatrix::from_row_slice(d, m, take(d * m, &mut pos)),
            Param::Sigma => p.sigma = decode_cov(z, m, &mut pos),
            Param::Q => p.q = decode_cov(z, m, &mut pos),
            Param::R => p.r = decode_cov(z, d, &mut pos),
        }
    }
    p
}

/// Maximises [`innovations_loglik`] over the blocks in `cfg.param_mask`,
/// starting from `init`, with a Nelder–Mead simplex.
pub fn qml_fit<T: Scalar>(
    init: &ModelParams<T>,
    observations: &[DVector<T>],
    cfg: &OptimizerConfig,
) -> Result<FitResult<T>> {
    let ll0 = innovations_loglik(init, observations)
        .map_err(|e| domain(format!("log-likelihood at the initial point is not finite: {e}")))?;
    let base = init.cast::<f64>();
    let z0 = encode(&base, cfg.param_mask)?;
    let objective = |z: &[f64]| -> f64 {
        let p = decode(&base, cfg.param_mask, z).cast::<T>();
        match innovations_loglik(&p, observations) {
            Ok(ll) => -ll.as_f64(),
            Err(_) => f64::INFINITY,
        }
    };
    let nm = NelderMeadConfig {
        max_evals: cfg.max_evals,
        x_tol: cfg.x_tol,
        f_tol: cfg.f_tol,
    };
    let res = minimize(objective, &z0, &default_steps(&z0), &nm);
    let params = if res.fx.is_finite() {
        decode(&base, cfg.param_mask, &res.x).cast::<T>()
    } else {
        init.clone()
    };
    let mut loglik_trace: Vec<T> = res.trace.iter().map(|&f| T::lit(-f)).collect();
    loglik_trace[0] = ll0;
    Ok(FitResult {
        params,
        loglik_trace,
        iterations: res.iterations,
        converged: res.converged,
    })
}
