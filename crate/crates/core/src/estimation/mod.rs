//! Parameter estimation for the linear-Gaussian model: EM with closed-form
//! M-step updates and quasi-maximum likelihood by direct maximisation of the
//! innovations log-likelihood.

mod em;
pub mod nelder_mead;
mod qml;

use std::fmt;
use std::str::FromStr;

pub use em::{em_fit, em_update, expected_complete_loglik, MStep};
pub use qml::{qml_fit, OptimizerConfig};

use crate::error::{domain, Error, Result};
use crate::state_space::ModelParams;
use crate::Scalar;

/// One block of `theta = [mu, Sigma, A, C, Q, R]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Param {
    Mu,
    Sigma,
    A,
    C,
    Q,
    R,
}

impl Param {
    pub const ALL: [Param; 6] = [Param::Mu, Param::Sigma, Param::A, Param::C, Param::Q, Param::R];

    pub fn name(self) -> &'static str {
        match self {
            Param::Mu => "mu",
            Param::Sigma => "Sigma",
            Param::A => "A",
            Param::C => "C",
            Param::Q => "Q",
            Param::R => "R",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| domain(format!("unknown parameter {s:?}")))
    }
}

/// Set of parameter blocks an estimator may change; the rest stay frozen.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamMask(u8);

impl ParamMask {
    pub fn all() -> Self {
        Self::of(&Param::ALL)
    }

    pub fn none() -> Self {
        ParamMask(0)
    }

    pub fn of(params: &[Param]) -> Self {
        ParamMask(params.iter().fold(0, |acc, p| acc | p.bit()))
    }

    pub fn contains(self, p: Param) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Param> {
        Param::ALL.into_iter().filter(move |&p| self.contains(p))
    }
}

impl fmt::Debug for ParamMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(Param::name)).finish()
    }
}

impl FromStr for ParamMask {
    type Err = Error;

    /// Comma-separated names, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(ParamMask::all());
        }
        let params = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(Param::from_str)
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamMask::of(&params))
    }
}

#[derive(Clone, Debug)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the log-likelihood improves by less than this (absolute).
    pub loglik_tol: f64,
    pub param_mask: ParamMask,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            loglik_tol: 1e-6,
            param_mask: ParamMask::all(),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(domain("max_iters must be at least 1"));
        }
        if !(self.loglik_tol > 0.0) {
            return Err(domain("loglik_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FitResult<T: Scalar> {
    pub params: ModelParams<T>,
    /// Log-likelihood at the initial point followed by one value per iteration.
    pub loglik_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> FitResult<T> {
    pub fn final_loglik(&self) -> T {
        *self.loglik_trace.last().expect("trace holds the initial value")
    }
}
