//! Linear state-space estimation under heavy-tailed state noise.
//!
//! The crate is organised bottom-up:
//!
//! * [`stable_random`] seeded uniform/exponential/Gaussian/alpha-stable variates
//!   and characteristic-function helpers;
//! * [`state_space`] the time-invariant model `x_{k+1} = A x_k + v`,
//!   `y_k = C x_k + w` and trajectory simulation;
//! * [`kalman`] and [`smoother`] the forward filter, the RTS backward pass and
//!   the lag-one smoothed covariances;
//! * [`estimation`] EM with closed-form M-step and quasi-ML via Nelder–Mead;
//! * [`experiments`] Monte Carlo sweeps over the stability exponent and skewness;
//! * [`cli`] the `stablekf` command-line front end.
//!
//! Matrix code is generic over the floating-point type through [`Scalar`];
//! the `*64` / `*32` aliases below fix the common choices.

pub mod cli;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod io;
pub mod kalman;
pub mod linalg;
pub mod scalar;
pub mod smoother;
pub mod stable_random;
pub mod state_space;
mod univariate;

pub use error::{Error, Result};
pub use estimation::{
    em_fit, em_update, expected_complete_loglik, qml_fit, EmConfig, FitResult, MStep,
    OptimizerConfig, Param, ParamMask,
};
pub use experiments::{kde, run_sweep, state_mse, Bandwidth, ErrorTable, Regime, SweepConfig};
pub use kalman::{correct, filter_pass, initialize, innovations_loglik, predict, FilterResult};
pub use scalar::Scalar;
pub use smoother::{lag_one_pass, smooth_pass, SmootherResult};
pub use stable_random::{RngStream, StableParams};
pub use state_space::{
    nominal_gaussian_params, simulate_trajectory, InitialLaw, ModelParams, NoiseSpec, StateNoise,
    Trajectory,
};

pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type FilterResult64 = FilterResult<f64>;
pub type FilterResult32 = FilterResult<f32>;
pub type SmootherResult64 = SmootherResult<f64>;
pub type SmootherResult32 = SmootherResult<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type FitResult64 = FitResult<f64>;
