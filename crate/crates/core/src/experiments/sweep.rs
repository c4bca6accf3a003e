use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::estimation::{em_fit, qml_fit, EmConfig, OptimizerConfig, Param, ParamMask};
use crate::kalman::filter_pass;
use crate::smoother::smooth_pass;
use crate::stable_random::{RngStream, StableParams};
use crate::state_space::{nominal_gaussian_params, simulate_trajectory, ModelParams, NoiseSpec};

use super::state_mse;

/// How the filter obtains its parameters in each replication.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Nominal Gaussian parameters with the true scales.
    KnownParams,
    /// EM over `EmConfig::param_mask`, started at the nominal parameters.
    FitEm,
    /// Quasi-ML over `OptimizerConfig::param_mask`, started at the nominal parameters.
    FitQml,
    /// EM over `Q` only.
    FitEmQOnly,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::KnownParams => "known_params",
            Regime::FitEm => "fit_em",
            Regime::FitQml => "fit_qml",
            Regime::FitEmQOnly => "fit_em_q_only",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "known" | "known_params" => Ok(Regime::KnownParams),
            "em" | "fit_em" => Ok(Regime::FitEm),
            "qml" | "fit_qml" => Ok(Regime::FitQml),
            "em-q" | "em_q" | "fit_em_q_only" => Ok(Regime::FitEmQOnly),
            other => Err(domain(format!("unknown regime {other:?}"))),
        }
    }
}

/// Scalar experiment model: `x_{k+1} = a x_k + e`, `y_k = c x_k + w`,
/// `e ~ S_alpha(sigma_state, beta, 0)`, `x_0 ~ S_alpha(sigma0, beta, mu0)`,
/// `w ~ N(0, r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseModel {
    pub a: f64,
    pub c: f64,
    pub sigma_state: f64,
    pub r: f64,
    pub sigma0: f64,
    pub mu0: f64,
}

impl Default for BaseModel {
    fn default() -> Self {
        Self {
            a: 1.0,
            c: 1.2,
            sigma_state: 20.0,
            r: 150.0,
            sigma0: 50.0,
            mu0: 100.0,
        }
    }
}

impl BaseModel {
    pub fn noise(&self, alpha: f64, beta: f64) -> Result<NoiseSpec> {
        NoiseSpec::stable(
            StableParams::new(alpha, beta, self.sigma_state, 0.0)?,
            StableParams::new(alpha, beta, self.sigma0, self.mu0)?,
            self.r,
        )
    }

    pub fn nominal(&self, alpha: f64, beta: f64) -> Result<ModelParams<f64>> {
        let one = |v| DMatrix::from_element(1, 1, v);
        nominal_gaussian_params(&self.noise(alpha, beta)?, &one(self.a), &one(self.c), &one(self.r))
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    /// `(alpha, beta)` pairs, one table row each.
    pub grid: Vec<(f64, f64)>,
    pub n_steps: usize,
    pub n_replications: usize,
    pub regime: Regime,
    pub base: BaseModel,
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub em: EmConfig,
    pub optimizer: OptimizerConfig,
}

impl SweepConfig {
    pub fn new(grid: Vec<(f64, f64)>, regime: Regime, n_replications: usize, master_seed: u64) -> Self {
        Self {
            grid,
            n_steps: 1000,
            n_replications,
            regime,
            base: BaseModel::default(),
            master_seed,
            workers: 0,
            em: EmConfig::default(),
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(domain("sweep grid is empty"));
        }
        for &(a, b) in &self.grid {
            if !(a > 0.0 && a <= 2.0) || !(-1.0..=1.0).contains(&b) {
                return Err(domain(format!("grid point ({a}, {b}) is outside (0,2] x [-1,1]")));
            }
        }
        if self.n_replications < 1 {
            return Err(domain("Z must be at least 1"));
        }
        if self.n_steps < 1 {
            return Err(domain("N must be at least 1"));
        }
        self.em.validate()?;
        self.base.noise(2.0, 0.0).map(|_| ())
    }
}

/// Outcome of one simulated series.
#[derive(Clone, Debug, PartialEq)]
pub struct Replication {
    pub filter_mse: f64,
    pub smoother_mse: f64,
    pub q: f64,
    pub r: f64,
    pub a: f64,
    pub c: f64,
    pub final_sigma_kk: f64,
    /// `false` when the series or the fit produced non-finite values.
    pub finite: bool,
}

impl Replication {
    fn excluded() -> Self {
        Self {
            filter_mse: f64::NAN,
            smoother_mse: f64::NAN,
            q: f64::NAN,
            r: f64::NAN,
            a: f64::NAN,
            c: f64::NAN,
            final_sigma_kk: f64::NAN,
            finite: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub alpha: f64,
    pub beta: f64,
    pub regime: Regime,
    /// Replications that finished with finite values.
    pub z_effective: usize,
    pub filter_mse_mean: f64,
    pub smoother_mse_mean: f64,
    pub filter_mse_median: f64,
    pub smoother_mse_median: f64,
    /// Standard error of `filter_mse_mean`.
    pub filter_mse_se: f64,
    pub smoother_mse_se: f64,
    pub mean_q_hat: f64,
    pub mean_r_hat: f64,
    pub mean_a_hat: f64,
    pub mean_c_hat: f64,
    pub mean_final_sigma_kk: f64,
    pub excluded_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    /// Per-row replication outcomes in replication order.
    pub replications: Vec<Vec<Replication>>,
}

impl ErrorTable {
    pub fn total_excluded(&self) -> usize {
        self.rows.iter().map(|r| r.excluded_count).sum()
    }
}

fn fitted_params(cfg: &SweepConfig, nominal: &ModelParams<f64>, y: &[nalgebra::DVector<f64>]) -> Result<ModelParams<f64>> {
    match cfg.regime {
        Regime::KnownParams => Ok(nominal.clone()),
        Regime::FitEm => Ok(em_fit(nominal, y, &cfg.em)?.params),
        Regime::FitEmQOnly => {
            let em = EmConfig {
                param_mask: ParamMask::of(&[Param::Q]),
                ..cfg.em.clone()
            };
            Ok(em_fit(nominal, y, &em)?.params)
        }
        Regime::FitQml => Ok(qml_fit(nominal, y, &cfg.optimizer)?.params),
    }
}

/// Simulates one series at `(alpha, beta)` from `stream` and scores the
/// filter and smoother under the configured regime.
pub fn run_replication(cfg: &SweepConfig, alpha: f64, beta: f64, stream: u64) -> Result<Replication> {
    let noise = cfg.base.noise(alpha, beta)?;
    let nominal = cfg.base.nominal(alpha, beta)?;
    let mut rng = RngStream::new(cfg.master_seed, stream);
    let traj = simulate_trajectory(&nominal, &noise, cfg.n_steps, &mut rng)?;
    if !traj.is_finite() {
        return Ok(Replication::excluded());
    }
    let theta = match fitted_params(cfg, &nominal, &traj.observations) {
        Ok(t) => t,
        Err(Error::Numerical(_)) | Err(Error::Domain(_)) => return Ok(Replication::excluded()),
        Err(e) => return Err(e),
    };
    let filt = match filter_pass(&theta, &traj.observations) {
        Ok(f) => f,
        Err(Error::Domain(_)) => return Ok(Replication::excluded()),
        Err(e) => return Err(e),
    };
    let sm = smooth_pass(&theta, &filt)?;
    let rep = Replication {
        filter_mse: state_mse(&traj.states, &filt.filtered_means)?,
        smoother_mse: state_mse(&traj.states, &sm.smoothed_means)?,
        q: theta.q[(0, 0)],
        r: theta.r[(0, 0)],
        a: theta.a[(0, 0)],
        c: theta.c[(0, 0)],
        final_sigma_kk: filt.filtered_covs.last().map(|p| p[(0, 0)]).unwrap_or(f64::NAN),
        finite: true,
    };
    let all_finite = [rep.filter_mse, rep.smoother_mse, rep.q, rep.r, rep.a, rep.c, rep.final_sigma_kk]
        .iter()
        .all(|v| v.is_finite());
    Ok(if all_finite { rep } else { Replication::excluded() })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_error(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn summarize(alpha: f64, beta: f64, regime: Regime, reps: &[Replication]) -> ErrorRow {
    let ok: Vec<&Replication> = reps.iter().filter(|r| r.finite).collect();
    let col = |f: fn(&Replication) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let filt = col(|r| r.filter_mse);
    let smooth = col(|r| r.smoother_mse);
    ErrorRow {
        alpha,
        beta,
        regime,
        z_effective: ok.len(),
        filter_mse_mean: mean(&filt),
        smoother_mse_mean: mean(&smooth),
        filter_mse_median: median(&filt),
        smoother_mse_median: median(&smooth),
        filter_mse_se: std_error(&filt),
        smoother_mse_se: std_error(&smooth),
        mean_q_hat: mean(&col(|r| r.q)),
        mean_r_hat: mean(&col(|r| r.r)),
        mean_a_hat: mean(&col(|r| r.a)),
        mean_c_hat: mean(&col(|r| r.c)),
        mean_final_sigma_kk: mean(&col(|r| r.final_sigma_kk)),
        excluded_count: reps.len() - ok.len(),
    }
}

/// Runs every grid point for `Z` replications. Replication `r` of grid point
/// `g` draws from stream `g * Z + r`, so the table does not depend on the
/// worker count or schedule.
pub fn run_sweep(cfg: &SweepConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let z = cfg.n_replications;
    let tasks: Vec<(usize, usize)> = (0..cfg.grid.len())
        .flat_map(|g| (0..z).map(move |r| (g, r)))
        .collect();
    let job = |&(g, r): &(usize, usize)| {
        let (alpha, beta) = cfg.grid[g];
        run_replication(cfg, alpha, beta, (g * z + r) as u64)
    };
    let results: Vec<Result<Replication>> = if cfg.workers == 1 {
        tasks.iter().map(job).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(job).collect())
    };
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(cfg.grid.len());
    let mut replications = Vec::with_capacity(cfg.grid.len());
    for (g, chunk) in results.chunks(z).enumerate() {
        let (alpha, beta) = cfg.grid[g];
        rows.push(summarize(alpha, beta, cfg.regime, chunk));
        replications.push(chunk.to_vec());
    }
    Ok(ErrorTable { rows, replications })
}
