//! `stablekf` command line: flag/config-file merging and subcommand dispatch.
//!
//! Config files hold `key = value` lines (`#` starts a comment); keys are the
//! long flag names without dashes. Flags override file values; the seed falls
//! back to `STABLEKF_SEED`, then 0.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimation::{em_fit, qml_fit, EmConfig, OptimizerConfig, ParamMask};
use crate::experiments::{kde, run_sweep, state_mse, Bandwidth, BaseModel, Regime, SweepConfig};
use crate::io;
use crate::kalman::filter_pass;
use crate::smoother::smooth_pass;
use crate::stable_random::{RngStream, StableParams};
use crate::state_space::{simulate_trajectory, Trajectory};

pub const SEED_ENV: &str = "STABLEKF_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Filter,
    Smooth,
    FitEm,
    FitQml,
    Sweep,
    KdeCompare,
}

#[derive(Parser, Debug)]
#[command(
    name = "stablekf",
    about = "Kalman filtering and smoothing under alpha-stable state noise",
    arg_required_else_help = true
)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// key = value file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads for sweeps (0 = all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// trajectory CSV with a y column (filter, smooth, fit-*)
    #[arg(long)]
    input: Option<PathBuf>,
    /// stability exponent in (0, 2]
    #[arg(long)]
    alpha: Option<String>,
    /// skewness in [-1, 1]; comma list allowed for sweeps
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    /// state-noise scale
    #[arg(long)]
    sigma: Option<f64>,
    /// `alpha:start:stop:step` or `beta:start:stop:step`
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// known | em | qml | em-q
    #[arg(long)]
    regime: Option<String>,
    /// replications per grid point
    #[arg(long = "Z")]
    z: Option<usize>,
    /// last time index; series have N + 1 points
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "A", allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long = "C", allow_hyphen_values = true)]
    c: Option<f64>,
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mu0: Option<f64>,
    /// `all` or a comma list of mu,Sigma,A,C,Q,R
    #[arg(long)]
    mask: Option<String>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// EM log-likelihood tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Nelder–Mead evaluation budget
    #[arg(long = "max-evals")]
    max_evals: Option<usize>,
    /// draws per density in kde-compare
    #[arg(long)]
    samples: Option<usize>,
    /// exit 0 even if some replications were excluded
    #[arg(long = "allow-exclusions")]
    allow_exclusions: bool,
}

/// Fully merged configuration of one invocation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub out_dir: PathBuf,
    pub input: Option<PathBuf>,
    pub seed: u64,
    pub workers: usize,
    pub alpha: f64,
    pub beta: f64,
    pub base: BaseModel,
    pub n_steps: usize,
    pub z: usize,
    pub grid: Vec<(f64, f64)>,
    pub regime: Regime,
    pub em: EmConfig,
    pub optimizer: OptimizerConfig,
    pub samples: usize,
    pub allow_exclusions: bool,
}

impl RunConfig {
    pub fn sweep_config(&self) -> SweepConfig {
        let mut s = SweepConfig::new(self.grid.clone(), self.regime, self.z, self.seed);
        s.n_steps = self.n_steps;
        s.base = self.base.clone();
        s.workers = self.workers;
        s.em = self.em.clone();
        s.optimizer = self.optimizer.clone();
        s
    }
}

const FILE_KEYS: &[&str] = &[
    "seed", "workers", "out", "input", "alpha", "beta", "sigma", "grid", "regime", "Z", "N", "A",
    "C", "R", "sigma0", "mu0", "mask", "max-iters", "tol", "max-evals", "samples",
    "allow-exclusions",
];

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
        let k = k.trim().trim_start_matches("--");
        if !FILE_KEYS.contains(&k) {
            return Err(usage(format!("{}:{}: unknown key {k:?}", path.display(), i + 1)));
        }
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Flag value if given, else the file entry, else `None`.
fn merged<V: FromStr>(flag: Option<V>, file: &BTreeMap<String, String>, key: &str) -> Result<Option<V>> {
    if flag.is_some() {
        return Ok(flag);
    }
    file.get(key)
        .map(|s| s.parse::<V>().map_err(|_| usage(format!("config key {key}: cannot parse {s:?}"))))
        .transpose()
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("bad {what} value {t:?}"))))
        .collect()
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts = spec.split(':').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>();
    let bad = || usage(format!("bad range {spec:?}; expected start:stop:step"));
    let parts = parts.map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

fn build_grid(grid: Option<&str>, alphas: &[f64], betas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let (mut a, mut b) = (alphas.to_vec(), betas.to_vec());
    if let Some(spec) = grid {
        let (axis, range) = spec
            .split_once(':')
            .ok_or_else(|| usage(format!("bad grid {spec:?}; expected alpha:start:stop:step")))?;
        match axis.trim() {
            "alpha" => a = parse_range(range)?,
            "beta" => b = parse_range(range)?,
            other => return Err(usage(format!("grid axis must be alpha or beta, got {other:?}"))),
        }
    }
    Ok(a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect())
}

/// Parses `argv` (program name first) into a validated [`RunConfig`].
pub fn parse_config<I, S>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| usage(e.render().to_string()))?;
    let file = match &args.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| usage(format!("{SEED_ENV} is not a u64: {s:?}")))?),
        Err(_) => None,
    };
    let seed = merged(args.seed, &file, "seed")?.or(env_seed).unwrap_or(0);

    let d = BaseModel::default();
    let base = BaseModel {
        a: merged(args.a, &file, "A")?.unwrap_or(d.a),
        c: merged(args.c, &file, "C")?.unwrap_or(d.c),
        sigma_state: merged(args.sigma, &file, "sigma")?.unwrap_or(d.sigma_state),
        r: merged(args.r, &file, "R")?.unwrap_or(d.r),
        sigma0: merged(args.sigma0, &file, "sigma0")?.unwrap_or(d.sigma0),
        mu0: merged(args.mu0, &file, "mu0")?.unwrap_or(d.mu0),
    };
    let regime = match merged::<String>(args.regime, &file, "regime")? {
        Some(s) => s.parse::<Regime>().map_err(|e| usage(e.to_string()))?,
        None => Regime::KnownParams,
    };
    let alpha_s = merged::<String>(args.alpha, &file, "alpha")?;
    let beta_s = merged::<String>(args.beta, &file, "beta")?;
    let grid_s = merged::<String>(args.grid, &file, "grid")?;
    let alphas = parse_list(alpha_s.as_deref().unwrap_or("2"), "alpha")?;
    let betas = parse_list(beta_s.as_deref().unwrap_or("0"), "beta")?;
    let grid = if args.command == Command::Sweep {
        let default_grid = match (&grid_s, &alpha_s, regime) {
            (None, None, Regime::KnownParams) => Some("alpha:0.05:2:0.05"),
            (None, None, _) => Some("alpha:1:2:0.1"),
            _ => None,
        };
        build_grid(grid_s.as_deref().or(default_grid), &alphas, &betas)?
    } else {
        if grid_s.is_some() {
            return Err(usage("--grid only applies to sweep"));
        }
        if alphas.len() != 1 || betas.len() != 1 {
            return Err(usage("--alpha and --beta take a single value outside sweep"));
        }
        vec![(alphas[0], betas[0])]
    };

    let mask = match merged::<String>(args.mask, &file, "mask")? {
        Some(s) => s.parse::<ParamMask>().map_err(|e| usage(e.to_string()))?,
        None => ParamMask::all(),
    };
    let ed = EmConfig::default();
    let em = EmConfig {
        max_iters: merged(args.max_iters, &file, "max-iters")?.unwrap_or(ed.max_iters),
        loglik_tol: merged(args.tol, &file, "tol")?.unwrap_or(ed.loglik_tol),
        param_mask: mask,
    };
    let od = OptimizerConfig::default();
    let optimizer = OptimizerConfig {
        max_evals: merged(args.max_evals, &file, "max-evals")?.unwrap_or(od.max_evals),
        param_mask: mask,
        ..od
    };
    let default_z = if regime == Regime::KnownParams { 500 } else { 200 };
    let allow_from_file = merged::<bool>(None, &file, "allow-exclusions")?.unwrap_or(false);
    let cfg = RunConfig {
        command: args.command,
        out_dir: merged(args.out, &file, "out")?.unwrap_or_else(|| PathBuf::from(".")),
        input: merged(args.input, &file, "input")?,
        seed,
        workers: merged(args.workers, &file, "workers")?.unwrap_or(0),
        alpha: grid[0].0,
        beta: grid[0].1,
        base,
        n_steps: merged(args.n, &file, "N")?.unwrap_or(1000),
        z: merged(args.z, &file, "Z")?.unwrap_or(default_z),
        grid,
        regime,
        em,
        optimizer,
        samples: merged(args.samples, &file, "samples")?.unwrap_or(100_000),
        allow_exclusions: args.allow_exclusions || allow_from_file,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let u = |e: Error| usage(e.to_string());
    if cfg.n_steps < 1 {
        return Err(usage("N must be at least 1"));
    }
    if cfg.z < 1 {
        return Err(usage("Z must be at least 1"));
    }
    if cfg.samples < 2 {
        return Err(usage("samples must be at least 2"));
    }
    for &(a, b) in &cfg.grid {
        cfg.base.noise(a, b).map_err(u)?;
    }
    cfg.em.validate().map_err(u)?;
    if matches!(cfg.command, Command::Filter | Command::Smooth | Command::FitEm | Command::FitQml) {
        if let Some(p) = &cfg.input {
            if !p.is_file() {
                return Err(usage(format!("input {} does not exist", p.display())));
            }
        }
    }
    Ok(())
}

/// Tracks files written so far so a failed run can remove them.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn remove_all(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn trajectory(cfg: &RunConfig) -> Result<Trajectory<f64>> {
    if let Some(p) = &cfg.input {
        return io::read_trajectory(p);
    }
    let noise = cfg.base.noise(cfg.alpha, cfg.beta)?;
    let nominal = cfg.base.nominal(cfg.alpha, cfg.beta)?;
    simulate_trajectory(&nominal, &noise, cfg.n_steps, &mut RngStream::new(cfg.seed, 0))
}

fn mse_note(truth: &[DVector<f64>], est: &[DVector<f64>], label: &str) -> String {
    if truth.len() != est.len() {
        return String::new();
    }
    match state_mse(truth, est) {
        Ok(v) => format!(", {label} error {v}"),
        Err(_) => String::new(),
    }
}

fn dispatch(cfg: &RunConfig, out: &mut Outputs) -> Result<(String, bool)> {
    let nominal = cfg.base.nominal(cfg.alpha, cfg.beta)?;
    match cfg.command {
        Command::Simulate => {
            let t = trajectory(cfg)?;
            let path = out.path("trajectory.csv");
            io::write_trajectory(&path, &t)?;
            Ok((format!("wrote {} ({} rows)", path.display(), t.len()), true))
        }
        Command::Filter => {
            let t = trajectory(cfg)?;
            let f = filter_pass(&nominal, &t.observations)?;
            let path = out.path("filter.csv");
            io::write_filter(&path, &f)?;
            let note = mse_note(&t.states, &f.filtered_means, "filter");
            Ok((format!("wrote {}; loglik {}{note}", path.display(), f.loglik), true))
        }
        Command::Smooth => {
            let t = trajectory(cfg)?;
            let f = filter_pass(&nominal, &t.observations)?;
            let s = smooth_pass(&nominal, &f)?;
            let path = out.path("smoother.csv");
            io::write_smoother(&path, &f, &s)?;
            let note = mse_note(&t.states, &s.smoothed_means, "smoother");
            Ok((format!("wrote {}{note}", path.display()), true))
        }
        Command::FitEm | Command::FitQml => {
            let t = trajectory(cfg)?;
            let fit = if cfg.command == Command::FitEm {
                em_fit(&nominal, &t.observations, &cfg.em)?
            } else {
                qml_fit(&nominal, &t.observations, &cfg.optimizer)?
            };
            let path = out.path("fit.csv");
            io::write_fit(&path, &fit)?;
            Ok((
                format!(
                    "wrote {}; loglik {} after {} iterations (converged: {})",
                    path.display(),
                    fit.final_loglik(),
                    fit.iterations,
                    fit.converged
                ),
                true,
            ))
        }
        Command::Sweep => {
            let table = run_sweep(&cfg.sweep_config())?;
            let path = out.path("error_table.csv");
            io::write_error_table(&path, &table)?;
            let plot = out.path("sweep_plot.dat");
            let xs: Vec<f64> = table
                .rows
                .iter()
                .map(|r| if single_alpha(&cfg.grid) { r.beta } else { r.alpha })
                .collect();
            let f: Vec<f64> = table.rows.iter().map(|r| r.filter_mse_mean).collect();
            let s: Vec<f64> = table.rows.iter().map(|r| r.smoother_mse_mean).collect();
            io::write_series(&plot, &[("filter", &xs, &f), ("smoother", &xs, &s)])?;
            let excluded = table.total_excluded();
            Ok((
                format!(
                    "wrote {} and {}; {} rows, {excluded} replications excluded",
                    path.display(),
                    plot.display(),
                    table.rows.len()
                ),
                excluded == 0 || cfg.allow_exclusions,
            ))
        }
        Command::KdeCompare => {
            let (grid, stable_d, gauss_d) = kde_compare(cfg)?;
            let path = out.path("kde.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["x", "stable_density", "gaussian_density"])?;
            for i in 0..grid.len() {
                w.write_record([io::fmt_f64(grid[i]), io::fmt_f64(stable_d[i]), io::fmt_f64(gauss_d[i])])?;
            }
            w.flush()?;
            let plot = out.path("kde_plot.dat");
            io::write_series(&plot, &[("stable", &grid, &stable_d), ("gaussian", &grid, &gauss_d)])?;
            Ok((format!("wrote {} and {}", path.display(), plot.display()), true))
        }
    }
}

fn single_alpha(grid: &[(f64, f64)]) -> bool {
    grid.len() > 1 && grid.iter().all(|g| g.0 == grid[0].0)
}

/// Kernel estimates of `S_alpha(sigma, beta, 0)` and of the Gaussian
/// `S_2(sigma) = N(0, 2 sigma^2)` the filter substitutes for it.
fn kde_compare(cfg: &RunConfig) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let sigma = cfg.base.sigma_state;
    let stable = StableParams::new(cfg.alpha, cfg.beta, sigma, 0.0)?;
    let gauss = StableParams::new(2.0, 0.0, sigma, 0.0)?;
    let mut r1 = RngStream::new(cfg.seed, 0);
    let mut r2 = RngStream::new(cfg.seed, 1);
    let xs: Vec<f64> = (0..cfg.samples).map(|_| r1.stable(&stable)).collect();
    let gs: Vec<f64> = (0..cfg.samples).map(|_| r2.stable(&gauss)).collect();
    let half = 10.0 * sigma;
    let points = 801;
    let grid: Vec<f64> = (0..points)
        .map(|i| -half + 2.0 * half * i as f64 / (points - 1) as f64)
        .collect();
    // Silverman's rule is driven by the tails for alpha < 2; use the Gaussian
    // sample's bandwidth for both so the curves are comparable.
    let bw = Bandwidth::Fixed(crate::experiments::silverman_bandwidth(&gs)?);
    let finite: Vec<f64> = xs.into_iter().filter(|x| x.is_finite()).collect();
    Ok((grid.clone(), kde(&finite, &grid, bw)?, kde(&gs, &grid, bw)?))
}

/// Executes `cfg`; returns the process exit code (0 ok, 1 runtime failure).
pub fn run(cfg: &RunConfig) -> i32 {
    if let Err(e) = fs::create_dir_all(&cfg.out_dir) {
        eprintln!("stablekf: cannot create {}: {e}", cfg.out_dir.display());
        return 1;
    }
    let mut out = Outputs {
        dir: cfg.out_dir.clone(),
        written: Vec::new(),
    };
    match dispatch(cfg, &mut out) {
        Ok((summary, true)) => {
            println!("{summary}");
            0
        }
        Ok((summary, false)) => {
            println!("{summary}");
            eprintln!("stablekf: some replications were excluded; pass --allow-exclusions to accept");
            1
        }
        Err(e) => {
            out.remove_all();
            eprintln!("stablekf: {e}");
            1
        }
    }
}

/// Entry point used by the binary: parse, run, map errors to exit codes.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match parse_config(argv) {
        Ok(cfg) => run(&cfg),
        Err(Error::Usage(msg)) => {
            eprintln!("{msg}");
            2
        }
        Err(e) => {
            eprintln!("stablekf: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig> {
        parse_config(std::iter::once("stablekf").chain(args.iter().copied()))
    }

    #[test]
    fn sweep_grid_from_flags() {
        let cfg = parse(&["sweep", "--grid", "alpha:0.05:2:0.05", "--beta", "0", "--regime", "known", "--Z", "500", "--seed", "42"]).unwrap();
        assert_eq!(cfg.grid.len(), 40);
        assert_eq!(cfg.grid[0], (0.05, 0.0));
        assert_eq!(cfg.grid[2], (0.15, 0.0));
        assert_eq!(cfg.grid[39], (2.0, 0.0));
        assert_eq!(cfg.z, 500);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.regime, Regime::KnownParams);
    }

    #[test]
    fn defaults_match_experiment_model() {
        let cfg = parse(&["simulate"]).unwrap();
        assert_eq!(cfg.base, BaseModel::default());
        assert_eq!(cfg.n_steps, 1000);
        assert_eq!(cfg.alpha, 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse(&[]), Err(Error::Usage(_))));
        assert!(matches!(parse(&["simulate", "--N", "0"]), Err(Error::Usage(_))));
        assert!(matches!(parse(&["simulate", "--bogus"]), Err(Error::Usage(_))));
        assert!(matches!(parse(&["simulate", "--alpha", "2.5"]), Err(Error::Usage(_))));
        assert!(matches!(parse(&["sweep", "--grid", "gamma:0:1:0.1"]), Err(Error::Usage(_))));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# comment\nalpha = 1.5\nN = 50 # trailing\nseed = 9\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse(&["simulate", "--config", p, "--N", "20"]).unwrap();
        assert_eq!(cfg.alpha, 1.5);
        assert_eq!(cfg.n_steps, 20);
        assert_eq!(cfg.seed, 9);
        fs::write(&path, "nonsense = 1\n").unwrap();
        assert!(parse(&["simulate", "--config", p]).is_err());
    }

    #[test]
    fn ranges_include_the_endpoint() {
        assert_eq!(parse_range("1:2:0.1").unwrap().len(), 11);
        assert_eq!(parse_range("1:2:0.1").unwrap()[3], 1.3);
        assert!(parse_range("2:1:0.1").is_err());
        assert!(parse_range("0:1:0").is_err());
    }
}
