//! Test-only reference computations, independent of the library recursions.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stablekf::ModelParams;

/// Joint Gaussian law of `(x_0..x_N, y_0..y_N)` built from the model's
/// unconditional moments.
pub struct Joint {
    pub m: usize,
    pub d: usize,
    pub len: usize,
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
    pub cov_xx: DMatrix<f64>,
    pub cov_xy: DMatrix<f64>,
    pub cov_yy: DMatrix<f64>,
}

impl Joint {
    pub fn new(p: &ModelParams<f64>, len: usize) -> Self {
        let (m, d) = (p.a.nrows(), p.c.nrows());
        // P_kk by the Lyapunov recursion, P_ij = A^{i-j} P_jj for i >= j.
        let mut diag = vec![p.sigma.clone()];
        let mut means = vec![p.mu.clone()];
        for k in 1..len {
            diag.push(&p.a * &diag[k - 1] * p.a.transpose() + &p.q);
            means.push(&p.a * &means[k - 1]);
        }
        let mut cov_xx = DMatrix::zeros(m * len, m * len);
        for j in 0..len {
            let mut block = diag[j].clone();
            for i in j..len {
                cov_xx.view_mut((i * m, j * m), (m, m)).copy_from(&block);
                cov_xx.view_mut((j * m, i * m), (m, m)).copy_from(&block.transpose());
                block = &p.a * block;
            }
        }
        let mut c_big = DMatrix::zeros(d * len, m * len);
        let mut r_big = DMatrix::zeros(d * len, d * len);
        for k in 0..len {
            c_big.view_mut((k * d, k * m), (d, m)).copy_from(&p.c);
            r_big.view_mut((k * d, k * d), (d, d)).copy_from(&p.r);
        }
        let mean_x = DVector::from_iterator(m * len, means.iter().flat_map(|v| v.iter().copied()));
        let mean_y = &c_big * &mean_x;
        let cov_xy = &cov_xx * c_big.transpose();
        let cov_yy = &c_big * &cov_xx * c_big.transpose() + r_big;
        Self {
            m,
            d,
            len,
            mean_x,
            mean_y,
            cov_xx,
            cov_xy,
            cov_yy,
        }
    }

    /// Mean and covariance of all states given `y_0..y_{upto}`.
    pub fn condition(&self, y: &[DVector<f64>], upto: usize) -> (DVector<f64>, DMatrix<f64>) {
        let n = (upto + 1) * self.d;
        let yv = DVector::from_iterator(n, y[..=upto].iter().flat_map(|v| v.iter().copied()));
        let syy = self.cov_yy.view((0, 0), (n, n)).into_owned();
        let sxy = self.cov_xy.columns(0, n).into_owned();
        let lu = syy.lu();
        let resid = yv - self.mean_y.rows(0, n);
        let mean = &self.mean_x + &sxy * lu.solve(&resid).expect("oracle: singular Syy");
        let cov = &self.cov_xx - &sxy * lu.solve(&sxy.transpose()).expect("oracle: singular Syy");
        (mean, cov)
    }

    pub fn state_mean(&self, mean: &DVector<f64>, k: usize) -> DVector<f64> {
        mean.rows(k * self.m, self.m).into_owned()
    }

    pub fn state_block(&self, cov: &DMatrix<f64>, i: usize, j: usize) -> DMatrix<f64> {
        cov.view((i * self.m, j * self.m), (self.m, self.m)).into_owned()
    }

    /// `ln N(y_0..y_N; E y, Cov y)`.
    pub fn log_density(&self, y: &[DVector<f64>]) -> f64 {
        let n = self.len * self.d;
        let yv = DVector::from_iterator(n, y.iter().flat_map(|v| v.iter().copied()));
        let resid = yv - &self.mean_y;
        let lu = self.cov_yy.clone().lu();
        let quad = resid.dot(&lu.solve(&resid).unwrap());
        let log_det = lu.determinant().ln();
        -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| uniform(rng, -scale, scale))
}

/// `B B* + floor I`, well away from singular.
fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let b = random_matrix(rng, n, n, 1.0);
    &b * b.transpose() + DMatrix::identity(n, n) * floor
}

pub fn random_model(rng: &mut ChaCha8Rng, m: usize, d: usize) -> ModelParams<f64> {
    ModelParams::new(
        DVector::from_fn(m, |_, _| uniform(rng, -2.0, 2.0)),
        random_spd(rng, m, 0.5),
        random_matrix(rng, m, m, 0.9 / m as f64),
        random_matrix(rng, d, m, 1.0),
        random_spd(rng, m, 0.1),
        random_spd(rng, d, 0.2),
    )
    .unwrap()
}

/// One oracle instance: model, observations `y_0..y_N`.
pub struct Instance {
    pub params: ModelParams<f64>,
    pub y: Vec<DVector<f64>>,
}

/// `count` seeded instances with `m <= 3`, `d <= 2`, `N <= 8`.
pub fn oracle_instances(count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let m = rng.random_range(1..=3);
            let d = rng.random_range(1..=2);
            let n = rng.random_range(0..=8);
            let params = random_model(&mut rng, m, d);
            let y = (0..=n)
                .map(|_| DVector::from_fn(d, |_, _| uniform(&mut rng, -3.0, 3.0)))
                .collect();
            Instance { params, y }
        })
        .collect()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}

pub fn max_abs_diff_v(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    (a - b).amax()
}

/// Worst entrywise deviation of filter, smoother, lag-one and likelihood
/// from the oracle on one instance.
pub struct Deviations {
    pub filter: f64,
    pub smoother: f64,
    pub lag_one: f64,
    pub loglik: f64,
}

pub fn deviations(inst: &Instance) -> Deviations {
    let p = &inst.params;
    let y = &inst.y;
    let joint = Joint::new(p, y.len());
    let f = stablekf::filter_pass(p, y).unwrap();
    let s = stablekf::smooth_pass(p, &f).unwrap();
    let n = y.len() - 1;
    let mut dev = Deviations {
        filter: 0.0,
        smoother: 0.0,
        lag_one: 0.0,
        loglik: 0.0,
    };
    for k in 0..=n {
        let (mean, cov) = joint.condition(y, k);
        dev.filter = dev
            .filter
            .max(max_abs_diff_v(&f.filtered_means[k], &joint.state_mean(&mean, k)))
            .max(max_abs_diff(&f.filtered_covs[k], &joint.state_block(&cov, k, k)));
    }
    let (mean, cov) = joint.condition(y, n);
    for k in 0..=n {
        dev.smoother = dev
            .smoother
            .max(max_abs_diff_v(&s.smoothed_means[k], &joint.state_mean(&mean, k)))
            .max(max_abs_diff(&s.smoothed_covs[k], &joint.state_block(&cov, k, k)));
        if k > 0 {
            dev.lag_one = dev
                .lag_one
                .max(max_abs_diff(&s.lag_one_covs[k - 1], &joint.state_block(&cov, k, k - 1)));
        }
    }
    let ll = stablekf::innovations_loglik(p, y).unwrap();
    dev.loglik = (ll - joint.log_density(y)).abs();
    dev
}

/// Sample standard error of a mean.
pub fn std_error(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

pub fn simulate_gaussian(p: &ModelParams<f64>, n: usize, seed: u64) -> Vec<DVector<f64>> {
    let noise = stablekf::NoiseSpec::gaussian(p);
    stablekf::simulate_trajectory(p, &noise, n, &mut stablekf::RngStream::new(seed, 0))
        .unwrap()
        .observations
}

/// Random scalar (`m = d = 1`) and 2-state models, alternating.
pub fn em_models(count: usize, seed: u64) -> Vec<(ModelParams<f64>, ModelParams<f64>, Vec<DVector<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let (m, d) = if i % 2 == 0 { (1, 1) } else { (2, 1 + (i / 2) % 2) };
            let truth = random_model(&mut rng, m, d);
            let init = random_model(&mut rng, m, d);
            let y = simulate_gaussian(&truth, 100, seed * 1000 + i as u64);
            (truth, init, y)
        })
        .collect()
}

/// Worst relative drop `(ll_k - ll_{k+1}) / |ll_k|` over `iters` EM updates
/// (negative when the trace is strictly increasing).
pub fn worst_em_drop(init: &ModelParams<f64>, y: &[DVector<f64>], iters: usize) -> f64 {
    let mut p = init.clone();
    let mut ll = stablekf::innovations_loglik(&p, y).unwrap();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..iters {
        p = stablekf::em_update(&p, y, stablekf::ParamMask::all()).unwrap().params;
        let next = stablekf::innovations_loglik(&p, y).unwrap();
        worst = worst.max((ll - next) / ll.abs());
        ll = next;
    }
    worst
}

fn perturb_block(rng: &mut ChaCha8Rng, p: &ModelParams<f64>, block: stablekf::Param) -> ModelParams<f64> {
    use stablekf::Param;
    let mut q = p.clone();
    let eps = uniform(rng, 1e-3, 0.3);
    let shift = |rng: &mut ChaCha8Rng, m: &mut DMatrix<f64>| {
        for v in m.iter_mut() {
            *v += eps * uniform(rng, -1.0, 1.0) * (1.0 + v.abs());
        }
    };
    // (I + eps E) M (I + eps E)* stays positive definite.
    let congruence = |rng: &mut ChaCha8Rng, m: &mut DMatrix<f64>| {
        let n = m.nrows();
        let t = DMatrix::identity(n, n) + random_matrix(rng, n, n, eps);
        let out = &t * &*m * t.transpose();
        *m = (&out + out.transpose()) * 0.5;
    };
    match block {
        Param::Mu => {
            for v in q.mu.iter_mut() {
                *v += eps * uniform(rng, -1.0, 1.0) * (1.0 + v.abs());
            }
        }
        Param::A => shift(rng, &mut q.a),
        Param::C => shift(rng, &mut q.c),
        Param::Sigma => congruence(rng, &mut q.sigma),
        Param::Q => congruence(rng, &mut q.q),
        Param::R => congruence(rng, &mut q.r),
    }
    q
}

/// For each block, counts perturbations of the single-block update that
/// score at least as high under the E-step objective. Returns
/// `(failures, trials)`.
pub fn mstep_failures(theta_prime: &ModelParams<f64>, y: &[DVector<f64>], perturbations: usize, seed: u64) -> (usize, usize) {
    use stablekf::{em_update, expected_complete_loglik, Param, ParamMask};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut trials = 0;
    for block in Param::ALL {
        let upd = em_update(theta_prime, y, ParamMask::of(&[block])).unwrap().params;
        let best = expected_complete_loglik(&upd, theta_prime, y).unwrap();
        for _ in 0..perturbations {
            let pert = perturb_block(&mut rng, &upd, block);
            let score = expected_complete_loglik(&pert, theta_prime, y).unwrap();
            trials += 1;
            if !(score < best) {
                failures += 1;
            }
        }
    }
    (failures, trials)
}
