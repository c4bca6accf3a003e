//! Derivative-free Nelder–Mead simplex minimiser with the dimension-adaptive
//! coefficients of Gao & Han.

#[derive(Clone, Debug)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Converged when every vertex is within `x_tol` (max-norm) of the best one…
    pub x_tol: f64,
    /// …and every vertex value within `f_tol` of the best value.
    pub f_tol: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            x_tol: 1e-6,
            f_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best value after each iteration, starting with `f(x0)`.
    pub trace: Vec<f64>,
}

/// Default initial steps: 5% of each nonzero coordinate, 0.00025 otherwise.
pub fn default_steps(x0: &[f64]) -> Vec<f64> {
    x0.iter()
        .map(|&x| if x != 0.0 { 0.05 * x } else { 0.00025 })
        .collect()
}

/// Minimises `f` from `x0`. Non-finite values are treated as `+inf`.
pub fn minimize<F>(mut f: F, x0: &[f64], steps: &[f64], cfg: &NelderMeadConfig) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let f0 = eval(x0, &mut evals);
    if n == 0 {
        return NelderMeadResult {
            x: Vec::new(),
            fx: f0,
            evals,
            iterations: 0,
            converged: true,
            trace: vec![f0],
        };
    }
    let nf = n as f64;
    let (alpha, gamma, rho, shrink) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let shrink = if n == 1 { 0.5 } else { shrink };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);

    let mut trace = vec![simplex[0].1];
    let mut iterations = 0;
    let mut converged = false;
    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect()
    };
    loop {
        let best = &simplex[0];
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let f_spread = simplex[1..]
            .iter()
            .map(|(_, v)| (v - best.1).abs())
            .fold(0.0, f64::max);
        if x_spread <= cfg.x_tol && f_spread <= cfg.f_tol {
            converged = true;
            break;
        }
        if evals >= cfg.max_evals {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let worst = simplex[n].clone();
        let xr = point(&centroid, &worst.0, -alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = point(&centroid, &worst.0, -alpha * gamma);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let outside = fr < worst.1;
            let xc = if outside {
                point(&centroid, &worst.0, -alpha * rho)
            } else {
                point(&centroid, &worst.0, rho)
            };
            let fc = eval(&xc, &mut evals);
            let accept = if outside { fc <= fr } else { fc < worst.1 };
            if accept {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x = point(&x_best, &v.0, shrink);
                    let fx = eval(&x, &mut evals);
                    *v = (x, fx);
                }
            }
        }
        order(&mut simplex);
        trace.push(simplex[0].1);
    }
    let (x, fx) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        fx,
        evals,
        iterations,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: &[f64]) -> f64 {
        (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + 0.5 * (x[2] - 3.0).powi(2)
    }

    #[test]
    fn finds_quadratic_minimum() {
        let x0 = [0.0, 0.0, 0.0];
        let r = minimize(quad, &x0, &[0.5, 0.5, 0.5], &NelderMeadConfig::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] + 2.0).abs() < 1e-5 && (r.x[2] - 3.0).abs() < 1e-5);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn start_at_optimum_stays_there() {
        let x0 = [1.0, -2.0, 3.0];
        let r = minimize(quad, &x0, &default_steps(&x0), &NelderMeadConfig::default());
        assert!(r.converged);
        assert_eq!(r.x, x0.to_vec());
        assert_eq!(r.fx, 0.0);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let cfg = NelderMeadConfig {
            max_evals: 10_000,
            x_tol: 1e-10,
            f_tol: 1e-14,
        };
        let r = minimize(f, &[-1.2, 1.0], &[0.1, 0.1], &cfg);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn eval_budget_is_respected() {
        let cfg = NelderMeadConfig {
            max_evals: 20,
            x_tol: 0.0,
            f_tol: 0.0,
        };
        let r = minimize(quad, &[10.0, 10.0, 10.0], &[1.0, 1.0, 1.0], &cfg);
        assert!(!r.converged);
        assert!(r.evals <= 20 + 4);
    }

    #[test]
    fn non_finite_values_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let r = minimize(f, &[2.0], &[1.0], &NelderMeadConfig::default());
        assert!((r.x[0] - 0.5).abs() < 1e-5);
    }
}
