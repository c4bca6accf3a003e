//! Time-invariant linear state-space model and trajectory simulation.

use nalgebra::{DMatrix, DVector};

use crate::error::{dims, domain, Error, Result};
use crate::linalg::{is_symmetric_psd, symmetrized};
use crate::stable_random::{RngStream, StableParams};
use crate::Scalar;

/// `theta = [mu, Sigma, A, C, Q, R]` for
/// `x_{k+1} = A x_k + v_{k+1}`, `y_k = C x_k + w_k`, `x_0 ~ N(mu, Sigma)`,
/// `v ~ N(0, Q)`, `w ~ N(0, R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Scalar> {
    pub mu: DVector<T>,
    pub sigma: DMatrix<T>,
    pub a: DMatrix<T>,
    pub c: DMatrix<T>,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(
        mu: DVector<T>,
        sigma: DMatrix<T>,
        a: DMatrix<T>,
        c: DMatrix<T>,
        q: DMatrix<T>,
        r: DMatrix<T>,
    ) -> Result<Self> {
        let p = Self {
            mu,
            sigma,
            a,
            c,
            q,
            r,
        };
        p.validate()?;
        Ok(p)
    }

    /// One state, one observation.
    pub fn scalar(mu: T, sigma: T, a: T, c: T, q: T, r: T) -> Result<Self> {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self::new(DVector::from_element(1, mu), m(sigma), m(a), m(c), m(q), m(r))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_scalar(&self) -> bool {
        self.state_dim() == 1 && self.obs_dim() == 1
    }

    pub fn check_dims(&self) -> Result<()> {
        let m = self.a.nrows();
        let d = self.c.nrows();
        if self.a.ncols() != m {
            return Err(dims(format!("A is {}x{}, expected square", m, self.a.ncols())));
        }
        if self.c.ncols() != m {
            return Err(dims(format!("C has {} columns, state dim is {m}", self.c.ncols())));
        }
        if self.mu.len() != m {
            return Err(dims(format!("mu has length {}, state dim is {m}", self.mu.len())));
        }
        for (name, mat) in [("Sigma", &self.sigma), ("Q", &self.q)] {
            if mat.shape() != (m, m) {
                return Err(dims(format!("{name} is {:?}, expected {m}x{m}", mat.shape())));
            }
        }
        if self.r.shape() != (d, d) {
            return Err(dims(format!("R is {:?}, expected {d}x{d}", self.r.shape())));
        }
        if m == 0 || d == 0 {
            return Err(dims("empty state or observation dimension"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_dims()?;
        let tol = T::lit(1e-9);
        for (name, mat) in [("Sigma", &self.sigma), ("Q", &self.q), ("R", &self.r)] {
            if !is_symmetric_psd(mat, tol) {
                return Err(domain(format!("{name} is not symmetric positive semi-definite")));
            }
        }
        let finite = self.mu.iter().all(|v| v.is_finite())
            && self.a.iter().all(|v| v.is_finite())
            && self.c.iter().all(|v| v.is_finite());
        if !finite {
            return Err(domain("non-finite model parameter"));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        fn conv<T: Scalar, U: Scalar>(m: &DMatrix<T>) -> DMatrix<U> {
            m.map(|v| U::lit(v.as_f64()))
        }
        ModelParams {
            mu: self.mu.map(|v| U::lit(v.as_f64())),
            sigma: conv(&self.sigma),
            a: conv(&self.a),
            c: conv(&self.c),
            q: conv(&self.q),
            r: conv(&self.r),
        }
    }
}

/// Law of the state innovations `v_k`.
#[derive(Clone, Debug)]
pub enum StateNoise {
    Gaussian(DMatrix<f64>),
    /// Scalar states only.
    Stable(StableParams),
}

/// Law of `x_0`.
#[derive(Clone, Debug)]
pub enum InitialLaw {
    Gaussian { mean: DVector<f64>, cov: DMatrix<f64> },
    /// Scalar states only.
    Stable(StableParams),
}

/// Noise laws used to generate data; the filter may assume something else.
#[derive(Clone, Debug)]
pub struct NoiseSpec {
    pub state_noise: StateNoise,
    pub initial_state: InitialLaw,
    pub obs_noise: DMatrix<f64>,
}

impl NoiseSpec {
    /// The Gaussian laws implied by the model itself.
    pub fn gaussian<T: Scalar>(params: &ModelParams<T>) -> Self {
        let p = params.cast::<f64>();
        Self {
            state_noise: StateNoise::Gaussian(p.q),
            initial_state: InitialLaw::Gaussian {
                mean: p.mu,
                cov: p.sigma,
            },
            obs_noise: p.r,
        }
    }

    /// Scalar model with stable state noise and a stable initial state of the
    /// same exponent.
    pub fn stable(state: StableParams, initial: StableParams, obs_var: f64) -> Result<Self> {
        let spec = Self {
            state_noise: StateNoise::Stable(state),
            initial_state: InitialLaw::Stable(initial),
            obs_noise: DMatrix::from_element(1, 1, obs_var),
        };
        spec.validate(1, 1)?;
        Ok(spec)
    }

    pub fn validate(&self, state_dim: usize, obs_dim: usize) -> Result<()> {
        let stable_state = match &self.state_noise {
            StateNoise::Gaussian(q) => {
                if q.shape() != (state_dim, state_dim) {
                    return Err(dims("state noise covariance does not match A"));
                }
                if !is_symmetric_psd(q, 1e-9) {
                    return Err(domain("state noise covariance is not PSD"));
                }
                None
            }
            StateNoise::Stable(p) => Some(p.alpha()),
        };
        let stable_init = match &self.initial_state {
            InitialLaw::Gaussian { mean, cov } => {
                if mean.len() != state_dim || cov.shape() != (state_dim, state_dim) {
                    return Err(dims("initial law does not match the state dimension"));
                }
                if !is_symmetric_psd(cov, 1e-9) {
                    return Err(domain("initial covariance is not PSD"));
                }
                None
            }
            InitialLaw::Stable(p) => Some(p.alpha()),
        };
        if (stable_state.is_some() || stable_init.is_some()) && state_dim != 1 {
            return Err(Error::Unsupported(
                "stable noise is only supported for scalar states".into(),
            ));
        }
        if let Some(alpha) = stable_state {
            match stable_init {
                Some(a0) if a0 == alpha => {}
                _ => {
                    return Err(domain(
                        "stable state noise requires a stable initial state with the same alpha",
                    ))
                }
            }
        }
        if self.obs_noise.shape() != (obs_dim, obs_dim) {
            return Err(dims("observation noise covariance does not match C"));
        }
        if !is_symmetric_psd(&self.obs_noise, 1e-9) {
            return Err(domain("observation noise covariance is not PSD"));
        }
        Ok(())
    }
}

/// Jointly simulated states `x_0..x_N` and observations `y_0..y_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub states: Vec<DVector<T>>,
    pub observations: Vec<DVector<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.states
            .iter()
            .chain(self.observations.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Matrix square root `L` with `L L* = M` for a symmetric PSD `M`.
fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].max(0.0).sqrt());
    }
    let eig = symmetrized(m.clone()).symmetric_eigen();
    let mut f = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

fn gaussian_vector(rng: &mut RngStream, factor: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.standard_normal());
    factor * z
}

/// Simulates `n_steps + 1` states and observations.
///
/// Draw order per step: the state noise first, then the observation noise,
/// both from the single stream `rng`.
pub fn simulate_trajectory<T: Scalar>(
    params: &ModelParams<T>,
    noise: &NoiseSpec,
    n_steps: usize,
    rng: &mut RngStream,
) -> Result<Trajectory<T>> {
    params.check_dims()?;
    let m = params.state_dim();
    let d = params.obs_dim();
    noise.validate(m, d)?;
    let p = params.cast::<f64>();
    let obs_factor = psd_factor(&noise.obs_noise);

    let mut x = match &noise.initial_state {
        InitialLaw::Gaussian { mean, cov } => mean + gaussian_vector(rng, &psd_factor(cov)),
        InitialLaw::Stable(sp) => DVector::from_element(1, rng.stable(sp)),
    };
    let state_factor = match &noise.state_noise {
        StateNoise::Gaussian(q) => Some(psd_factor(q)),
        StateNoise::Stable(_) => None,
    };

    let mut states = Vec::with_capacity(n_steps + 1);
    let mut observations = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        if k > 0 {
            let v = match (&noise.state_noise, &state_factor) {
                (StateNoise::Stable(sp), _) => DVector::from_element(1, rng.stable(sp)),
                (_, Some(f)) => gaussian_vector(rng, f),
                _ => unreachable!(),
            };
            x = &p.a * &x + v;
        }
        let y = &p.c * &x + gaussian_vector(rng, &obs_factor);
        states.push(x.map(T::lit));
        observations.push(y.map(T::lit));
    }
    Ok(Trajectory {
        states,
        observations,
    })
}

/// The Gaussian model a filter assumes when the true state noise is stable:
/// same scale, variance `2 sigma^2`.
pub fn nominal_gaussian_params<T: Scalar>(
    stable_noise: &NoiseSpec,
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<ModelParams<T>> {
    if a.shape() != (1, 1) || c.shape() != (1, 1) || r.shape() != (1, 1) {
        return Err(Error::Unsupported(
            "nominal Gaussian conversion is defined for scalar models only".into(),
        ));
    }
    let q = match &stable_noise.state_noise {
        StateNoise::Stable(p) => 2.0 * p.sigma() * p.sigma(),
        StateNoise::Gaussian(_) => return Err(domain("state noise is not stable")),
    };
    let (mu0, sigma0) = match &stable_noise.initial_state {
        InitialLaw::Stable(p) => (p.mu(), 2.0 * p.sigma() * p.sigma()),
        InitialLaw::Gaussian { .. } => return Err(domain("initial state law is not stable")),
    };
    ModelParams::scalar(
        T::lit(mu0),
        T::lit(sigma0),
        a[(0, 0)],
        c[(0, 0)],
        T::lit(q),
        r[(0, 0)],
    )
}
