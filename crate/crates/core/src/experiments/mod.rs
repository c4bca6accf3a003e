//! Monte Carlo study of filter degradation under alpha-stable state noise.

mod kde;
mod sweep;

pub use kde::{kde, silverman_bandwidth, Bandwidth};
pub use sweep::{
    run_replication, run_sweep, BaseModel, ErrorRow, ErrorTable, Regime, Replication, SweepConfig,
};

use nalgebra::DVector;

use crate::error::{dims, domain, Result};
use crate::Scalar;

/// Mean over `k = 0..N` of `|x_k - x̂_k|^2` for one replication.
pub fn state_mse<T: Scalar>(truth: &[DVector<T>], estimates: &[DVector<T>]) -> Result<T> {
    if truth.len() != estimates.len() {
        return Err(dims(format!(
            "{} true states but {} estimates",
            truth.len(),
            estimates.len()
        )));
    }
    if truth.is_empty() {
        return Err(domain("state_mse of an empty trajectory"));
    }
    let mut total = T::zero();
    for (x, e) in truth.iter().zip(estimates) {
        if x.len() != e.len() {
            return Err(dims("state and estimate have different lengths"));
        }
        total += (x - e).norm_squared();
    }
    Ok(total / T::lit(truth.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[f64]) -> Vec<DVector<f64>> {
        v.iter().map(|&x| DVector::from_element(1, x)).collect()
    }

    #[test]
    fn mse_identities() {
        let t = s(&[0.0, 1.0, 5.0, -3.0]);
        assert_eq!(state_mse(&t, &t).unwrap(), 0.0);
        let shifted = s(&[2.5, 3.5, 7.5, -0.5]);
        assert!((state_mse(&t, &shifted).unwrap() - 6.25).abs() < 1e-12);
        assert_eq!(state_mse(&s(&[0.0, 1.0]), &s(&[1.0, 1.0])).unwrap(), 0.5);
        assert!(state_mse(&t, &s(&[0.0])).is_err());
    }
}
