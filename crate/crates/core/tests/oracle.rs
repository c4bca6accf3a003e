mod common;

use nalgebra::{DMatrix, DVector};
use stablekf::{filter_pass, innovations_loglik, smooth_pass, Error, ModelParams};

#[test]
fn filter_smoother_and_loglik_match_batch_conditioning() {
    for (i, inst) in common::oracle_instances(30, 7).iter().enumerate() {
        let d = common::deviations(inst);
        assert!(d.filter < 1e-9, "instance {i}: filter {:e}", d.filter);
        assert!(d.smoother < 1e-9, "instance {i}: smoother {:e}", d.smoother);
        assert!(d.lag_one < 1e-9, "instance {i}: lag-one {:e}", d.lag_one);
        assert!(d.loglik < 1e-9, "instance {i}: loglik {:e}", d.loglik);
    }
}

#[test]
fn filter_loglik_equals_innovations_loglik() {
    for inst in common::oracle_instances(20, 8) {
        let f = filter_pass(&inst.params, &inst.y).unwrap();
        assert_eq!(f.loglik, innovations_loglik(&inst.params, &inst.y).unwrap());
    }
}

#[test]
fn single_precision_tracks_double() {
    for inst in common::oracle_instances(10, 9) {
        let p32: ModelParams<f32> = inst.params.cast();
        let y32: Vec<DVector<f32>> = inst.y.iter().map(|v| v.map(|x| x as f32)).collect();
        let f64r = filter_pass(&inst.params, &inst.y).unwrap();
        let f32r = filter_pass(&p32, &y32).unwrap();
        for (a, b) in f64r.filtered_means.iter().zip(&f32r.filtered_means) {
            assert!((a - b.map(|x| x as f64)).amax() < 1e-3);
        }
        let ll = innovations_loglik(&p32, &y32).unwrap() as f64;
        assert!((ll - f64r.loglik).abs() < 1e-3 * f64r.loglik.abs().max(1.0));
    }
}

#[test]
fn deterministic_state_is_recovered_exactly() {
    // Q = 0, A = I: the smoother spreads the full-sample estimate to every k.
    let p = ModelParams::<f64>::scalar(0.0, 10.0, 1.0, 1.0, 0.0, 1.0).unwrap();
    let y: Vec<_> = [1.0, 2.0, 0.5, 1.5].iter().map(|&v| DVector::from_element(1, v)).collect();
    let f = filter_pass(&p, &y).unwrap();
    let s = smooth_pass(&p, &f).unwrap();
    let last = s.smoothed_means[3][0];
    for k in 0..4 {
        assert!((s.smoothed_means[k][0] - last).abs() < 1e-12);
    }
}

#[test]
fn singular_innovation_covariance_is_reported() {
    // C = 0 and R = 0 make every innovation covariance zero.
    let p = ModelParams::<f64>::new(
        DVector::zeros(1),
        DMatrix::identity(1, 1),
        DMatrix::identity(1, 1),
        DMatrix::zeros(1, 1),
        DMatrix::identity(1, 1),
        DMatrix::zeros(1, 1),
    )
    .unwrap();
    let y = vec![DVector::from_element(1, 0.0); 3];
    let f = filter_pass(&p, &y).unwrap();
    assert!(f.used_pseudo_inverse);
    assert!(f.loglik.is_nan());
    assert!(matches!(innovations_loglik(&p, &y), Err(Error::Numerical(_))));
}

#[test]
fn rank_deficient_observations_use_pseudo_inverse() {
    // Two identical noiseless sensors: H is singular, but the filter still
    // conditions correctly on the single independent reading.
    let p = ModelParams::<f64>::new(
        DVector::zeros(1),
        DMatrix::identity(1, 1) * 4.0,
        DMatrix::identity(1, 1),
        DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
        DMatrix::identity(1, 1),
        DMatrix::zeros(2, 2),
    )
    .unwrap();
    let y = vec![DVector::from_column_slice(&[2.0, 2.0])];
    let f = filter_pass(&p, &y).unwrap();
    assert!(f.used_pseudo_inverse);
    assert!((f.filtered_means[0][0] - 2.0).abs() < 1e-10);
    assert!(f.filtered_covs[0][(0, 0)].abs() < 1e-10);
}
