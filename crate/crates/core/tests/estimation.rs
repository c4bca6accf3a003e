mod common;

use stablekf::{em_fit, innovations_loglik, qml_fit, EmConfig, ModelParams, OptimizerConfig, Param, ParamMask};

#[test]
fn em_trace_is_monotone() {
    for (truth, init, y) in common::em_models(8, 3) {
        let drop = common::worst_em_drop(&init, &y, 30);
        assert!(drop <= 1e-8, "m = {}: drop {drop:e}", truth.state_dim());
    }
}

#[test]
fn m_step_blocks_are_conditional_maximisers() {
    for (i, (_, theta, y)) in common::em_models(4, 4).iter().enumerate() {
        let (fails, trials) = common::mstep_failures(theta, &y[..41], 40, i as u64);
        assert_eq!(fails, 0, "instance {i}: {fails}/{trials}");
    }
}

#[test]
fn em_fit_reports_its_trace() {
    let (_, init, y) = common::em_models(1, 5).remove(0);
    let cfg = EmConfig {
        max_iters: 25,
        ..EmConfig::default()
    };
    let fit = em_fit(&init, &y, &cfg).unwrap();
    assert_eq!(fit.loglik_trace.len(), fit.iterations + 1);
    assert_eq!(fit.final_loglik(), innovations_loglik(&fit.params, &y).unwrap());
    assert!(fit.final_loglik() >= fit.loglik_trace[0]);
}

fn experiment_truth() -> ModelParams<f64> {
    ModelParams::scalar(100.0, 5000.0, 1.0, 1.2, 800.0, 150.0).unwrap()
}

#[test]
fn qml_recovers_observation_variance() {
    let truth = experiment_truth();
    let y = common::simulate_gaussian(&truth, 2000, 21);
    let mut init = truth.clone();
    init.r[(0, 0)] = 40.0;
    let cfg = OptimizerConfig {
        param_mask: ParamMask::of(&[Param::R]),
        ..OptimizerConfig::default()
    };
    let fit = qml_fit(&init, &y, &cfg).unwrap();
    let r = fit.params.r[(0, 0)];
    assert!((r - 150.0).abs() < 30.0, "R = {r}");
    assert!(fit.final_loglik() > fit.loglik_trace[0]);
    assert_eq!(fit.params.q, truth.q);
}

#[test]
fn qml_and_em_agree_on_the_same_free_blocks() {
    let truth = experiment_truth();
    let y = common::simulate_gaussian(&truth, 1000, 22);
    let mut init = truth.clone();
    init.q[(0, 0)] = 300.0;
    init.r[(0, 0)] = 400.0;
    let mask = ParamMask::of(&[Param::Q, Param::R]);
    let em = em_fit(&init, &y, &EmConfig { max_iters: 5000, loglik_tol: 1e-10, param_mask: mask }).unwrap();
    let qml = qml_fit(&init, &y, &OptimizerConfig { param_mask: mask, ..OptimizerConfig::default() }).unwrap();
    for (name, a, b) in [
        ("Q", em.params.q[(0, 0)], qml.params.q[(0, 0)]),
        ("R", em.params.r[(0, 0)], qml.params.r[(0, 0)]),
    ] {
        assert!((a - b).abs() < 0.01 * a.abs(), "{name}: EM {a}, QML {b}");
    }
    assert!((em.final_loglik() - qml.final_loglik()).abs() < 1e-4);
}

#[test]
fn qml_respects_block_structure_for_vector_models() {
    let (truth, init, y) = common::em_models(2, 6).remove(1);
    assert_eq!(truth.state_dim(), 2);
    let cfg = OptimizerConfig {
        max_evals: 600,
        param_mask: ParamMask::of(&[Param::Q, Param::A]),
        ..OptimizerConfig::default()
    };
    let fit = qml_fit(&init, &y, &cfg).unwrap();
    assert!(fit.params.validate().is_ok());
    assert_eq!(fit.params.c, init.c);
    assert_eq!(fit.params.r, init.r);
    assert!(fit.final_loglik() >= fit.loglik_trace[0]);
}
