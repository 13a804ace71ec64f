mod common;

use common::{col, rot2};
use std::f64::consts::FRAC_PI_4;
use symmpca::dynamics::{initial_weights, run_trial, run_trials, Trial, PCA_COSINE_THRESHOLD};
use symmpca::model::CovarianceOptions;
use symmpca::*;

fn identity_model(eigenvalues: &[f64]) -> CovarianceModel {
    build_covariance_with(
        eigenvalues,
        0,
        CovarianceOptions {
            allow_ties: false,
            identity_basis: true,
        },
    )
    .unwrap()
}

fn wm(m: DMatrix<f64>) -> WeightMatrix {
    WeightMatrix::new(m).unwrap()
}

#[test]
fn oja_single_unit_converges_to_principal_eigenvector() {
    let model = identity_model(&[2.0, 1.0]);
    let w0 = wm(col(&[0.9, 0.3]));
    let cfg = IntegrationConfig {
        step: 0.05,
        ..Default::default()
    };
    let out = integrate(RuleId::OjaSubspace, &model, &w0, &GainSpec::identity(1), &cfg).unwrap();
    assert!(out.converged);
    assert!(out.final_rhs_norm < 1e-8);
    let w = out.final_w.as_matrix();
    assert!((w[(0, 0)].abs() - 1.0).abs() < 1e-8 && w[(1, 0)].abs() < 1e-8);
}

#[test]
fn n2s_reaches_eigenvectors_in_two_dimensions() {
    let model = identity_model(&[2.0, 1.0]);
    for seed in 0..5 {
        let w0 = initial_weights(2, 2, seed).unwrap();
        let out = integrate(RuleId::N2S, &model, &w0, &GainSpec::identity(2), &IntegrationConfig::default()).unwrap();
        assert!(out.converged);
        let a = eigvec_alignment(out.final_w.as_matrix(), &model, PCA_COSINE_THRESHOLD);
        assert!(a.pca && a.min_cosine > 0.999, "seed {seed}: {a:?}");
    }
}

#[test]
fn eigenbasis_start_takes_no_steps() {
    let model = build_covariance(&[4.0, 3.0, 2.0, 1.0], 3).unwrap();
    let w0 = wm(model.principal_frame(2));
    let gains = GainSpec::linear(2);
    for rule in RuleId::ALL.into_iter().filter(|r| *r != RuleId::OjaWeighted) {
        let out = integrate(rule, &model, &w0, &gains, &IntegrationConfig::default()).unwrap();
        assert_eq!(out.steps, 0, "{rule}");
        assert!(out.converged);
        assert_eq!(out.trajectory.len(), 1);
    }
}

#[test]
fn subspace_error_examples() {
    let model = identity_model(&[3.0, 2.0, 1.0]);
    let mut w = DMatrix::zeros(3, 2);
    w.view_mut((0, 0), (2, 2)).copy_from(&rot2(0.7));
    assert!(subspace_error(&w, &model, 2).unwrap() < 1e-14);
    let w = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    assert!((subspace_error(&w, &model, 2).unwrap() - 2f64.sqrt()).abs() < 1e-14);
    let model = build_covariance(&[3.0, 2.0, 1.0], 8).unwrap();
    assert!(subspace_error(&model.principal_frame(2), &model, 2).unwrap() < 1e-14);
    assert!(subspace_error(&DMatrix::zeros(3, 2), &model, 2).is_err());
}

#[test]
fn alignment_examples() {
    let model = identity_model(&[2.0, 1.0]);
    let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let a = eigvec_alignment(&w, &model, PCA_COSINE_THRESHOLD);
    assert_eq!(a.assignment(), vec![1, 0]);
    assert!(a.pca && (a.min_cosine - 1.0).abs() < 1e-15);

    let a = eigvec_alignment(&rot2(FRAC_PI_4), &model, PCA_COSINE_THRESHOLD);
    assert!(!a.pca);
    for m in &a.matches {
        assert!((m.cosine - 0.5f64.sqrt()).abs() < 1e-12);
    }
    assert!(subspace_error(&rot2(FRAC_PI_4), &model, 2).unwrap() < 1e-14);

    let model = build_covariance(&[4.0, 3.0, 2.0, 1.0], 6).unwrap();
    let a = eigvec_alignment(&model.principal_frame(3), &model, PCA_COSINE_THRESHOLD);
    assert_eq!(a.assignment(), vec![0, 1, 2]);
    assert!(a.matches.iter().all(|m| (m.cosine - 1.0).abs() < 1e-12));
}

#[test]
fn approx_projection_keeps_stiefel_rules_near_the_manifold() {
    let model = build_covariance(&[1.0, 0.75, 0.5, 0.25], 10).unwrap();
    let cfg = IntegrationConfig {
        step: 0.01,
        max_steps: 100_000,
        projection: ProjectionMode::Approx,
        stop_tolerance: 0.0,
        sample_every: 1000,
    };
    for rule in [RuleId::TSC, RuleId::NSC] {
        let w0 = initial_weights(4, 2, 5).unwrap();
        let out = integrate(rule, &model, &w0, &GainSpec::linear(2), &cfg).unwrap();
        assert_eq!(out.steps, 100_000);
        let worst = out.trajectory.iter().map(|s| s.ortho_defect).fold(0.0, f64::max);
        assert!(worst < 1e-4, "{rule}: {worst:e}");
    }
}

#[test]
fn stiefel_rules_ascend_their_objective() {
    let model = build_covariance(&[5.0, 4.0, 3.0, 2.0, 1.0], 11).unwrap();
    let cfg = IntegrationConfig {
        step: 0.01,
        max_steps: 5_000,
        projection: ProjectionMode::Exact,
        sample_every: 1,
        ..Default::default()
    };
    for rule in [RuleId::TSC, RuleId::NSC] {
        let w0 = initial_weights(5, 3, 12).unwrap();
        let out = integrate(rule, &model, &w0, &GainSpec::linear(3), &cfg).unwrap();
        for pair in out.trajectory.windows(2) {
            assert!(pair[1].objective >= pair[0].objective - 1e-12, "{rule} at step {}", pair[1].step);
        }
    }
}

#[test]
fn trajectory_sampling() {
    let model = identity_model(&[3.0, 2.0, 1.0]);
    let cfg = IntegrationConfig {
        max_steps: 250,
        sample_every: 100,
        stop_tolerance: 0.0,
        ..Default::default()
    };
    let w0 = initial_weights(3, 2, 1).unwrap();
    let out = integrate(RuleId::N2S, &model, &w0, &GainSpec::identity(2), &cfg).unwrap();
    let steps: Vec<usize> = out.trajectory.iter().map(|s| s.step).collect();
    assert_eq!(steps, vec![0, 100, 200, 250]);
    assert!(!out.converged);
    let last = out.trajectory.last().unwrap();
    assert_eq!(last.rhs_norm, out.final_rhs_norm);
}

#[test]
fn divergence_guard() {
    let model = identity_model(&[2.0, 1.0]);
    let w0 = wm(col(&[100.0, 50.0]));
    let cfg = IntegrationConfig {
        step: 0.1,
        ..Default::default()
    };
    match integrate(RuleId::N2S, &model, &w0, &GainSpec::identity(1), &cfg) {
        Err(Error::Diverged { norm, .. }) => assert!(!(norm <= 1e6)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn config_validation() {
    let model = identity_model(&[2.0, 1.0]);
    let w0 = wm(col(&[1.0, 0.0]));
    let g = GainSpec::identity(1);
    for cfg in [
        IntegrationConfig { step: 0.0, ..Default::default() },
        IntegrationConfig { step: f64::NAN, ..Default::default() },
        IntegrationConfig { max_steps: 0, ..Default::default() },
        IntegrationConfig { sample_every: 0, ..Default::default() },
    ] {
        assert!(matches!(integrate(RuleId::N2S, &model, &w0, &g, &cfg), Err(Error::Config(_))));
    }
    let wrong = wm(col(&[1.0, 0.0, 0.0]));
    assert!(integrate(RuleId::N2S, &model, &wrong, &g, &IntegrationConfig::default()).is_err());
    let cfg: IntegrationConfig = serde_json::from_str(r#"{"step":0.02,"projection":"exact"}"#).unwrap();
    assert_eq!(cfg.projection, ProjectionMode::Exact);
    assert_eq!(cfg.max_steps, 200_000);
}

#[test]
fn trials_run_in_order_and_deterministically() {
    let model = build_covariance(&[4.0, 3.0, 2.0, 1.0], 2).unwrap();
    let gains = GainSpec::linear(2);
    let trials: Vec<Trial> = [RuleId::N2S, RuleId::TwJ2S, RuleId::OjaSubspace]
        .iter()
        .flat_map(|&rule| (0..3).map(move |seed| Trial { rule, seed }))
        .collect();
    let cfg = IntegrationConfig::default();
    let a = run_trials(&trials, &model, 2, &gains, &cfg, |_| ProjectionMode::None);
    let b = run_trials(&trials, &model, 2, &gains, &cfg, |_| ProjectionMode::None);
    for ((t, x), y) in trials.iter().zip(&a).zip(&b) {
        assert_eq!((x.rule, x.seed), (t.rule, t.seed));
        assert_eq!(x.result.as_ref().unwrap(), y.result.as_ref().unwrap());
    }
    let single = run_trial(RuleId::N2S, 1, &model, 2, &gains, &cfg).unwrap();
    assert_eq!(&single, a[1].result.as_ref().unwrap());
    assert!(single.converged && single.alignment.pca && single.subspace_error < 1e-6);
}

#[test]
fn initial_weights_are_orthonormal_and_seeded() {
    let a = initial_weights(6, 3, 4).unwrap();
    assert!(a.orthonormality_defect(None) < 1e-12);
    assert_eq!(a, initial_weights(6, 3, 4).unwrap());
    assert_ne!(a, initial_weights(6, 3, 5).unwrap());
}

#[test]
fn initial_weights_independent_of_equal_model_seed() {
    for seed in 0..10 {
        let model = build_covariance(&[4.0, 3.0, 2.0, 1.0], seed).unwrap();
        let w0 = initial_weights(4, 2, seed).unwrap();
        assert!(subspace_error(&w0, &model, 2).unwrap() > 1e-3, "seed {seed}");
    }
}
