mod common;

use common::{assert_close, col, diag};
use symmpca::random;
use symmpca::rules::check_gains;
use symmpca::stiefel::skewness_defect;
use symmpca::*;

fn gains3() -> GainSpec {
    GainSpec::new(vec![1.0, 0.6, 0.3], vec![1.0, 0.7, 0.4]).unwrap()
}

/// Column-by-column evaluation of the five negative terms and CWD.
struct Terms {
    cwd: DMatrix<f64>,
    neg: [DMatrix<f64>; 5],
}

fn terms(c: &DMatrix<f64>, w: &DMatrix<f64>, d: &[f64]) -> Terms {
    let (n, m) = w.shape();
    let wc: Vec<DMatrix<f64>> = (0..m).map(|j| w.columns(j, 1).into_owned()).collect();
    let cwc: Vec<DMatrix<f64>> = wc.iter().map(|x| c * x).collect();
    let dot = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a.transpose() * b)[(0, 0)];
    let mut cwd = DMatrix::zeros(n, m);
    let mut neg: [DMatrix<f64>; 5] = std::array::from_fn(|_| DMatrix::zeros(n, m));
    for j in 0..m {
        cwd.set_column(j, &(&cwc[j] * d[j]).column(0));
        let mut t = [DMatrix::zeros(n, 1), DMatrix::zeros(n, 1), DMatrix::zeros(n, 1), DMatrix::zeros(n, 1)];
        let mut dstar = 0.0;
        for k in 0..m {
            let ck = dot(&wc[k], &cwc[j]);
            let gk = dot(&wc[k], &wc[j]);
            t[0] += &wc[k] * (d[j] * ck);
            t[1] += &wc[k] * (d[k] * ck);
            t[2] += &cwc[k] * (d[k] * gk);
            t[3] += &cwc[k] * (d[j] * gk);
            dstar += ck * gk;
        }
        for (i, ti) in t.iter().enumerate() {
            neg[i].set_column(j, &ti.column(0));
        }
        neg[4].set_column(j, &(&cwc[j] * dstar).column(0));
    }
    Terms { cwd, neg }
}

/// rhs rebuilt from the term profile; the returned scale maps it back to
/// the rule's own normalization.
fn rhs_from_profile(rule: RuleId, c: &DMatrix<f64>, w: &DMatrix<f64>, g: &GainSpec) -> DMatrix<f64> {
    let d: Vec<f64> = if rule.is_novel() {
        response_diag(c, w).unwrap().iter().copied().collect()
    } else if rule.uses_theta() {
        g.theta.clone()
    } else {
        vec![1.0; w.ncols()]
    };
    let t = terms(c, w, &d);
    let p = term_profile(rule);
    let mut out = &t.cwd * p.positive_coefficient;
    for (flag, term) in p.flags().iter().zip(&t.neg) {
        if *flag {
            out -= term;
        }
    }
    let scale = match rule {
        RuleId::TSE | RuleId::NSE => 0.5,
        RuleId::TL => 2.0,
        _ => 1.0,
    };
    out * scale
}

#[test]
fn rhs_matches_term_profiles() {
    let model = build_covariance(&[5.0, 4.0, 3.0, 2.0, 1.0], 3).unwrap();
    let c = model.covariance();
    let g = gains3();
    for seed in 0..10 {
        let mut rng = random::rng(seed);
        let w = random::gaussian_matrix(&mut rng, 5, 3);
        for rule in RuleId::ALL.into_iter().filter(|r| *r != RuleId::OjaWeighted) {
            let rhs = rule_rhs(rule, c, &w, &g).unwrap();
            let oracle = rhs_from_profile(rule, c, &w, &g);
            let err = (&rhs - &oracle).amax() / oracle.amax();
            assert!(err < 1e-12, "{rule}: {err:e}");
        }
    }
}

#[test]
fn nl_ablation_drops_cross_term() {
    let model = build_covariance(&[4.0, 3.0, 2.0, 1.0], 5).unwrap();
    let c = model.covariance();
    let mut rng = random::rng(1);
    let w = random::gaussian_matrix(&mut rng, 4, 2);
    let g = GainSpec::linear(2);
    let d: Vec<f64> = response_diag(c, &w).unwrap().iter().copied().collect();
    let t = terms(c, &w, &d);
    let full = rule_rhs(RuleId::NL, c, &w, &g).unwrap();
    let ablated = rule_rhs(RuleId::NlNoCross, c, &w, &g).unwrap();
    assert_close(&(full - ablated), &(&t.cwd - &t.neg[4]), 1e-10);
    assert!(!RuleId::ALL.contains(&RuleId::NlNoCross));
}

#[test]
fn oja_weighted_formula() {
    let model = build_covariance(&[4.0, 3.0, 2.0, 1.0], 5).unwrap();
    let c = model.covariance();
    let mut rng = random::rng(2);
    let w = random::gaussian_matrix(&mut rng, 4, 3);
    let g = gains3();
    let rhs = rule_rhs(RuleId::OjaWeighted, c, &w, &g).unwrap();
    for j in 0..3 {
        let wj = w.columns(j, 1).into_owned();
        let mut expect = c * &wj;
        for k in 0..3 {
            let wk = w.columns(k, 1).into_owned();
            expect -= &wk * ((wk.transpose() * c * &wj)[(0, 0)] / g.omega[j]);
        }
        assert!((rhs.columns(j, 1) - expect).amax() < 1e-12);
    }
}

#[test]
fn spec_examples() {
    let c = diag(&[2.0, 1.0]);
    let g1 = GainSpec::identity(1);
    let e1 = col(&[1.0, 0.0]);
    assert_eq!(rule_rhs(RuleId::OjaSubspace, &c, &e1, &g1).unwrap(), DMatrix::zeros(2, 1));

    let x = col(&[1.0, 1.0]) / 2f64.sqrt();
    let n2s = rule_rhs(RuleId::N2S, &c, &x, &g1).unwrap();
    assert_close(&n2s, &(col(&[0.75, -0.75]) / 2f64.sqrt()), 1e-15);

    let c3 = diag(&[3.0, 2.0, 1.0]);
    let w = DMatrix::identity(3, 2);
    let id = GainSpec::identity(2);
    assert!(rule_rhs(RuleId::TSC, &c3, &w, &id).unwrap().amax() < 1e-15);
    assert!(rule_rhs(RuleId::OjaSubspace, &c3, &w, &id).unwrap().amax() < 1e-15);

    let nl = rule_rhs(RuleId::NL, &c, &DMatrix::identity(2, 2), &GainSpec::linear(2)).unwrap();
    assert!(nl.amax() < 1e-14);
}

#[test]
fn tsc_with_identity_gain_matches_oja_at_orthonormal_w() {
    let model = build_covariance(&[4.0, 3.0, 2.0, 1.0], 9).unwrap();
    let mut rng = random::rng(3);
    let w = random::random_frame(&mut rng, 4, 2);
    let id = GainSpec::identity(2);
    let tsc = rule_rhs(RuleId::TSC, model.covariance(), &w, &id).unwrap();
    let oja = rule_rhs(RuleId::OjaSubspace, model.covariance(), &w, &id).unwrap();
    assert_close(&tsc, &oja, 1e-12);
}

#[test]
fn eigenbasis_annihilation() {
    let model = build_covariance(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0], 4).unwrap();
    let c = model.covariance();
    let g = gains3();
    let mut rng = random::rng(5);
    for _ in 0..10 {
        let perm = random::random_permutation(&mut rng, 6);
        let signs = random::random_signs(&mut rng, 6);
        let sel = SignedPermutation::new(perm, signs).unwrap();
        let w = (model.eigenvectors() * sel.matrix()).columns(0, 3).into_owned();
        for rule in RuleId::ALL.into_iter().chain([RuleId::NlNoCross]) {
            let w = if rule == RuleId::OjaWeighted {
                &w * diag(&g.omega.iter().map(|o| o.sqrt()).collect::<Vec<_>>())
            } else {
                w.clone()
            };
            let rhs = rule_rhs(rule, c, &w, &g).unwrap();
            assert!(rhs.norm() < 1e-10, "{rule}: {:e}", rhs.norm());
        }
    }
}

#[test]
fn stiefel_rules_are_tangent_and_are_manifold_gradients() {
    let model = build_covariance(&[5.0, 4.0, 3.0, 2.0, 1.0], 6).unwrap();
    let c = model.covariance();
    let g = gains3();
    for seed in 0..20 {
        let mut rng = random::rng(seed);
        let w = random::random_frame(&mut rng, 5, 3);
        for (rule, metric) in [
            (RuleId::TSE, Metric::Embedded),
            (RuleId::TSC, Metric::Canonical),
            (RuleId::NSE, Metric::Embedded),
            (RuleId::NSC, Metric::Canonical),
        ] {
            let rhs = rule_rhs(rule, c, &w, &g).unwrap();
            assert!(skewness_defect(&w, &rhs) < 1e-10, "{rule}");
            let grad = gradient(&rule.objective_kind(&g), c, &w).unwrap();
            assert_close(&rhs, &manifold_gradient(metric, &grad, &w), 1e-12);
        }
    }
}

#[test]
fn psa_factorization() {
    let model = build_covariance(&[5.0, 4.0, 3.0, 2.0, 1.0], 6).unwrap();
    let c = model.covariance();
    let mut rng = random::rng(8);
    let w = random::gaussian_matrix(&mut rng, 5, 3);
    let g = gains3();
    let theta = diag(&g.theta);
    let wt = w.transpose();
    let weighted = c * &w * &theta * 2.0 - &w * &wt * c * &w * &theta - c * &w * &wt * &w * &theta;
    let tl = rule_rhs(RuleId::TL, c, &w, &g).unwrap() * 0.5;
    assert_close(&weighted, &(tl * theta), 1e-11);
}

#[test]
fn term_profiles() {
    let n2s = term_profile(RuleId::N2S);
    assert_eq!(n2s.flags(), [false, true, false, false, false]);
    assert_eq!((n2s.n_t, n2s.positive_coefficient), (1, 1.0));
    assert_eq!(term_profile(RuleId::TwJ2S), n2s);
    let nl = term_profile(RuleId::NL);
    assert_eq!(nl.flags(), [true; 5]);
    assert_eq!((nl.n_t, nl.positive_coefficient), (5, 5.0));
    let xu = term_profile(RuleId::Xu15b);
    assert_eq!(xu.flags(), [false, true, true, false, false]);
    assert_eq!(xu.n_t, 2);
    assert_eq!(term_profile(RuleId::TwJL).n_t, 4);
    for rule in RuleId::ALL {
        let p = term_profile(rule);
        assert_eq!(p.n_t, p.flags().iter().filter(|f| **f).count());
    }
    assert!(term_profile(RuleId::OjaSubspace).coincident_terms);
    assert!(term_profile(RuleId::OjaWeighted).untabulated);
}

#[test]
fn rule_names() {
    for rule in RuleId::ALL {
        assert_eq!(rule.as_str().parse::<RuleId>().unwrap(), rule);
        assert_eq!(serde_json::to_string(&rule).unwrap(), format!("\"{}\"", rule.as_str()));
    }
    assert_eq!("N2S".parse::<RuleId>().unwrap(), RuleId::N2S);
    let names: Vec<&str> = RuleId::ALL.iter().map(|r| r.as_str()).collect();
    assert_eq!(names, ["twj2s", "n2s", "twjl", "nl", "tl", "tse", "tsc", "nse", "nsc", "oja", "ojaw", "xu15b"]);
    match "foo".parse::<RuleId>() {
        Err(Error::UnknownRule { name, valid }) => {
            assert_eq!(name, "foo");
            assert!(valid.contains("twj2s") && valid.contains("xu15b"));
        }
        other => panic!("{other:?}"),
    }
    assert!(serde_json::from_str::<RuleId>("\"foo\"").is_err());
}

#[test]
fn gain_requirements() {
    let w = DMatrix::identity(3, 2);
    let c = diag(&[3.0, 2.0, 1.0]);
    let tied = GainSpec::identity(2);
    for rule in [RuleId::TwJ2S, RuleId::TwJL, RuleId::Xu15b, RuleId::OjaWeighted] {
        match rule_rhs(rule, &c, &w, &tied) {
            Err(Error::Gains { rule: name, .. }) => assert_eq!(name, rule.as_str()),
            other => panic!("{rule}: {other:?}"),
        }
    }
    for rule in [RuleId::TSE, RuleId::TSC, RuleId::N2S, RuleId::NL, RuleId::OjaSubspace] {
        assert!(rule_rhs(rule, &c, &w, &tied).is_ok());
    }
    assert!(check_gains(RuleId::TwJ2S, &GainSpec::linear(3), 2).is_err());
    assert!(check_gains(RuleId::N2S, &GainSpec::linear(3), 2).is_ok());
}
