use symmpca::lemmas::{lemma_names, run_lemma_suite, run_lemma_trial};

#[test]
fn suite_passes() {
    let reports = run_lemma_suite(1, 300);
    assert_eq!(reports.len(), lemma_names().len());
    for r in &reports {
        assert!(r.passed(), "{} failed {} times, first seed {:?}", r.name, r.failures, r.first_failure_seed);
        assert_eq!(r.trials, 300);
    }
}

#[test]
fn trials_replay() {
    for name in lemma_names() {
        let a = run_lemma_trial(name, 17).unwrap();
        let b = run_lemma_trial(name, 17).unwrap();
        assert_eq!(a, b);
        assert!(a.passed(), "{name}: {a:?}");
    }
    assert!(run_lemma_trial("no_such_lemma", 0).is_none());
}

#[test]
fn covers_the_supporting_identities() {
    let names = lemma_names();
    for expected in ["perm_diag", "commute_diag", "tr_askew_bsymm", "rtdr_ii_sqr", "stiefel_svd", "skew_symm_diag_nonzero"] {
        assert!(names.contains(&expected), "{expected}");
    }
}

mod direct {
    use symmpca::random;
    use symmpca::DMatrix;

    #[test]
    fn trace_of_skew_times_symmetric_vanishes() {
        let mut rng = random::rng(7);
        for _ in 0..20 {
            let a = random::random_skew(&mut rng, 7);
            let b = random::random_symmetric(&mut rng, 7);
            assert!((a * b).trace().abs() < 1e-12);
        }
    }

    #[test]
    fn rotated_diagonal_squares_are_bounded() {
        let d = DMatrix::from_diagonal(&symmpca::DVector::from_vec(vec![5.0, 3.0, 2.0, 0.5]));
        let bound: f64 = d.diagonal().iter().map(|x| x * x).sum();
        let mut rng = random::rng(8);
        for _ in 0..500 {
            let r = random::random_orthogonal(&mut rng, 4);
            let m = r.transpose() * &d * r;
            let s: f64 = m.diagonal().iter().map(|x| x * x).sum();
            assert!(s <= bound + 1e-10);
        }
    }
}
