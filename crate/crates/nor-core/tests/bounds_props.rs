//! Property tests for the conjugate bound pair.

mod common;

use nor_core::bounds::{conjugate_f, conjugate_g, lb_log_lik, log_lik_positive, tight_psi};
use nor_core::model::ModelParams;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// psi a - g(psi) >= f(a) for every positive activation and parameter.
    #[test]
    fn upper_bound_dominates(a in 1e-4f64..20.0, psi in 1e-4f64..100.0) {
        let bound = psi * a - conjugate_g(psi).unwrap();
        let truth = conjugate_f(a).unwrap();
        prop_assert!(bound >= truth - 1e-12, "a={a} psi={psi}: {bound} < {truth}");
    }

    /// g is concave.
    #[test]
    fn g_is_concave(t1 in 1e-4f64..50.0, t2 in 1e-4f64..50.0) {
        let mid = conjugate_g(0.5 * (t1 + t2)).unwrap();
        let chord = 0.5 * (conjugate_g(t1).unwrap() + conjugate_g(t2).unwrap());
        prop_assert!(mid >= chord - 1e-12);
    }

    /// The Jensen split never exceeds the true positive log-likelihood.
    #[test]
    fn lower_bound_dominated(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..6usize);
        let params = common::random_instance(&mut rng, 1, k);
        let z: Vec<f64> = (0..k).map(|_| f64::from(rng.random::<bool>() as u8)).collect();
        let lam = common::random_simplex(&mut rng, k);
        let lb = lb_log_lik(&params, 0, &z, &lam).unwrap();
        let truth = log_lik_positive(&params, 0, &z).unwrap();
        prop_assert!(lb <= truth + 1e-12, "lb {lb} > truth {truth}");
    }
}

/// The bound touches f exactly at psi = f'(a), over a log-spaced grid.
#[test]
fn tightness_on_log_grid() {
    let n = 200;
    let (lo, hi) = (1e-4f64.ln(), 20f64.ln());
    for j in 0..=n {
        let a = (lo + (hi - lo) * j as f64 / n as f64).exp();
        let psi = tight_psi(a).unwrap();
        let gap = psi * a - conjugate_g(psi).unwrap() - conjugate_f(a).unwrap();
        assert!(
            (0.0..=1e-10).contains(&gap) || gap.abs() <= 1e-10,
            "a={a}: gap {gap}"
        );
    }
}

/// Spot-check the bound pair against a plain-f64 reimplementation.
#[test]
fn bounds_match_naive_formulas() {
    for &(a, psi) in &[(0.3f64, 0.7f64), (2.0, 1.3), (5.0, 0.2)] {
        assert!((conjugate_f(a).unwrap() - common::f_naive(a)).abs() < 1e-12);
        assert!((conjugate_g(psi).unwrap() - common::g_naive(psi)).abs() < 1e-12);
    }
    // lb_log_lik against a literal transcription for a 3-component split
    let params = ModelParams::new(
        ndarray::arr2(&[[0.8, 0.0, 1.4]]),
        ndarray::arr1(&[0.25]),
        ndarray::arr1(&[0.5, 0.5, 0.5]),
    )
    .unwrap();
    let z = [1.0, 1.0, 0.0];
    let lam = [0.5, 0.2, 0.3];
    let by_hand = 0.5 * common::f_naive(0.25 + 0.8 * 1.0 / 0.5)
        + 0.2 * common::f_naive(0.25)
        + 0.3 * common::f_naive(0.25);
    let got = lb_log_lik(&params, 0, &z, &lam).unwrap();
    assert!((got - by_hand).abs() < 1e-12, "{got} vs {by_hand}");
}
