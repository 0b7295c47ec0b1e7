use proptest::prelude::*;
use sparsebag::ensemble::{bootstrap_size, draw_bootstrap, order_invariant_mean};
use sparsebag::lasso::coordinate_descent;
use sparsebag::linalg::{gaussian_vector, norm_inf, normalize_columns};
use sparsebag::theory::{
    bagging_bound_exact_sparse, c0, c1, hoeffding_tail_bound, rip_constant_bruteforce, BoundInputs, RIP_LIMIT,
};
use sparsebag::{gaussian_matrix, objective, soft_threshold, solve_lasso, DenseMatrix, LassoConfig, RngStream};

fn tight(lambda: f64) -> LassoConfig {
    LassoConfig {
        lambda,
        abs_tol: 1e-11,
        rel_tol: 1e-11,
        max_iter: 200_000,
        ..LassoConfig::accelerated()
    }
}

fn instance(m: usize, n: usize, seed: u64) -> (DenseMatrix, Vec<f64>) {
    let root = RngStream::from_seed(seed);
    let a = gaussian_matrix(m, n, &root.derive(0));
    let y = gaussian_vector(m, &root.derive(1));
    (a, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_threshold_shrinks(v in -10.0..10.0f64, kappa in 0.0..5.0f64) {
        let t = soft_threshold(v, kappa);
        prop_assert!(t.abs() <= v.abs());
        prop_assert!(t == 0.0 || t.signum() == v.signum());
        prop_assert_eq!(t == 0.0, v.abs() <= kappa);
        prop_assert!((soft_threshold(-v, kappa) + t).abs() == 0.0);
        if t != 0.0 {
            prop_assert!(((v - t).abs() - kappa).abs() < 1e-12);
        }
    }

    #[test]
    fn admm_matches_coordinate_descent(m in 2usize..8, n in 2usize..8, seed in 0u64..10_000, lambda in 0.05..2.0f64) {
        let (a, y) = instance(m, n, seed);
        let admm = solve_lasso(&a, &y, &tight(lambda)).unwrap();
        let cd = coordinate_descent(&a, &y, lambda, 1_000_000).unwrap();
        prop_assume!(cd.converged);
        let f_admm = objective(&a, &y, lambda, &admm.x).unwrap();
        let f_cd = objective(&a, &y, lambda, &cd.x).unwrap();
        prop_assert!((f_admm - f_cd).abs() <= 1e-6 * (1.0 + f_cd.abs()), "admm {f_admm} cd {f_cd}");
    }

    #[test]
    fn solution_invariant_under_joint_scaling(m in 2usize..8, n in 2usize..8, seed in 0u64..10_000, c in 0.2..5.0f64) {
        let (a, y) = instance(m, n, seed);
        let lambda = 0.3;
        let scaled = DenseMatrix::new(m, n, a.as_slice().iter().map(|v| c * v).collect()).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| c * v).collect();
        let x = coordinate_descent(&a, &y, lambda, 1_000_000).unwrap();
        let xs = coordinate_descent(&scaled, &ys, c * c * lambda, 1_000_000).unwrap();
        prop_assume!(x.converged && xs.converged);
        for (u, v) in x.x.iter().zip(&xs.x) {
            prop_assert!((u - v).abs() < 1e-6, "{u} vs {v}");
        }
    }

    #[test]
    fn large_lambda_gives_zero(m in 2usize..10, n in 2usize..10, seed in 0u64..10_000, excess in 1.0..3.0f64) {
        let (a, y) = instance(m, n, seed);
        let lambda = excess * norm_inf(&a.tr_mul_vec(&y));
        let sol = solve_lasso(&a, &y, &LassoConfig::with_lambda(lambda)).unwrap();
        prop_assert!(sol.x.iter().all(|&v| v == 0.0), "{:?}", sol.x);
    }

    #[test]
    fn normalization_is_idempotent(m in 1usize..8, n in 1usize..8, seed in 0u64..10_000) {
        let a = normalize_columns(&gaussian_matrix(m, n, &RngStream::from_seed(seed))).unwrap();
        for norm in a.column_norms() {
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
        let b = normalize_columns(&a).unwrap();
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_ignores_order(rows in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 4), 1..12), shift in 0usize..12) {
        let mut rotated = rows.clone();
        let k = rotated.len();
        rotated.rotate_left(shift % k);
        rotated.reverse();
        prop_assert_eq!(order_invariant_mean(&rows), order_invariant_mean(&rotated));
    }

    #[test]
    fn bootstrap_indices_in_range(m in 1usize..200, ratio in 0.05..2.0f64, seed in 0u64..10_000) {
        let l = bootstrap_size(ratio, m).unwrap();
        let sample = draw_bootstrap(m, l, &RngStream::from_seed(seed)).unwrap();
        prop_assert_eq!(sample.len(), l);
        prop_assert!(sample.indices().iter().all(|&i| i < m));
        let counted: usize = sample.counts().iter().map(|&(_, c)| c).sum();
        prop_assert_eq!(counted, l);
        prop_assert!(sample.distinct_count() <= l.min(m));
    }

    #[test]
    fn hoeffding_is_a_probability(n in 1usize..500, a in -5.0..5.0f64, width in 0.01..10.0f64, t in 0.0..1.0f64, xi in -10.0..10.0f64) {
        let b = a + width;
        let mean = a + t * width;
        let p = hoeffding_tail_bound(n, xi, mean, a, b).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        let larger = hoeffding_tail_bound(n + 1, xi, mean, a, b).unwrap();
        prop_assert!(larger <= p);
    }

    #[test]
    fn constants_increase(d1 in 0.0..RIP_LIMIT, d2 in 0.0..RIP_LIMIT) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(c0(lo).unwrap() <= c0(hi).unwrap());
        prop_assert!(c1(lo).unwrap() <= c1(hi).unwrap());
        prop_assert!(c0(lo).unwrap() >= 2.0 && c1(lo).unwrap() >= 4.0);
    }

    #[test]
    fn rip_constant_grows_with_order(m in 3usize..8, n in 3usize..7, seed in 0u64..10_000) {
        let a = normalize_columns(&gaussian_matrix(m, n, &RngStream::from_seed(seed))).unwrap();
        let d1 = rip_constant_bruteforce(&a, 1).unwrap();
        let d2 = rip_constant_bruteforce(&a, 2).unwrap();
        let d3 = rip_constant_bruteforce(&a, 3).unwrap();
        prop_assert!(d1 < 1e-12);
        prop_assert!(d2 <= d3 + 1e-12);
    }

    #[test]
    fn bound_probability_grows_with_k_and_tau(
        delta in 0.0..0.4f64, k in 1usize..500, tau in 0.01..3.0f64, z_inf in 0.01..1.0f64, l in 1usize..100
    ) {
        let base = BoundInputs { delta, s: 2, l, m: 100, k, tau, z_l2: 2.0, z_inf, e_l1: 0.0 };
        let p = bagging_bound_exact_sparse(&base).unwrap().prob_lower;
        let more_k = bagging_bound_exact_sparse(&BoundInputs { k: k + 1, ..base }).unwrap().prob_lower;
        let more_tau = bagging_bound_exact_sparse(&BoundInputs { tau: tau * 1.1, ..base }).unwrap().prob_lower;
        prop_assert!(p <= 1.0);
        prop_assert!(more_k >= p && more_tau >= p);
    }
}
