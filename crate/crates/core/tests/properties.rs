mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::{brute_force_nnls, joint_gaussian_posterior, plain_heat, rel_diff};
use scrapcomp::baseline::{nnls_solve, windowed_nnls, WindowConfig};
use scrapcomp::filters::{cholesky_psd, sigma_points, Filter, FilterOptions};
use scrapcomp::io::{fraction_to_ppm_text, ppm_text_to_fraction};
use scrapcomp::model::beta_params_from_moments;
use scrapcomp::{ElementSpec, GaussianBelief, NoiseSpec};

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn nnls_problem() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (1usize..=3)
        .prop_flat_map(|n| (Just(n), n..=7usize))
        .prop_flat_map(|(n, m)| {
            (
                matrix(m, n, -2.0, 2.0),
                prop::collection::vec(-2.0..2.0f64, m),
            )
        })
        .prop_map(|(x, y)| (x, DVector::from_vec(y)))
}

fn spd(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(m, m, -1.0, 1.0).prop_map(move |b| &b * b.transpose() + DMatrix::identity(m, m) * 1e-2)
}

#[derive(Debug, Clone)]
struct LinearRun {
    spec: NoiseSpec,
    initial: GaussianBelief,
    masses: Vec<Vec<f64>>,
    ys: Vec<Option<f64>>,
}

fn linear_run() -> impl Strategy<Value = LinearRun> {
    (1usize..=3, 1usize..=12)
        .prop_flat_map(|(n, t)| {
            (
                0.01..0.9f64,
                prop::collection::vec(0.05..0.6f64, n),
                prop::collection::vec(1e-4..0.05f64, n),
                1e-3..1.0f64,
                spd(n),
                prop::collection::vec(prop::collection::vec(0.0..3.0f64, n), t),
                prop::collection::vec(prop::option::weighted(0.8, 0.0..2.0f64), t),
            )
        })
        .prop_map(|(gamma, q, q_cov, h, p1, masses, ys)| {
            let q = DVector::from_vec(q);
            let ys = ys
                .iter()
                .zip(&masses)
                .map(|(y, m)| y.map(|v| v.min(m.iter().sum())))
                .collect();
            LinearRun {
                spec: NoiseSpec::new(gamma, q.clone(), DVector::from_vec(q_cov), h).unwrap(),
                initial: GaussianBelief::new(q, p1 * 0.01).unwrap(),
                masses,
                ys,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn nnls_matches_support_enumeration((x, y) in nnls_problem()) {
        let sol = nnls_solve(&x, &y).unwrap();
        let oracle = brute_force_nnls(&x, &y);
        prop_assert!(sol.beta.iter().all(|b| *b >= 0.0));
        let res = (&x * &sol.beta - &y).norm_squared();
        let best = (&x * &oracle - &y).norm_squared();
        prop_assert!(res <= best + 1e-10 * best.max(1.0), "{res} vs {best}");
        prop_assert!(sol.kkt_violation <= sol.kkt_tolerance);
    }

    #[test]
    fn sigma_points_reconstruct_moments(
        (p, a) in (1usize..=8).prop_flat_map(|m| (spd(m), prop::collection::vec(-5.0..5.0f64, m))),
        k in 0.1..6.0f64,
    ) {
        let a = DVector::from_vec(a);
        let chol = cholesky_psd(&p).unwrap();
        let set = sigma_points(&a, &chol.lower, k).unwrap();
        prop_assert_eq!(set.points.len(), 2 * a.len() + 1);
        prop_assert!((set.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((set.mean() - &a).amax() <= 1e-10 * a.amax().max(1.0));
        prop_assert!(rel_diff(&set.covariance(), &p) <= 1e-10);
    }

    #[test]
    fn kalman_filter_equals_batch_conditioning(run in linear_run()) {
        let heats: Vec<_> = run
            .masses
            .iter()
            .zip(&run.ys)
            .enumerate()
            .map(|(i, (m, y))| plain_heat(i as u64 + 1, m.clone(), *y))
            .collect();
        let mut f = Filter::new(ElementSpec::linear("Cu"), run.spec.clone(), run.initial.clone(), FilterOptions::default()).unwrap();
        let mut post = None;
        for h in &heats {
            post = Some(f.step(h).unwrap().1.posterior);
        }
        let post = post.unwrap();
        let rows: Vec<DVector<f64>> = run.masses.iter().map(|m| DVector::from_column_slice(m)).collect();
        let ys: Vec<Option<f64>> = heats.iter().map(|h| h.linear_observation()).collect();
        let (mean, cov) = joint_gaussian_posterior(&run.initial.mean, &run.initial.cov, &run.spec, &rows, &ys);
        let scale = mean.amax().max(1.0);
        prop_assert!((&post.mean - &mean).amax() <= 1e-8 * scale);
        prop_assert!(rel_diff(&post.cov, &cov) <= 1e-8);
    }

    #[test]
    fn beta_parameters_reproduce_feasible_moments(q in 1e-6..0.999f64, share in 1e-6..0.999f64) {
        let var = share * q * (1.0 - q);
        let p = beta_params_from_moments(q, var).unwrap();
        prop_assert!(p.u > 0.0 && p.v > 0.0);
        prop_assert!((p.mean() - q).abs() <= 1e-9 * q);
        prop_assert!((p.variance() - var).abs() <= 1e-7 * var);
    }

    #[test]
    fn beta_parameters_reject_excess_variance(q in 1e-6..0.999f64, excess in 1.0..10.0f64) {
        prop_assert!(beta_params_from_moments(q, excess * q * (1.0 - q)).is_err());
    }

    #[test]
    fn ppm_text_is_exact(bits in any::<u64>()) {
        let f = f64::from_bits(bits);
        prop_assume!(f.is_finite());
        let back = ppm_text_to_fraction(&fraction_to_ppm_text(f)).unwrap();
        prop_assert_eq!(back.to_bits(), f.to_bits());
    }

    #[test]
    fn window_estimates_are_nonnegative(
        masses in prop::collection::vec(prop::collection::vec(0.0..5e3f64, 3), 20..60),
        fractions in prop::collection::vec(0.0..1e-3f64, 60),
    ) {
        let heats: Vec<_> = masses
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut h = plain_heat(i as u64 + 1, m.clone(), None);
                h.f_steel = Some(fractions[i]);
                h
            })
            .collect();
        let cfg = WindowConfig { window: 10, ..WindowConfig::default() };
        for e in windowed_nnls(&heats, &ElementSpec::linear("Cu"), &cfg).unwrap() {
            prop_assert!(e.alpha.iter().all(|a| *a >= 0.0));
        }
    }
}
