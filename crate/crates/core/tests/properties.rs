//! Property-based invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rcw::conditional::{empirical_quantile, mc_p_value, null_transform, reconstruct_r};
use rcw::estimators::{estimate, EstimatorKind};
use rcw::linalg::{kron_congruence, sym_sqrt_psd};
use rcw::wald::{wald, PlugIn, WaldForm};
use rcw::{rng, IVData, ReducedFormStats, VcovKind};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0..3.0f64, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn pd(m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(m, m).prop_map(move |a| &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * 0.2)
}

fn stats_strategy() -> impl Strategy<Value = (ReducedFormStats, DVector<f64>)> {
    (1usize..=2, 0usize..=3).prop_flat_map(|(p, extra)| {
        let k = p + extra;
        (matrix(k, p + 1), pd((p + 1) * k), pd(p + 1), prop::collection::vec(-4.0..4.0f64, p)).prop_map(
            move |(r, sigma, phi, b0)| {
                (
                    ReducedFormStats::from_parts(r, sigma, phi, 100).unwrap(),
                    DVector::from_vec(b0),
                )
            },
        )
    })
}

fn sample_strategy() -> impl Strategy<Value = IVData> {
    (any::<u64>(), 2usize..=4, 30usize..=60).prop_map(|(seed, k, n)| {
        let mut z = vec![0.0; n * k];
        rng::fill_normals(seed, 0, &mut z);
        let mut e = vec![0.0; 2 * n];
        rng::fill_normals(seed, 1, &mut e);
        let z = DMatrix::from_vec(n, k, z);
        let x = DVector::from_fn(n, |i, _| z.row(i).sum() * 0.5 + e[i]);
        let y = DVector::from_fn(n, |i, _| x[i] + e[n + i] + 0.5 * e[i]);
        IVData::new(y, DMatrix::from_column_slice(n, 1, x.as_slice()), z, None, None).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn null_transform_round_trips((stats, beta0) in stats_strategy()) {
        let cond = null_transform(&stats, &beta0).unwrap();
        let back = reconstruct_r(&cond, &cond.r_u).unwrap();
        prop_assert!((back - stats.r()).amax() < 1e-9);
    }

    #[test]
    fn rotated_sigma_is_congruent((stats, beta0) in stats_strategy()) {
        let cond = null_transform(&stats, &beta0).unwrap();
        let k = stats.k();
        // Σ̂0 stays symmetric and Σ_uu equals the b0-weighted block sum
        prop_assert!((&cond.sigma0 - cond.sigma0.transpose()).amax() < 1e-9);
        let b0 = DVector::from_iterator(beta0.len() + 1, std::iter::once(1.0).chain(beta0.iter().map(|b| -b)));
        let direct = kron_congruence(stats.sigma(), &DMatrix::from_column_slice(b0.len(), 1, b0.as_slice()), k);
        prop_assert!((direct - &cond.sigma_uu).amax() < 1e-9 * cond.sigma_uu.amax().max(1.0));
    }

    #[test]
    fn wald_is_nonnegative_and_zero_at_the_estimate((stats, beta0) in stats_strategy()) {
        let b = estimate(&stats, EstimatorKind::Tsls).unwrap().beta_hat;
        for form in [WaldForm::Sandwich, WaldForm::Efficient] {
            let w = wald(&stats, form, &b, &beta0, PlugIn::Estimate).unwrap().statistic;
            prop_assert!(w >= -1e-12);
            let zero = wald(&stats, form, &b, &b, PlugIn::Estimate).unwrap().statistic;
            prop_assert!(zero.abs() < 1e-12);
        }
    }

    #[test]
    fn quantiles_are_monotone_and_p_values_valid(
        mut draws in prop::collection::vec(0.0..50.0f64, 1000..1200),
        a1 in 0.01..0.5f64,
        a2 in 0.01..0.5f64,
        obs in 0.0..60.0f64,
    ) {
        let p = mc_p_value(&draws, obs);
        prop_assert!(p > 0.0 && p <= 1.0);
        draws.sort_by(f64::total_cmp);
        let (lo, hi) = if a1 < a2 { (a1, a2) } else { (a2, a1) };
        prop_assert!(empirical_quantile(&draws, lo) >= empirical_quantile(&draws, hi));
    }

    #[test]
    fn psd_square_root_squares_back(a in pd(5)) {
        let h = sym_sqrt_psd(&a, "a").unwrap();
        prop_assert!((&h * &h - &a).amax() < 1e-9 * a.amax());
    }

    #[test]
    fn invertible_instrument_transforms_leave_inference_unchanged(data in sample_strategy(), c in 0.2..5.0f64) {
        let k = data.k();
        let a = DMatrix::from_fn(k, k, |i, j| if i == j { c } else if j == i + 1 { 0.5 } else { 0.0 });
        let moved = data.with_instruments(data.z() * a).unwrap();
        let s1 = ReducedFormStats::from_data(&data, VcovKind::default()).unwrap();
        let s2 = ReducedFormStats::from_data(&moved, VcovKind::default()).unwrap();
        let rr1 = s1.r().transpose() * s1.r();
        let rr2 = s2.r().transpose() * s2.r();
        prop_assert!((&rr1 - &rr2).amax() < 1e-8 * rr1.amax());
        for kind in [EstimatorKind::Tsls, EstimatorKind::Liml, EstimatorKind::Gmm2] {
            let b1 = estimate(&s1, kind).unwrap().beta_hat[0];
            let b2 = estimate(&s2, kind).unwrap().beta_hat[0];
            prop_assert!((b1 - b2).abs() < 1e-7 * b1.abs().max(1.0));
        }
    }

    #[test]
    fn derived_seeds_are_pure(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        prop_assert_eq!(rng::derive_seed(seed, &[a, b]), rng::derive_seed(seed, &[a, b]));
        let mut x = [0.0; 4];
        let mut y = [0.0; 8];
        rng::fill_normals(seed, a, &mut x);
        rng::fill_normals(seed, a, &mut y);
        prop_assert_eq!(&x[..], &y[..4]);
    }
}
