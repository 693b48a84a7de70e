//! Raw-data oracles for the reduced form, estimators and Wald statistics.

mod common;

use approx::assert_relative_eq;
use common::{annihilator, iv_sample, max_rel, projection};
use nalgebra::{DMatrix, DVector};
use rcw::estimators::{estimate, estimate_2sls, estimate_cue, estimate_gmm2, estimate_liml, CueSettings, EstimatorKind};
use rcw::reduced_form::{compute_phi_hat, compute_sigma_hat, reduced_form_residuals};
use rcw::vcov::estimate_omega;
use rcw::wald::{wald, wald_efficient, wald_sandwich, PlugIn, WaldForm};
use rcw::{ReducedFormStats, VcovKind};

fn hc() -> VcovKind {
    VcovKind::default()
}

#[test]
fn r_cross_product_is_projection_form() {
    let data = iv_sample(1, 50, 3, 1, 0.5);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let y = data.y();
    let oracle = y.transpose() * projection(data.z()) * &y;
    assert!(max_rel(&(stats.r().transpose() * stats.r()), &oracle) < 1e-10);
}

#[test]
fn sigma_blocks_match_brute_force_sum() {
    let data = iv_sample(2, 60, 3, 2, 0.5);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let (n, k) = (data.n(), data.k());
    let v = annihilator(data.z()) * data.y();
    let h = stats.ztz_half_inv() * (n as f64).sqrt();
    for a in 0..3 {
        for b in 0..3 {
            let mut s = DMatrix::zeros(k, k);
            for i in 0..n {
                let zi = data.z().row(i).transpose();
                s += &zi * zi.transpose() * (v[(i, a)] * v[(i, b)]);
            }
            let oracle = &h * (s / n as f64) * &h;
            assert!(max_rel(&stats.sigma_block(a, b).into_owned(), &oracle) < 1e-10);
        }
    }
}

#[test]
fn kronecker_omega_gives_kronecker_sigma() {
    let data = iv_sample(3, 80, 4, 1, 0.5);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let (n, k) = (data.n(), data.k());
    let omega = stats.phi().kronecker(&(data.z().transpose() * data.z() / n as f64));
    let sigma = compute_sigma_hat(&omega, stats.ztz_half_inv(), n, 1, k).unwrap();
    let target = stats.phi().kronecker(&DMatrix::identity(k, k));
    assert!((sigma - target).amax() < 1e-10);
}

#[test]
fn rescaled_instruments_leave_sigma_unchanged() {
    for kind in [hc(), VcovKind::Hac { bandwidth: 3 }] {
        let data = iv_sample(4, 70, 3, 1, 0.5);
        let scaled = data.with_instruments(data.z() * 3.0).unwrap();
        let a = ReducedFormStats::from_data(&data, kind).unwrap();
        let b = ReducedFormStats::from_data(&scaled, kind).unwrap();
        assert!((a.sigma() - b.sigma()).amax() < 1e-10);
        assert!((a.r() - b.r()).amax() < 1e-10);
    }
}

#[test]
fn phi_is_mean_residual_cross_product() {
    let data = iv_sample(5, 40, 2, 1, 0.5);
    let v = reduced_form_residuals(&data).unwrap();
    let phi = compute_phi_hat(&data).unwrap();
    assert!((phi - v.transpose() * &v / data.n() as f64).amax() < 1e-12);
    // Ω̂ consumes the same residuals
    let omega = estimate_omega(&data, &v, hc()).unwrap();
    assert_eq!(omega.nrows(), 2 * data.k());
}

#[test]
fn tsls_matches_projection_formula() {
    let data = iv_sample(6, 100, 4, 1, 0.4);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let p = projection(data.z());
    let y2 = data.y2();
    let oracle = (y2.transpose() * &p * y2).try_inverse().unwrap() * y2.transpose() * &p * data.y1();
    assert_relative_eq!(estimate_2sls(&stats).unwrap().beta_hat[0], oracle[0], max_relative = 1e-10);
}

#[test]
fn just_identified_liml_equals_tsls() {
    let data = iv_sample(7, 100, 2, 2, 0.6);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let t = estimate_2sls(&stats).unwrap();
    let l = estimate_liml(&stats).unwrap();
    assert!((&t.beta_hat - &l.beta_hat).amax() < 1e-8);
    assert!(l.liml_lambda.unwrap().abs() < 1e-8);
}

#[test]
fn liml_attains_its_ratio_and_minimizes_it() {
    let data = iv_sample(8, 150, 5, 1, 0.3);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let l = estimate_liml(&stats).unwrap();
    let nphi = stats.phi() * stats.n() as f64;
    let rtr = stats.r().transpose() * stats.r();
    let ratio = |beta: f64| {
        let b = DVector::from_vec(vec![1.0, -beta]);
        (b.transpose() * &rtr * &b)[0] / (b.transpose() * &nphi * &b)[0]
    };
    let beta = l.beta_hat[0];
    assert_relative_eq!(ratio(beta), l.liml_lambda.unwrap(), max_relative = 1e-8);
    // independent brute-force scan of the ratio
    let scan_min = (-4000..=4000)
        .map(|i| ratio(beta + i as f64 * 1e-3))
        .fold(f64::INFINITY, f64::min);
    assert!(ratio(beta) <= scan_min + 1e-12);
}

#[test]
fn gmm2_matches_raw_data_formula() {
    let data = iv_sample(9, 120, 4, 1, 0.5);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let (z, y1, y2) = (data.z(), data.y1(), data.y2());
    let beta_t = estimate_2sls(&stats).unwrap().beta_hat;
    let e = annihilator(z) * (y1 - y2 * &beta_t);
    let mut omega = DMatrix::zeros(z.ncols(), z.ncols());
    for i in 0..data.n() {
        let zi = z.row(i).transpose();
        omega += &zi * zi.transpose() * (e[i] * e[i]);
    }
    let w = omega.try_inverse().unwrap();
    let zy2 = z.transpose() * y2;
    let oracle = (zy2.transpose() * &w * &zy2).try_inverse().unwrap() * zy2.transpose() * &w * z.transpose() * y1;
    assert_relative_eq!(estimate_gmm2(&stats).unwrap().beta_hat[0], oracle[0], max_relative = 1e-8);
}

#[test]
fn just_identified_estimators_are_the_iv_ratio() {
    let data = iv_sample(10, 90, 1, 1, 0.8);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let iv = data.z().column(0).dot(data.y1()) / data.z().column(0).dot(&data.y2().column(0));
    assert_relative_eq!(estimate_gmm2(&stats).unwrap().beta_hat[0], iv, max_relative = 1e-10);
    assert_relative_eq!(estimate_2sls(&stats).unwrap().beta_hat[0], iv, max_relative = 1e-10);
    let cue = estimate_cue(&stats, CueSettings::default()).unwrap();
    assert!((cue.beta_hat[0] - iv).abs() < 1e-8);
}

#[test]
fn homoskedastic_structure_collapses_gmm_to_2sls_and_cue_to_liml() {
    let data = iv_sample(11, 200, 4, 1, 0.3);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let homo = stats.with_sigma(stats.phi().kronecker(&DMatrix::identity(4, 4)));
    let t = estimate(&homo, EstimatorKind::Tsls).unwrap().beta_hat[0];
    let g = estimate(&homo, EstimatorKind::Gmm2).unwrap().beta_hat[0];
    assert_relative_eq!(t, g, max_relative = 1e-8);
    let l = estimate(&homo, EstimatorKind::Liml).unwrap().beta_hat[0];
    let c = estimate(&homo, EstimatorKind::Cue(CueSettings::default())).unwrap().beta_hat[0];
    assert!((l - c).abs() < 1e-6, "liml {l} cue {c}");
}

/// `B̂⁻¹ÂB̂⁻¹` from raw data: `B̂ = Y2'P Y2`, `Â = Y2'Z(Z'Z)⁻¹ΣeᵢzᵢzᵢᵀZ'Z⁻¹Z'Y2`.
fn raw_sandwich(data: &rcw::IVData, beta: &DVector<f64>) -> DMatrix<f64> {
    let (z, y1, y2) = (data.z(), data.y1(), data.y2());
    let e = annihilator(z) * (y1 - y2 * beta);
    let mut meat = DMatrix::zeros(z.ncols(), z.ncols());
    for i in 0..data.n() {
        let zi = z.row(i).transpose();
        meat += &zi * zi.transpose() * (e[i] * e[i]);
    }
    let ztz_inv = (z.transpose() * z).try_inverse().unwrap();
    let a = y2.transpose() * z * &ztz_inv * meat * &ztz_inv * z.transpose() * y2;
    let b_inv = (y2.transpose() * projection(z) * y2).try_inverse().unwrap();
    &b_inv * a * &b_inv
}

#[test]
fn sandwich_wald_matches_raw_data_form() {
    for p in [1, 2] {
        let data = iv_sample(12 + p as u64, 150, 4, p, 0.5);
        let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
        let beta_hat = estimate_2sls(&stats).unwrap().beta_hat;
        let beta0 = DVector::from_element(p, 0.7);
        let w = wald_sandwich(&stats, &beta_hat, &beta0).unwrap().statistic;
        let d = &beta_hat - &beta0;
        let oracle = (d.transpose() * raw_sandwich(&data, &beta_hat).try_inverse().unwrap() * &d)[0];
        assert_relative_eq!(w, oracle, max_relative = 1e-8);
    }
}

#[test]
fn efficient_wald_matches_raw_data_form() {
    let data = iv_sample(15, 150, 4, 1, 0.5);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let beta_hat = estimate_gmm2(&stats).unwrap().beta_hat;
    let beta0 = DVector::from_element(1, 0.4);
    let w = wald_efficient(&stats, &beta_hat, &beta0).unwrap().statistic;
    let (z, y1, y2) = (data.z(), data.y1(), data.y2());
    let e = annihilator(z) * (y1 - y2 * &beta_hat);
    let mut meat = DMatrix::zeros(4, 4);
    for i in 0..data.n() {
        let zi = z.row(i).transpose();
        meat += &zi * zi.transpose() * (e[i] * e[i]);
    }
    let g = z.transpose() * y2;
    let d = &beta_hat - &beta0;
    let oracle = (d.transpose() * g.transpose() * meat.try_inverse().unwrap() * &g * &d)[0];
    assert_relative_eq!(w, oracle, max_relative = 1e-8);
}

#[test]
fn efficient_and_sandwich_agree_under_strong_homoskedastic_identification() {
    let data = iv_sample(16, 2000, 4, 1, 1.0);
    let stats = ReducedFormStats::from_data(&data, hc()).unwrap();
    let homo = stats.with_sigma(stats.phi().kronecker(&DMatrix::identity(4, 4)));
    let beta_hat = estimate_2sls(&homo).unwrap().beta_hat;
    let beta0 = &beta_hat + DVector::from_element(1, 0.05);
    let s = wald(&homo, WaldForm::Sandwich, &beta_hat, &beta0, PlugIn::Estimate).unwrap().statistic;
    let e = wald(&homo, WaldForm::Efficient, &beta_hat, &beta0, PlugIn::Estimate).unwrap().statistic;
    assert!((s - e).abs() <= 0.1 * s.abs(), "sandwich {s} efficient {e}");
}

#[test]
fn outcome_shift_moves_every_estimator_by_the_same_amount() {
    let data = iv_sample(17, 150, 4, 1, 0.5);
    let shifted = data.with_outcome(data.y1() + data.y2().column(0) * 2.5).unwrap();
    let a = ReducedFormStats::from_data(&data, hc()).unwrap();
    let b = ReducedFormStats::from_data(&shifted, hc()).unwrap();
    for kind in [EstimatorKind::Tsls, EstimatorKind::Liml, EstimatorKind::Gmm2, EstimatorKind::Cue(CueSettings::default())] {
        let ba = estimate(&a, kind).unwrap().beta_hat[0];
        let bb = estimate(&b, kind).unwrap().beta_hat[0];
        assert!((bb - ba - 2.5).abs() < 1e-6, "{kind}: {ba} → {bb}");
    }
}
