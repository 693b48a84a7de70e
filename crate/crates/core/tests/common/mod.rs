#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rcw::IVData;

pub fn normals(g: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| g.sample(StandardNormal))
}

/// Heteroskedastic IV sample with first-stage scale `pi_scale` and true
/// coefficient vector of ones.
pub fn iv_sample(seed: u64, n: usize, k: usize, p: usize, pi_scale: f64) -> IVData {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let z = normals(&mut g, n, k);
    let pi = normals(&mut g, k, p) * pi_scale;
    let v = normals(&mut g, n, p);
    let e = normals(&mut g, n, 1);
    let y2 = &z * &pi + &v;
    let u = DVector::from_fn(n, |i, _| (0.6 * v[(i, 0)] + 0.8 * e[(i, 0)]) * (0.5 + z[(i, 0)].abs()));
    let y1 = &y2 * DVector::from_element(p, 1.0) + u;
    IVData::new(y1, y2, z, None, None).unwrap()
}

pub fn projection(z: &DMatrix<f64>) -> DMatrix<f64> {
    let ztz_inv = (z.transpose() * z).try_inverse().unwrap();
    z * ztz_inv * z.transpose()
}

pub fn annihilator(z: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::identity(z.nrows(), z.nrows()) - projection(z)
}

pub fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1e-300)
}
