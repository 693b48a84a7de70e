//! Robust long-run variance estimators for `n^{-1/2} Σ_i (V_i ⊗ Z_i)`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::IVData;
use crate::error::{Error, Result};
use crate::linalg;

/// Estimator family for `Ω̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VcovKind {
    /// White heteroskedasticity-robust. `small_sample` applies `n/(n-k)`.
    Hc { small_sample: bool },
    /// Bartlett-kernel (Newey-West) with a fixed lag truncation.
    Hac { bandwidth: usize },
    /// One-way cluster-robust by the sample's cluster labels.
    Cluster,
}

impl Default for VcovKind {
    fn default() -> Self {
        VcovKind::Hc {
            small_sample: false,
        }
    }
}

impl VcovKind {
    pub fn name(&self) -> &'static str {
        match self {
            VcovKind::Hc { .. } => "hc",
            VcovKind::Hac { .. } => "hac",
            VcovKind::Cluster => "cluster",
        }
    }

    /// Checks the kind against a sample before any computation.
    pub fn validate(&self, data: &IVData) -> Result<()> {
        match self {
            VcovKind::Hac { bandwidth } if *bandwidth >= data.n() => Err(Error::Config(format!(
                "HAC bandwidth {bandwidth} must be below n = {}",
                data.n()
            ))),
            VcovKind::Cluster if data.cluster_ids().is_none() => Err(Error::Config(
                "cluster variance requested but the data carry no cluster labels".into(),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for VcovKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VcovKind::Hc { small_sample: false } => write!(f, "hc"),
            VcovKind::Hc { small_sample: true } => write!(f, "hc(n/(n-k))"),
            VcovKind::Hac { bandwidth } => write!(f, "hac(bandwidth={bandwidth})"),
            VcovKind::Cluster => write!(f, "cluster"),
        }
    }
}

/// Per-observation scores `V̂_i ⊗ Z_i` as rows of an n×(p+1)k matrix.
fn scores(z: &DMatrix<f64>, residuals: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = (z.nrows(), z.ncols());
    let m = residuals.ncols();
    DMatrix::from_fn(n, m * k, |i, c| residuals[(i, c / k)] * z[(i, c % k)])
}

/// `Ω̂` for the given residuals (typically `V̂ = MY`). `data` must already be
/// partialled; only its instruments and cluster labels are used.
pub fn estimate_omega(
    data: &IVData,
    residuals: &DMatrix<f64>,
    kind: VcovKind,
) -> Result<DMatrix<f64>> {
    let n = data.n();
    if residuals.nrows() != n {
        return Err(Error::Dimension(format!(
            "residuals have {} rows, instruments have {n}",
            residuals.nrows()
        )));
    }
    kind.validate(data)?;
    let s = scores(data.z(), residuals);
    let nf = n as f64;
    let omega = match kind {
        VcovKind::Hc { small_sample } => {
            let mut o = s.transpose() * &s / nf;
            if small_sample {
                o *= nf / (nf - data.k() as f64);
            }
            o
        }
        VcovKind::Hac { bandwidth } => {
            let mut o = s.transpose() * &s / nf;
            for lag in 1..=bandwidth {
                let w = 1.0 - lag as f64 / (bandwidth as f64 + 1.0);
                let lead = s.rows(lag, n - lag);
                let lagged = s.rows(0, n - lag);
                let gamma = lead.transpose() * lagged / nf;
                o += (&gamma + gamma.transpose()) * w;
            }
            o
        }
        VcovKind::Cluster => {
            let ids = data.cluster_ids().expect("validated above");
            let mut sums: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
            let width = s.ncols();
            for (i, id) in ids.iter().enumerate() {
                let acc = sums.entry(*id).or_insert_with(|| vec![0.0; width]);
                for (a, v) in acc.iter_mut().zip(s.row(i).iter()) {
                    *a += v;
                }
            }
            let mut o = DMatrix::zeros(width, width);
            for sg in sums.values() {
                let sg = nalgebra::DVector::from_column_slice(sg);
                o += &sg * sg.transpose();
            }
            o / nf
        }
    };
    Ok(linalg::symmetrize(&omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn sample(n: usize, clusters: Option<Vec<i64>>) -> IVData {
        let z = DMatrix::from_fn(n, 2, |i, j| ((i * 3 + j * 5) % 11) as f64 - 5.0 + j as f64 * 0.1);
        let y1 = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin());
        let y2 = DMatrix::from_fn(n, 1, |i, _| (i as f64 * 1.3).cos());
        IVData::new(y1, y2, z, None, clusters).unwrap()
    }

    #[test]
    fn two_observation_white_sum() {
        // Ω̂ = ½ (1·1 + (-1)²·1) = 1; oracle is the literal two-term sum.
        let v = [1.0, -1.0];
        let zv = [1.0, 1.0];
        let oracle: f64 = v.iter().zip(zv).map(|(a, b)| (a * b) * (a * b)).sum::<f64>() / 2.0;
        let z = DMatrix::from_column_slice(2, 1, &zv);
        let res = DMatrix::from_column_slice(2, 1, &v);
        let s = scores(&z, &res);
        let omega = s.transpose() * &s / 2.0;
        assert_eq!(oracle, 1.0);
        assert_relative_eq!(omega[(0, 0)], oracle, epsilon = 1e-15);
    }

    #[test]
    fn bandwidth_zero_and_singletons_equal_hc() {
        let n = 30;
        let d = sample(n, Some((0..n as i64).collect()));
        let res = DMatrix::from_fn(n, 2, |i, j| ((i + 2 * j) as f64 * 0.37).sin());
        let hc = estimate_omega(&d, &res, VcovKind::default()).unwrap();
        let hac = estimate_omega(&d, &res, VcovKind::Hac { bandwidth: 0 }).unwrap();
        let cl = estimate_omega(&d, &res, VcovKind::Cluster).unwrap();
        assert_relative_eq!(hac, hc, epsilon = 1e-12);
        assert_relative_eq!(cl, hc, epsilon = 1e-12);
    }

    #[test]
    fn hac_brute_force() {
        let n = 25;
        let d = sample(n, None);
        let res = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j) as f64 * 0.21).cos());
        let b = 3;
        let got = estimate_omega(&d, &res, VcovKind::Hac { bandwidth: b }).unwrap();
        // Double sum with Bartlett weights over all pairs |i-j| <= b.
        let s = scores(d.z(), &res);
        let mut want = DMatrix::zeros(s.ncols(), s.ncols());
        for i in 0..n {
            for j in 0..n {
                let lag = i.abs_diff(j);
                if lag <= b {
                    let w = 1.0 - lag as f64 / (b as f64 + 1.0);
                    want += s.row(i).transpose() * s.row(j) * w;
                }
            }
        }
        want /= n as f64;
        assert_relative_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn small_sample_scaling() {
        let n = 20;
        let d = sample(n, None);
        let res = DMatrix::from_fn(n, 2, |i, j| (i as f64 - j as f64) * 0.1);
        let plain = estimate_omega(&d, &res, VcovKind::default()).unwrap();
        let scaled = estimate_omega(&d, &res, VcovKind::Hc { small_sample: true }).unwrap();
        assert_relative_eq!(scaled, plain * (20.0 / 18.0), epsilon = 1e-12);
    }

    #[test]
    fn precondition_errors() {
        let n = 10;
        let d = sample(n, None);
        let res = DMatrix::zeros(n, 2);
        assert!(matches!(
            estimate_omega(&d, &res, VcovKind::Cluster),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            estimate_omega(&d, &res, VcovKind::Hac { bandwidth: 10 }),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            estimate_omega(&d, &DMatrix::zeros(3, 2), VcovKind::default()),
            Err(Error::Dimension(_))
        ));
    }
}
