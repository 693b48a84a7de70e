use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::reduced_form::ReducedFormStats;

/// The pair `(R_u, D̂)` at a hypothesized `β0`, with the rotated covariance
/// `Σ̂0 = (B0'⊗I) Σ̂ (B0⊗I)` and its blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct NullConditioning {
    pub beta0: DVector<f64>,
    /// `R_u = R1 - R2 β0`.
    pub r_u: DVector<f64>,
    /// `D̂ = vec(R2) - Σ̂_2u Σ̂_uu⁻¹ R_u`.
    pub d_hat: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    pub sigma_uu: DMatrix<f64>,
    pub sigma_u2: DMatrix<f64>,
    pub sigma_2u: DMatrix<f64>,
    pub sigma_22: DMatrix<f64>,
    pub sigma_uu_half: DMatrix<f64>,
    /// `Σ̂_2u Σ̂_uu⁻¹` (pk×k).
    pub projection: DMatrix<f64>,
}

impl NullConditioning {
    pub fn k(&self) -> usize {
        self.r_u.len()
    }
    pub fn p(&self) -> usize {
        self.beta0.len()
    }

    /// `D̂` computed from an arbitrary `R` with the projection held fixed.
    pub fn conditioning_of(&self, r: &DMatrix<f64>) -> DVector<f64> {
        let p = self.p();
        let r2 = r.columns(1, p);
        let r_u = r.column(0) - r2 * &self.beta0;
        DVector::from_column_slice(r2.clone_owned().as_slice()) - &self.projection * r_u
    }
}

/// `B0 = [[1, 0], [-β0, I_p]]`.
pub fn null_rotation(beta0: &DVector<f64>) -> DMatrix<f64> {
    let p = beta0.len();
    let mut b = DMatrix::identity(p + 1, p + 1);
    for i in 0..p {
        b[(i + 1, 0)] = -beta0[i];
    }
    b
}

pub fn null_transform(stats: &ReducedFormStats, beta0: &DVector<f64>) -> Result<NullConditioning> {
    let (k, p) = (stats.k(), stats.p());
    if beta0.len() != p {
        return Err(Error::Dimension(format!("β0 must have length p = {p}, got {}", beta0.len())));
    }
    let r2 = stats.r2();
    let r_u = stats.r1().column(0) - r2 * beta0;
    let sigma0 = linalg::kron_congruence(stats.sigma(), &null_rotation(beta0), k);
    let sigma_uu = sigma0.view((0, 0), (k, k)).into_owned();
    let sigma_u2 = sigma0.view((0, k), (k, p * k)).into_owned();
    let sigma_2u = sigma0.view((k, 0), (p * k, k)).into_owned();
    let sigma_22 = sigma0.view((k, k), (p * k, p * k)).into_owned();
    let uu_inv = linalg::sym_inverse(&sigma_uu, "Σ̂_uu")?;
    let sigma_uu_half = linalg::sym_sqrt_psd(&sigma_uu, "Σ̂_uu")?;
    let projection = &sigma_2u * uu_inv;
    let d_hat = DVector::from_column_slice(r2.clone_owned().as_slice()) - &projection * &r_u;
    Ok(NullConditioning {
        beta0: beta0.clone(),
        r_u,
        d_hat,
        sigma0,
        sigma_uu,
        sigma_u2,
        sigma_2u,
        sigma_22,
        sigma_uu_half,
        projection,
    })
}

/// Inverse of the null transform for a new `R_u*`:
/// `vec(R2*) = D̂ + Σ̂_2u Σ̂_uu⁻¹ R_u*`, `R1* = R_u* + R2* β0`.
pub fn reconstruct_r(cond: &NullConditioning, r_u_star: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (k, p) = (cond.k(), cond.p());
    if r_u_star.len() != k {
        return Err(Error::Dimension(format!("R_u* must have length k = {k}, got {}", r_u_star.len())));
    }
    let vec_r2 = &cond.d_hat + &cond.projection * r_u_star;
    let r2 = linalg::unvec(&vec_r2, k, p);
    let r1 = r_u_star + &r2 * &cond.beta0;
    let mut r = DMatrix::zeros(k, p + 1);
    r.set_column(0, &r1);
    r.view_mut((0, 1), (k, p)).copy_from(&r2);
    Ok(r)
}
