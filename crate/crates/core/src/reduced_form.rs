//! Standardized reduced-form statistics `R`, `Σ̂`, `Φ̂`.
//!
//! Every estimator and Wald statistic in this crate is a function of these
//! three objects only:
//!
//! ```text
//! R  = (Z'Z)^{-1/2} Z'Y                       k × (p+1), columns [R1 : R2]
//! Σ̂  = (I ⊗ (Z'Z/n)^{-1/2}) Ω̂ (I ⊗ (Z'Z/n)^{-1/2})   (p+1)k square
//! Φ̂  = n^{-1} Y'MY                            (p+1) square
//! ```
//!
//! `vec(R)` stacks columns, so block `(a, b)` of `Σ̂` (each `k×k`) is the
//! covariance between columns `a` and `b` of `R`.

use nalgebra::{DMatrix, DMatrixView};

use crate::data::{partial_out_exogenous, IVData};
use crate::error::{Error, Result, Stage, StageExt};
use crate::linalg;
use crate::vcov::{estimate_omega, VcovKind};

/// Sufficient statistics for conditional Wald inference. Immutable once
/// built.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedFormStats {
    r: DMatrix<f64>,
    sigma: DMatrix<f64>,
    phi: DMatrix<f64>,
    ztz_half_inv: DMatrix<f64>,
    n: usize,
}

impl ReducedFormStats {
    /// Full pipeline from a raw sample: partial out `X`, then `R`, `Ω̂` on the
    /// reduced-form residuals, `Σ̂` and `Φ̂`.
    pub fn from_data(data: &IVData, vcov: VcovKind) -> Result<Self> {
        let data = partial_out_exogenous(data).stage(Stage::Partial)?;
        let (r, ztz_half_inv) = compute_r(&data).stage(Stage::ReducedForm)?;
        let residuals = reduced_form_residuals(&data).stage(Stage::ReducedForm)?;
        let omega = estimate_omega(&data, &residuals, vcov).stage(Stage::ReducedForm)?;
        let sigma = compute_sigma_hat(&omega, &ztz_half_inv, data.n(), data.p(), data.k())
            .stage(Stage::ReducedForm)?;
        let phi = linalg::symmetrize(&(residuals.transpose() * &residuals / data.n() as f64));
        Ok(Self {
            r,
            sigma,
            phi,
            ztz_half_inv,
            n: data.n(),
        })
    }

    /// Assembles statistics directly, e.g. for limit experiments with a known
    /// `Σ`. `ztz_half_inv` is set to the identity.
    pub fn from_parts(r: DMatrix<f64>, sigma: DMatrix<f64>, phi: DMatrix<f64>, n: usize) -> Result<Self> {
        let k = r.nrows();
        let m = r.ncols();
        if m < 2 || k < m - 1 {
            return Err(Error::Dimension(format!("R must be k×(p+1) with k ≥ p ≥ 1, got {k}×{m}")));
        }
        if sigma.shape() != (m * k, m * k) {
            return Err(Error::Dimension(format!(
                "Σ̂ must be {0}×{0}, got {1}×{2}",
                m * k,
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if phi.shape() != (m, m) {
            return Err(Error::Dimension(format!("Φ̂ must be {m}×{m}")));
        }
        Ok(Self {
            r,
            sigma: linalg::symmetrize(&sigma),
            phi: linalg::symmetrize(&phi),
            ztz_half_inv: DMatrix::identity(k, k),
            n,
        })
    }

    /// Copy with `R` replaced; `Σ̂`, `Φ̂` held fixed.
    pub fn with_r(&self, r: DMatrix<f64>) -> Self {
        debug_assert_eq!(r.shape(), self.r.shape());
        Self { r, ..self.clone() }
    }

    /// Copy with `Σ̂` replaced.
    pub fn with_sigma(&self, sigma: DMatrix<f64>) -> Self {
        debug_assert_eq!(sigma.shape(), self.sigma.shape());
        Self {
            sigma: linalg::symmetrize(&sigma),
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.r.nrows()
    }
    pub fn p(&self) -> usize {
        self.r.ncols() - 1
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    pub fn r1(&self) -> DMatrixView<'_, f64> {
        self.r.columns(0, 1)
    }
    pub fn r2(&self) -> DMatrixView<'_, f64> {
        self.r.columns(1, self.p())
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }
    pub fn ztz_half_inv(&self) -> &DMatrix<f64> {
        &self.ztz_half_inv
    }

    /// `k×k` block `(a, b)` of `Σ̂`, indexing columns of `R` (0 = `R1`).
    pub fn sigma_block(&self, a: usize, b: usize) -> DMatrixView<'_, f64> {
        let k = self.k();
        self.sigma.view((a * k, b * k), (k, k))
    }

    /// `Σ̂11` (k×k).
    pub fn sigma_11(&self) -> DMatrixView<'_, f64> {
        self.sigma.view((0, 0), (self.k(), self.k()))
    }
    /// `Σ̂12` (k×pk).
    pub fn sigma_12(&self) -> DMatrixView<'_, f64> {
        let k = self.k();
        self.sigma.view((0, k), (k, self.p() * k))
    }
    /// `Σ̂21` (pk×k).
    pub fn sigma_21(&self) -> DMatrixView<'_, f64> {
        let k = self.k();
        self.sigma.view((k, 0), (self.p() * k, k))
    }
    /// `Σ̂22` (pk×pk).
    pub fn sigma_22(&self) -> DMatrixView<'_, f64> {
        let k = self.k();
        let pk = self.p() * k;
        self.sigma.view((k, k), (pk, pk))
    }
}

fn require_partialled(data: &IVData) -> Result<()> {
    if data.q() > 0 {
        return Err(Error::Config(
            "exogenous covariates must be partialled out first".into(),
        ));
    }
    Ok(())
}

/// `R = (Z'Z)^{-1/2} Z'Y` with the symmetric inverse square root, together
/// with that square root.
pub fn compute_r(data: &IVData) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    require_partialled(data)?;
    let z = data.z();
    let half_inv = linalg::sym_inv_sqrt(&(z.transpose() * z), "Z'Z")?;
    let r = &half_inv * (z.transpose() * data.y());
    Ok((r, half_inv))
}

/// `V̂ = MY`, the residuals of `Y` on `Z`.
pub fn reduced_form_residuals(data: &IVData) -> Result<DMatrix<f64>> {
    require_partialled(data)?;
    linalg::ols_residuals(&data.y(), data.z(), "Z'Z")
}

/// `Σ̂ = (I_{p+1} ⊗ (n⁻¹Z'Z)^{-1/2}) Ω̂ (I_{p+1} ⊗ (n⁻¹Z'Z)^{-1/2})`.
pub fn compute_sigma_hat(
    omega: &DMatrix<f64>,
    ztz_half_inv: &DMatrix<f64>,
    n: usize,
    p: usize,
    k: usize,
) -> Result<DMatrix<f64>> {
    let m = (p + 1) * k;
    if omega.shape() != (m, m) || ztz_half_inv.shape() != (k, k) {
        return Err(Error::Dimension(format!(
            "Ω̂ must be {m}×{m} and (Z'Z)^(-1/2) {k}×{k}, got {:?} and {:?}",
            omega.shape(),
            ztz_half_inv.shape()
        )));
    }
    // (n⁻¹Z'Z)^{-1/2} = √n (Z'Z)^{-1/2}
    let s = ztz_half_inv * (n as f64).sqrt();
    let mut out = DMatrix::zeros(m, m);
    for a in 0..=p {
        for b in 0..=p {
            let block = &s * omega.view((a * k, b * k), (k, k)) * &s;
            out.view_mut((a * k, b * k), (k, k)).copy_from(&block);
        }
    }
    Ok(linalg::symmetrize(&out))
}

/// `Φ̂ = n⁻¹ Y'MY`.
pub fn compute_phi_hat(data: &IVData) -> Result<DMatrix<f64>> {
    let v = reduced_form_residuals(data)?;
    Ok(linalg::symmetrize(&(v.transpose() * &v / data.n() as f64)))
}
