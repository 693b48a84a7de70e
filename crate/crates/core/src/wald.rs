//! Robust Wald statistics in reduced-form coordinates.
//!
//! Sandwich form (2SLS, LIML):
//! `W* = d' [ (R2'R2)⁻¹ R2' V R2 (R2'R2)⁻¹ ]⁻¹ d`
//!
//! Efficient form (two-step GMM, CUE):
//! `W° = d' [ R2' V⁻¹ R2 ] d`
//!
//! where `d = β̂ - β0` and `V = (b̂⊗I_k)' Σ̂ (b̂⊗I_k)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{b_vector, EstimatorKind};
use crate::linalg;
use crate::reduced_form::ReducedFormStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaldForm {
    Sandwich,
    Efficient,
}

impl WaldForm {
    /// Sandwich for 2SLS/LIML, efficient for GMM2/CUE.
    pub fn default_for(kind: &EstimatorKind) -> Self {
        match kind {
            EstimatorKind::Tsls | EstimatorKind::Liml => WaldForm::Sandwich,
            EstimatorKind::Gmm2 | EstimatorKind::Cue(_) => WaldForm::Efficient,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WaldForm::Sandwich => "sandwich",
            WaldForm::Efficient => "efficient",
        }
    }
}

impl fmt::Display for WaldForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaldForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sandwich" => Ok(WaldForm::Sandwich),
            "efficient" => Ok(WaldForm::Efficient),
            other => Err(Error::Config(format!("unknown Wald form '{other}'"))),
        }
    }
}

/// Which coefficient enters `b̂` in the variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlugIn {
    /// The estimator's own `β̂`.
    #[default]
    Estimate,
    /// The hypothesized `β0`.
    Null,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldComponents {
    /// `R2'R2` (sandwich) or `R2'V⁻¹R2` (efficient).
    pub b_hat: DMatrix<f64>,
    /// `R2'VR2`, sandwich form only.
    pub a_hat: Option<DMatrix<f64>>,
    /// `(1, -β')'` used in the variance.
    pub b_vec: DVector<f64>,
    /// Estimated variance of `β̂`.
    pub variance: DMatrix<f64>,
    pub statistic: f64,
}

impl WaldComponents {
    pub fn conventional_se(&self) -> DVector<f64> {
        self.variance.diagonal().map(f64::sqrt)
    }
}

fn check_dims(stats: &ReducedFormStats, beta_hat: &DVector<f64>, beta0: &DVector<f64>) -> Result<()> {
    let p = stats.p();
    if beta_hat.len() != p || beta0.len() != p {
        return Err(Error::Dimension(format!(
            "coefficient vectors must have length p = {p}, got {} and {}",
            beta_hat.len(),
            beta0.len()
        )));
    }
    Ok(())
}

/// `(R2'R2)⁻¹ R2' V R2 (R2'R2)⁻¹` with `V` evaluated at `beta_plug`.
pub fn sandwich_variance(stats: &ReducedFormStats, beta_plug: &DVector<f64>) -> Result<DMatrix<f64>> {
    let r2 = stats.r2();
    let bread = linalg::sym_inverse(&(r2.transpose() * r2), "R2'R2")?;
    let v = linalg::kron_quad(stats.sigma(), &b_vector(beta_plug), stats.k());
    let meat = r2.transpose() * v * r2;
    Ok(linalg::symmetrize(&(&bread * meat * &bread)))
}

pub fn wald_sandwich(stats: &ReducedFormStats, beta_hat: &DVector<f64>, beta0: &DVector<f64>) -> Result<WaldComponents> {
    wald_sandwich_with(stats, beta_hat, beta0, PlugIn::Estimate)
}

pub fn wald_sandwich_with(
    stats: &ReducedFormStats,
    beta_hat: &DVector<f64>,
    beta0: &DVector<f64>,
    plug_in: PlugIn,
) -> Result<WaldComponents> {
    check_dims(stats, beta_hat, beta0)?;
    let plug = match plug_in {
        PlugIn::Estimate => beta_hat,
        PlugIn::Null => beta0,
    };
    let b_vec = b_vector(plug);
    let r2 = stats.r2();
    let b_hat = linalg::symmetrize(&(r2.transpose() * r2));
    let v = linalg::kron_quad(stats.sigma(), &b_vec, stats.k());
    let a_hat = linalg::symmetrize(&(r2.transpose() * v * r2));
    let bread = linalg::sym_inverse(&b_hat, "R2'R2")?;
    let variance = linalg::symmetrize(&(&bread * &a_hat * &bread));
    let prec = linalg::sym_inverse(&variance, "sandwich variance")?;
    let d = beta_hat - beta0;
    let statistic = d.dot(&(prec * &d)).max(0.0);
    Ok(WaldComponents {
        b_hat,
        a_hat: Some(a_hat),
        b_vec,
        variance,
        statistic,
    })
}

pub fn wald_efficient(stats: &ReducedFormStats, beta_hat: &DVector<f64>, beta0: &DVector<f64>) -> Result<WaldComponents> {
    wald_efficient_with(stats, beta_hat, beta0, PlugIn::Estimate)
}

pub fn wald_efficient_with(
    stats: &ReducedFormStats,
    beta_hat: &DVector<f64>,
    beta0: &DVector<f64>,
    plug_in: PlugIn,
) -> Result<WaldComponents> {
    check_dims(stats, beta_hat, beta0)?;
    let plug = match plug_in {
        PlugIn::Estimate => beta_hat,
        PlugIn::Null => beta0,
    };
    let b_vec = b_vector(plug);
    let r2 = stats.r2();
    let v = linalg::kron_quad(stats.sigma(), &b_vec, stats.k());
    let v_inv = linalg::sym_inverse(&v, "(b⊗I)'Σ̂(b⊗I)")?;
    let b_hat = linalg::symmetrize(&(r2.transpose() * v_inv * r2));
    let variance = linalg::sym_inverse(&b_hat, "R2'V⁻¹R2")?;
    let d = beta_hat - beta0;
    let statistic = d.dot(&(&b_hat * &d)).max(0.0);
    Ok(WaldComponents {
        b_hat,
        a_hat: None,
        b_vec,
        variance,
        statistic,
    })
}

pub fn wald(
    stats: &ReducedFormStats,
    form: WaldForm,
    beta_hat: &DVector<f64>,
    beta0: &DVector<f64>,
    plug_in: PlugIn,
) -> Result<WaldComponents> {
    match form {
        WaldForm::Sandwich => wald_sandwich_with(stats, beta_hat, beta0, plug_in),
        WaldForm::Efficient => wald_efficient_with(stats, beta_hat, beta0, plug_in),
    }
}
