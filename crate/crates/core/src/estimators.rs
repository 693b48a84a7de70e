//! Point estimators written as functions of the standardized reduced form.
//!
//! With `b = (1, -β')'` and `W̄(β)⁻¹ = (b⊗I_k)' Σ̂ (b⊗I_k)`, the GMM criterion
//! is `Q̂(β) = b'R' W̄(β) R b` up to a factor `n`:
//!
//! - 2SLS: `W̄ = I`, so `β̂ = (R2'R2)⁻¹R2'R1`.
//! - LIML: minimizes `b'R'Rb / b'Φ̂b`, the smallest root of
//!   `|R'R - λ nΦ̂| = 0`.
//! - two-step GMM: `W̄` frozen at the 2SLS estimate.
//! - CUE: `W̄(β)` re-evaluated at every candidate (p = 1 only).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::reduced_form::ReducedFormStats;
use crate::wald;

/// Search settings for the continuously updating estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueSettings {
    /// Search interval. `None` means `β̂_2SLS ± 20·SE`.
    pub bounds: Option<(f64, f64)>,
    pub grid_points: usize,
    pub tol: f64,
}

impl Default for CueSettings {
    fn default() -> Self {
        Self {
            bounds: None,
            grid_points: 512,
            tol: 1e-8,
        }
    }
}

impl CueSettings {
    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "CUE bounds must be finite with lower < upper, got ({lo}, {hi})"
                )));
            }
        }
        if self.grid_points < 16 {
            return Err(Error::Config(format!(
                "CUE grid needs at least 16 points, got {}",
                self.grid_points
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("CUE tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum EstimatorKind {
    #[serde(rename = "2sls")]
    Tsls,
    Liml,
    Gmm2,
    Cue(CueSettings),
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Tsls => "2sls",
            EstimatorKind::Liml => "liml",
            EstimatorKind::Gmm2 => "gmm2",
            EstimatorKind::Cue(_) => "cue",
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if let EstimatorKind::Cue(s) = self {
            s.validate()?;
            if p != 1 {
                return Err(Error::Unsupported(format!(
                    "the CUE optimizer supports a single endogenous regressor only (p = 1), data have p = {p}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2sls" | "tsls" => Ok(EstimatorKind::Tsls),
            "liml" => Ok(EstimatorKind::Liml),
            "gmm2" | "gmm" => Ok(EstimatorKind::Gmm2),
            "cue" => Ok(EstimatorKind::Cue(CueSettings::default())),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub beta_hat: DVector<f64>,
    pub kind: EstimatorKind,
    pub liml_lambda: Option<f64>,
    pub cue_criterion: Option<f64>,
    /// CUE only: the grid minimum sat on the edge of the search interval.
    pub boundary: bool,
}

impl EstimateResult {
    fn plain(beta_hat: DVector<f64>, kind: EstimatorKind) -> Self {
        Self {
            beta_hat,
            kind,
            liml_lambda: None,
            cue_criterion: None,
            boundary: false,
        }
    }
}

/// `b = (1, -β')'`.
pub fn b_vector(beta: &DVector<f64>) -> DVector<f64> {
    let mut b = DVector::zeros(beta.len() + 1);
    b[0] = 1.0;
    for (i, v) in beta.iter().enumerate() {
        b[i + 1] = -v;
    }
    b
}

pub fn estimate(stats: &ReducedFormStats, kind: EstimatorKind) -> Result<EstimateResult> {
    kind.validate(stats.p())?;
    match kind {
        EstimatorKind::Tsls => estimate_2sls(stats),
        EstimatorKind::Liml => estimate_liml(stats),
        EstimatorKind::Gmm2 => estimate_gmm2(stats),
        EstimatorKind::Cue(settings) => estimate_cue(stats, settings),
    }
}

fn tsls_beta(stats: &ReducedFormStats) -> Result<DVector<f64>> {
    let r2 = stats.r2();
    let inv = linalg::sym_inverse(&(r2.transpose() * r2), "R2'R2")?;
    Ok(inv * (r2.transpose() * stats.r1()).column(0))
}

pub fn estimate_2sls(stats: &ReducedFormStats) -> Result<EstimateResult> {
    Ok(EstimateResult::plain(tsls_beta(stats)?, EstimatorKind::Tsls))
}

/// Smallest root of `|R'R - λ nΦ̂| = 0`, with the eigenvector normalized to
/// `(1, -β̂')'`. Ties in the smallest root pick the candidate with the
/// smallest `‖β̂‖`.
pub fn estimate_liml(stats: &ReducedFormStats) -> Result<EstimateResult> {
    let m = stats.p() + 1;
    let c = stats.phi() * stats.n() as f64;
    linalg::check_full_rank(&c, "Φ̂")?;
    let chol = c
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Φ̂".into()))?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::Singular("Φ̂".into()))?;
    let a = stats.r().transpose() * stats.r();
    let reduced = linalg::symmetrize(&(&l_inv * a * l_inv.transpose()));
    let eig = nalgebra::SymmetricEigen::new(reduced);
    let lambda_min = eig.eigenvalues.min();
    let scale = eig.eigenvalues.amax().max(1.0);

    let mut best: Option<(f64, DVector<f64>)> = None;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda - lambda_min > 1e-12 * scale {
            continue;
        }
        let v = l_inv.transpose() * eig.eigenvectors.column(j);
        if v[0].abs() < 1e-12 * v.norm() {
            continue;
        }
        let beta = DVector::from_fn(m - 1, |i, _| -v[i + 1] / v[0]);
        let norm = beta.norm();
        if best.as_ref().is_none_or(|(bn, _)| norm < *bn) {
            best = Some((norm, beta));
        }
    }
    let (_, beta_hat) = best.ok_or_else(|| {
        Error::Numerical("LIML eigenvector has a vanishing first coordinate (β̂ at infinity)".into())
    })?;
    Ok(EstimateResult {
        liml_lambda: Some(lambda_min),
        ..EstimateResult::plain(beta_hat, EstimatorKind::Liml)
    })
}

/// `[R2' W̄ R2]⁻¹ R2' W̄ R1` for a given `W̄⁻¹`.
fn weighted_beta(stats: &ReducedFormStats, weight_inv: &DMatrix<f64>) -> Result<DVector<f64>> {
    let w = linalg::sym_inverse(weight_inv, "GMM weight (b⊗I)'Σ̂(b⊗I)")?;
    let r2 = stats.r2();
    let r2w = r2.transpose() * &w;
    let lhs = linalg::sym_inverse(&(&r2w * r2), "R2'W̄R2")?;
    Ok(lhs * (r2w * stats.r1()).column(0))
}

pub fn estimate_gmm2(stats: &ReducedFormStats) -> Result<EstimateResult> {
    let prelim = tsls_beta(stats)?;
    let v = linalg::kron_quad(stats.sigma(), &b_vector(&prelim), stats.k());
    Ok(EstimateResult::plain(weighted_beta(stats, &v)?, EstimatorKind::Gmm2))
}

/// `Q̂(β) = g' V(β)⁻¹ g` with `g = R b` and `V(β) = (b⊗I)'Σ̂(b⊗I)`, p = 1.
/// Non-invertible weights give `+∞`.
pub fn cue_criterion(stats: &ReducedFormStats, beta: f64) -> f64 {
    let b = DVector::from_vec(vec![1.0, -beta]);
    let g = stats.r() * &b;
    let v = linalg::kron_quad(stats.sigma(), &b, stats.k());
    match v.cholesky() {
        Some(ch) => {
            let q = g.dot(&ch.solve(&g));
            if q.is_finite() {
                q
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    }
}

fn cue_interval(stats: &ReducedFormStats, settings: &CueSettings) -> Result<(f64, f64)> {
    let default = tsls_beta(stats).ok().and_then(|b| {
        let se = wald::sandwich_variance(stats, &b).ok()?[(0, 0)].sqrt();
        let (lo, hi) = (b[0] - 20.0 * se, b[0] + 20.0 * se);
        (lo.is_finite() && hi.is_finite() && lo < hi).then_some((lo, hi))
    });
    match (default, settings.bounds) {
        (Some((lo, hi)), Some((ulo, uhi))) => {
            let (clo, chi) = (lo.max(ulo), hi.min(uhi));
            Ok(if clo < chi { (clo, chi) } else { (ulo, uhi) })
        }
        (Some(d), None) => Ok(d),
        (None, Some(u)) => Ok(u),
        (None, None) => Err(Error::Numerical(
            "no finite default CUE search interval (2SLS variance degenerate); supply bounds".into(),
        )),
    }
}

pub fn estimate_cue(stats: &ReducedFormStats, settings: CueSettings) -> Result<EstimateResult> {
    EstimatorKind::Cue(settings).validate(stats.p())?;
    let (lo, hi) = cue_interval(stats, &settings)?;
    let npts = settings.grid_points;
    let step = (hi - lo) / (npts - 1) as f64;
    let grid: Vec<f64> = (0..npts).map(|i| lo + step * i as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&b| cue_criterion(stats, b)).collect();
    let (imin, &qmin) = values
        .iter()
        .enumerate()
        .filter(|(_, q)| q.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Numerical("CUE criterion is non-finite on the whole grid".into()))?;

    // Golden-section refinement on the neighbouring grid cells.
    let mut a = grid[imin.saturating_sub(1)];
    let mut b = grid[(imin + 1).min(npts - 1)];
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = cue_criterion(stats, c);
    let mut fd = cue_criterion(stats, d);
    let mut iters = 0;
    while (b - a) > settings.tol * (1.0 + c.abs()) && iters < 200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = cue_criterion(stats, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = cue_criterion(stats, d);
        }
        iters += 1;
    }
    let mut best = (grid[imin], qmin);
    for (x, f) in [(c, fc), (d, fd)] {
        if f < best.1 {
            best = (x, f);
        }
    }
    Ok(EstimateResult {
        cue_criterion: Some(best.1),
        boundary: imin == 0 || imin == npts - 1,
        ..EstimateResult::plain(DVector::from_element(1, best.0), EstimatorKind::Cue(settings))
    })
}
