//! Conditional Wald inference for weakly identified moment models.
//!
//! A model supplies, at the hypothesized `θ0`, a standardized moment vector
//! `h` (k), its gradient `Δh` (k×p) and the joint covariance `Σ` of
//! `(h, vec Δh)`, blocked as `[[Σ_hh, Σ_hθ], [Σ_θh, Σ_θθ]]`. The statistic
//!
//! ```text
//! W = h'Δh [Δh'(b⊗I_k)' Σ (b⊗I_k) Δh]⁻¹ Δh'h,   b = (1, -h'Δh(Δh'Δh)⁻¹)'
//! ```
//!
//! is compared with the `1-α` quantile of its distribution given
//! `D = vec Δh - Σ_θh Σ_hh⁻¹ h`, simulated by drawing `h* ~ N(0, Σ_hh)` and
//! setting `vec Δh* = D + Σ_θh Σ_hh⁻¹ h*` with `Σ` held fixed.
//!
//! For the linear IV model, `h = R1 - R2 β0`, `Δh = -R2` and `Σ` is the
//! rotated reduced-form covariance; see [`LinearIvMoments`].

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::conditional::{null_rotation, summarize_draws, validate_mc};
use crate::error::{Error, Result, Stage, StageExt};
use crate::linalg;
use crate::reduced_form::ReducedFormStats;
use crate::rng;

/// A moment model evaluated at a fixed null value. Implementations must be
/// safe to call concurrently.
pub trait MomentModel: Sync {
    fn theta_dim(&self) -> usize;
    fn moment_dim(&self) -> usize;
    /// Standardized sample moments `h_n(θ0)`.
    fn moments(&self, theta0: &DVector<f64>) -> Result<DVector<f64>>;
    /// Gradient `Δh_n(θ0)`, k×p.
    fn gradient(&self, theta0: &DVector<f64>) -> Result<DMatrix<f64>>;
    /// Joint covariance of `(h, vec Δh)`, (p+1)k square.
    fn covariance(&self, theta0: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// A [`MomentModel`] assembled from closures.
pub struct FnMomentModel<H, G, S> {
    pub theta_dim: usize,
    pub moment_dim: usize,
    pub h: H,
    pub grad: G,
    pub sigma: S,
}

impl<H, G, S> MomentModel for FnMomentModel<H, G, S>
where
    H: Fn(&DVector<f64>) -> DVector<f64> + Sync,
    G: Fn(&DVector<f64>) -> DMatrix<f64> + Sync,
    S: Fn(&DVector<f64>) -> DMatrix<f64> + Sync,
{
    fn theta_dim(&self) -> usize {
        self.theta_dim
    }
    fn moment_dim(&self) -> usize {
        self.moment_dim
    }
    fn moments(&self, theta0: &DVector<f64>) -> Result<DVector<f64>> {
        Ok((self.h)(theta0))
    }
    fn gradient(&self, theta0: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok((self.grad)(theta0))
    }
    fn covariance(&self, theta0: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok((self.sigma)(theta0))
    }
}

/// The linear IV model as a moment model: `h(β) = R1 - R2β`, `Δh = -R2`,
/// and `Σ` the covariance of `(R_u, -vec R2)` under the rotation at `β`.
#[derive(Debug, Clone)]
pub struct LinearIvMoments {
    pub stats: ReducedFormStats,
}

impl MomentModel for LinearIvMoments {
    fn theta_dim(&self) -> usize {
        self.stats.p()
    }
    fn moment_dim(&self) -> usize {
        self.stats.k()
    }
    fn moments(&self, theta0: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.stats.r1().column(0) - self.stats.r2() * theta0)
    }
    fn gradient(&self, _theta0: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(-self.stats.r2().into_owned())
    }
    fn covariance(&self, theta0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (k, p) = (self.stats.k(), self.stats.p());
        let sigma0 = linalg::kron_congruence(self.stats.sigma(), &null_rotation(theta0), k);
        // flip the sign of the gradient blocks
        let mut j = DMatrix::identity((p + 1) * k, (p + 1) * k);
        for i in k..(p + 1) * k {
            j[(i, i)] = -1.0;
        }
        Ok(&j * sigma0 * &j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralConditioning {
    pub theta0: DVector<f64>,
    pub h: DVector<f64>,
    pub grad: DMatrix<f64>,
    /// `D̂ = vec Δh - Σ_θh Σ_hh⁻¹ h`, length kp.
    pub d_hat: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_hh: DMatrix<f64>,
    pub sigma_htheta: DMatrix<f64>,
    pub sigma_thetah: DMatrix<f64>,
    pub sigma_thetatheta: DMatrix<f64>,
    pub sigma_hh_half: DMatrix<f64>,
    /// `Σ_θh Σ_hh⁻¹`.
    pub projection: DMatrix<f64>,
}

fn evaluate(model: &dyn MomentModel, theta0: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (p, k) = (model.theta_dim(), model.moment_dim());
    if theta0.len() != p {
        return Err(Error::Dimension(format!("θ0 must have length {p}, got {}", theta0.len())));
    }
    let h = model.moments(theta0)?;
    let g = model.gradient(theta0)?;
    let s = model.covariance(theta0)?;
    if h.len() != k || g.shape() != (k, p) || s.shape() != ((p + 1) * k, (p + 1) * k) {
        return Err(Error::Dimension(format!(
            "moment model returned h {}, Δh {:?}, Σ {:?}; expected {k}, ({k}, {p}), {m}×{m}",
            h.len(),
            g.shape(),
            s.shape(),
            m = (p + 1) * k
        )));
    }
    Ok((h, g, linalg::symmetrize(&s)))
}

pub fn general_null_transform(model: &dyn MomentModel, theta0: &DVector<f64>) -> Result<GeneralConditioning> {
    let (h, grad, sigma) = evaluate(model, theta0)?;
    let (p, k) = (grad.ncols(), h.len());
    let sigma_hh = sigma.view((0, 0), (k, k)).into_owned();
    let sigma_htheta = sigma.view((0, k), (k, p * k)).into_owned();
    let sigma_thetah = sigma.view((k, 0), (p * k, k)).into_owned();
    let sigma_thetatheta = sigma.view((k, k), (p * k, p * k)).into_owned();
    let hh_inv = linalg::sym_inverse(&sigma_hh, "Σ_hh")?;
    let sigma_hh_half = linalg::sym_sqrt_psd(&sigma_hh, "Σ_hh")?;
    let projection = &sigma_thetah * hh_inv;
    let d_hat = linalg::vec(&grad) - &projection * &h;
    Ok(GeneralConditioning {
        theta0: theta0.clone(),
        h,
        grad,
        d_hat,
        sigma,
        sigma_hh,
        sigma_htheta,
        sigma_thetah,
        sigma_thetatheta,
        sigma_hh_half,
        projection,
    })
}

/// The Wald statistic for given moments, gradient and joint covariance.
pub fn wald_from_moments(h: &DVector<f64>, grad: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let k = h.len();
    let p = grad.ncols();
    let gth = grad.transpose() * h;
    let gtg_inv = linalg::sym_inverse(&(grad.transpose() * grad), "Δh'Δh")?;
    let coef = gtg_inv * &gth;
    let mut b = DVector::zeros(p + 1);
    b[0] = 1.0;
    for i in 0..p {
        b[i + 1] = -coef[i];
    }
    let v = linalg::kron_quad(sigma, &b, k);
    let middle = linalg::symmetrize(&(grad.transpose() * v * grad));
    let inv = linalg::sym_inverse(&middle, "Δh'(b⊗I)'Σ(b⊗I)Δh")?;
    Ok(gth.dot(&(inv * &gth)).max(0.0))
}

pub fn general_wald(model: &dyn MomentModel, theta0: &DVector<f64>) -> Result<f64> {
    let (h, g, s) = evaluate(model, theta0)?;
    wald_from_moments(&h, &g, &s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralConditionalResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value_conditional: f64,
    pub reject: bool,
    pub n_draws: usize,
    pub n_degenerate: usize,
    pub seed: u64,
    pub alpha: f64,
    pub d_hat: DVector<f64>,
}

/// `ψ_j` for each draw, in draw order (`+∞` for degenerate draws).
pub fn general_draws(cond: &GeneralConditioning, n_draws: usize, seed: u64) -> Vec<f64> {
    let (k, p) = (cond.h.len(), cond.grad.ncols());
    (0..n_draws)
        .into_par_iter()
        .map_init(
            || vec![0.0; k],
            |zeta, j| {
                rng::fill_normals(seed, j as u64, zeta);
                let h_star = &cond.sigma_hh_half * DVector::from_column_slice(zeta);
                let vec_g = &cond.d_hat + &cond.projection * &h_star;
                let g_star = linalg::unvec(&vec_g, k, p);
                wald_from_moments(&h_star, &g_star, &cond.sigma)
                    .ok()
                    .filter(|v| v.is_finite())
                    .unwrap_or(f64::INFINITY)
            },
        )
        .collect()
}

pub fn general_conditional_test(
    model: &dyn MomentModel,
    theta0: &DVector<f64>,
    alpha: f64,
    n_draws: usize,
    seed: u64,
) -> Result<GeneralConditionalResult> {
    validate_mc(alpha, n_draws).stage(Stage::Config)?;
    let cond = general_null_transform(model, theta0).stage(Stage::NullTransform)?;
    let statistic = wald_from_moments(&cond.h, &cond.grad, &cond.sigma).stage(Stage::Wald)?;
    let draws = general_draws(&cond, n_draws, seed);
    let cv = summarize_draws(draws, statistic, alpha).stage(Stage::Simulate)?;
    Ok(GeneralConditionalResult {
        statistic,
        critical_value: cv.c_alpha,
        p_value_conditional: cv.p_value,
        reject: statistic > cv.c_alpha,
        n_draws,
        n_degenerate: cv.n_degenerate,
        seed,
        alpha,
        d_hat: cond.d_hat,
    })
}
