//! Monte Carlo conditional critical values.
//!
//! Given `D̂ = d`, the null distribution of the Wald statistic is that of
//! `ψ(R_u*, d, Σ̂, Φ̂)` with `R_u* ~ N(0, Σ̂_uu)`. Draw `j` uses
//! `R_u* = Σ̂_uu^{1/2} ζ_j` with `ζ_j` from the counter stream `(seed, j)`,
//! rebuilds `R*` from `(R_u*, d)`, re-estimates `β̂*` with `Σ̂, Φ̂` held fixed
//! and evaluates the same Wald form.

use nalgebra::DVector;
use rayon::prelude::*;

use super::transform::{reconstruct_r, NullConditioning};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorKind};
use crate::reduced_form::ReducedFormStats;
use crate::rng;
use crate::wald::{wald, PlugIn, WaldForm};

/// Estimator, Wald form and variance plug-in defining `ψ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldSpec {
    pub estimator: EstimatorKind,
    pub form: WaldForm,
    pub plug_in: PlugIn,
}

impl WaldSpec {
    pub fn new(estimator: EstimatorKind) -> Self {
        Self {
            estimator,
            form: WaldForm::default_for(&estimator),
            plug_in: PlugIn::Estimate,
        }
    }
}

/// `ψ` evaluated on a full set of statistics.
pub fn psi(stats: &ReducedFormStats, spec: &WaldSpec, beta0: &DVector<f64>) -> Result<f64> {
    let est = estimate(stats, spec.estimator)?;
    Ok(wald(stats, spec.form, &est.beta_hat, beta0, spec.plug_in)?.statistic)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValue {
    /// Empirical `1-α` quantile; `+∞` when the rank lands on degenerate draws.
    pub c_alpha: f64,
    /// `(1 + #{ψ_j ≥ ψ_obs}) / (n_draws + 1)`.
    pub p_value: f64,
    /// Observed statistic the p-value refers to.
    pub observed: f64,
    /// Draws where the estimator or variance was singular (counted as `+∞`).
    pub n_degenerate: usize,
}

pub fn validate_mc(alpha: f64, n_draws: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Config(format!("alpha must lie in (0, 0.5], got {alpha}")));
    }
    if n_draws < 1000 {
        return Err(Error::Config(format!("need at least 1000 draws, got {n_draws}")));
    }
    Ok(())
}

/// Order statistic of rank `⌈(1-α)(N+1)⌉` of an ascending sample; `+∞` when
/// the rank exceeds `N`.
pub fn empirical_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let rank = ((1.0 - alpha) * (n as f64 + 1.0) - 1e-9).ceil() as usize;
    if rank == 0 {
        sorted.first().copied().unwrap_or(f64::INFINITY)
    } else if rank > n {
        f64::INFINITY
    } else {
        sorted[rank - 1]
    }
}

/// Add-one Monte Carlo p-value.
pub fn mc_p_value(draws: &[f64], observed: f64) -> f64 {
    let exceed = draws.iter().filter(|&&v| v >= observed).count();
    (1 + exceed) as f64 / (draws.len() + 1) as f64
}

/// Summarizes simulated draws (`+∞` marks degenerate ones).
pub fn summarize_draws(mut draws: Vec<f64>, observed: f64, alpha: f64) -> Result<CriticalValue> {
    let n_degenerate = draws.iter().filter(|v| !v.is_finite()).count();
    if n_degenerate == draws.len() {
        return Err(Error::Numerical("every simulated draw was degenerate".into()));
    }
    let p_value = mc_p_value(&draws, observed);
    draws.sort_by(f64::total_cmp);
    Ok(CriticalValue {
        c_alpha: empirical_quantile(&draws, alpha),
        p_value,
        observed,
        n_degenerate,
    })
}

/// Raw simulated values `ψ_j`, in draw order.
pub fn simulate_draws(
    cond: &NullConditioning,
    stats: &ReducedFormStats,
    spec: &WaldSpec,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let k = cond.k();
    if stats.k() != k || stats.p() != cond.p() {
        return Err(Error::Dimension("conditioning and statistics dimensions differ".into()));
    }
    if let Some(fast) = ScalarPsi::new(stats, spec, cond) {
        return Ok((0..n_draws)
            .into_par_iter()
            .map_init(
                || Scratch::new(k),
                |scratch, j| fast.draw(seed, j as u64, scratch).unwrap_or(f64::INFINITY),
            )
            .collect());
    }
    Ok((0..n_draws)
        .into_par_iter()
        .map_init(
            || vec![0.0; k],
            |zeta, j| {
                rng::fill_normals(seed, j as u64, zeta);
                let r_u = &cond.sigma_uu_half * DVector::from_column_slice(zeta);
                reconstruct_r(cond, &r_u)
                    .and_then(|r| psi(&stats.with_r(r), spec, &cond.beta0))
                    .ok()
                    .filter(|v| v.is_finite())
                    .unwrap_or(f64::INFINITY)
            },
        )
        .collect())
}

/// Conditional critical value and p-value for the observed statistics at
/// `cond.beta0`.
pub fn simulate_critical_value(
    cond: &NullConditioning,
    stats: &ReducedFormStats,
    spec: &WaldSpec,
    alpha: f64,
    n_draws: usize,
    seed: u64,
) -> Result<CriticalValue> {
    validate_mc(alpha, n_draws)?;
    spec.estimator.validate(stats.p())?;
    let observed = psi(stats, spec, &cond.beta0)?;
    let draws = simulate_draws(cond, stats, spec, n_draws, seed)?;
    summarize_draws(draws, observed, alpha)
}

/// Allocation-free `ψ` for one endogenous regressor with 2SLS or two-step
/// GMM, the configurations the simulation harness runs millions of times.
/// Cross-checked against the general path in tests.
pub(crate) struct ScalarPsi {
    k: usize,
    two_step: bool,
    form: WaldForm,
    plug_in: PlugIn,
    beta0: f64,
    s11: Vec<f64>,
    s12: Vec<f64>,
    s22: Vec<f64>,
    half: Vec<f64>,
    proj: Vec<f64>,
    d_hat: Vec<f64>,
}

pub(crate) struct Scratch {
    zeta: Vec<f64>,
    r1: Vec<f64>,
    r2: Vec<f64>,
    v: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            zeta: vec![0.0; k],
            r1: vec![0.0; k],
            r2: vec![0.0; k],
            v: vec![0.0; k * k],
            tmp: vec![0.0; k],
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place Cholesky of a row-major `k×k` matrix (lower triangle).
fn cholesky(a: &mut [f64], k: usize) -> bool {
    let scale = (0..k).map(|i| a[i * k + i]).fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return false;
    }
    for j in 0..k {
        let mut d = a[j * k + j];
        for m in 0..j {
            d -= a[j * k + m] * a[j * k + m];
        }
        if !(d > 1e-12 * scale) {
            return false;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in (j + 1)..k {
            let mut s = a[i * k + j];
            for m in 0..j {
                s -= a[i * k + m] * a[j * k + m];
            }
            a[i * k + j] = s / d;
        }
    }
    true
}

/// Solves `L L' x = b` in place given the factor from [`cholesky`].
fn chol_solve(l: &[f64], k: usize, x: &mut [f64]) {
    for i in 0..k {
        let mut s = x[i];
        for m in 0..i {
            s -= l[i * k + m] * x[m];
        }
        x[i] = s / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = x[i];
        for m in (i + 1)..k {
            s -= l[m * k + i] * x[m];
        }
        x[i] = s / l[i * k + i];
    }
}

impl ScalarPsi {
    pub(crate) fn new(stats: &ReducedFormStats, spec: &WaldSpec, cond: &NullConditioning) -> Option<Self> {
        if stats.p() != 1 {
            return None;
        }
        let two_step = match spec.estimator {
            EstimatorKind::Tsls => false,
            EstimatorKind::Gmm2 => true,
            _ => return None,
        };
        let k = stats.k();
        let row_major = |a: usize, b: usize| -> Vec<f64> {
            let blk = stats.sigma_block(a, b);
            (0..k * k).map(|i| blk[(i / k, i % k)]).collect()
        };
        let s12a = row_major(0, 1);
        let s21 = row_major(1, 0);
        let s12 = s12a.iter().zip(&s21).map(|(a, b)| a + b).collect();
        let to_row_major = |m: &nalgebra::DMatrix<f64>| -> Vec<f64> {
            (0..m.nrows() * m.ncols())
                .map(|i| m[(i / m.ncols(), i % m.ncols())])
                .collect()
        };
        Some(Self {
            k,
            two_step,
            form: spec.form,
            plug_in: spec.plug_in,
            beta0: cond.beta0[0],
            s11: row_major(0, 0),
            s12,
            s22: row_major(1, 1),
            half: to_row_major(&cond.sigma_uu_half),
            proj: to_row_major(&cond.projection),
            d_hat: cond.d_hat.as_slice().to_vec(),
        })
    }

    /// `V(β) = Σ11 - β(Σ12 + Σ21) + β²Σ22`, row-major into `out`.
    fn weight_inv(&self, beta: f64, out: &mut [f64]) {
        let b2 = beta * beta;
        for (i, o) in out.iter_mut().enumerate().take(self.k * self.k) {
            *o = self.s11[i] - beta * self.s12[i] + b2 * self.s22[i];
        }
    }

    fn quad(&self, m: &[f64], x: &[f64]) -> f64 {
        let k = self.k;
        (0..k).map(|i| x[i] * dot(&m[i * k..(i + 1) * k], x)).sum()
    }

    fn draw(&self, seed: u64, j: u64, s: &mut Scratch) -> Option<f64> {
        let k = self.k;
        rng::fill_normals(seed, j, &mut s.zeta);
        // R_u* in r1 for now
        for i in 0..k {
            s.r1[i] = dot(&self.half[i * k..(i + 1) * k], &s.zeta);
        }
        for i in 0..k {
            s.r2[i] = self.d_hat[i] + dot(&self.proj[i * k..(i + 1) * k], &s.r1);
        }
        for i in 0..k {
            s.r1[i] += s.r2[i] * self.beta0;
        }
        self.eval(s)
    }

    /// `ψ` for the `R` currently stored in `s.r1`, `s.r2`.
    pub(crate) fn eval(&self, s: &mut Scratch) -> Option<f64> {
        let k = self.k;
        let r22 = dot(&s.r2, &s.r2);
        if !(r22 > 0.0) {
            return None;
        }
        let mut beta = dot(&s.r2, &s.r1) / r22;
        if self.two_step {
            self.weight_inv(beta, &mut s.v);
            if !cholesky(&mut s.v, k) {
                return None;
            }
            s.tmp.copy_from_slice(&s.r2);
            chol_solve(&s.v, k, &mut s.tmp);
            let den = dot(&s.r2, &s.tmp);
            if !(den > 0.0) {
                return None;
            }
            beta = dot(&s.r1, &s.tmp) / den;
        }
        let plug = match self.plug_in {
            PlugIn::Estimate => beta,
            PlugIn::Null => self.beta0,
        };
        let d = beta - self.beta0;
        self.weight_inv(plug, &mut s.v);
        let w = match self.form {
            WaldForm::Sandwich => {
                let var = self.quad(&s.v, &s.r2) / (r22 * r22);
                if !(var > 0.0) {
                    return None;
                }
                d * d / var
            }
            WaldForm::Efficient => {
                if !cholesky(&mut s.v, k) {
                    return None;
                }
                s.tmp.copy_from_slice(&s.r2);
                chol_solve(&s.v, k, &mut s.tmp);
                let info = dot(&s.r2, &s.tmp);
                if !(info > 0.0) {
                    return None;
                }
                d * d * info
            }
        };
        w.is_finite().then_some(w)
    }
}
