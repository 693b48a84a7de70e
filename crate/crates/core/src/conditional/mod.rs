//! Conditional Wald tests and confidence sets.
//!
//! The observed Wald statistic is compared with the `1-α` quantile of its
//! null distribution conditional on the statistic `D̂`, which is independent
//! of `R_u` and carries all information about instrument strength. The
//! resulting test is similar whatever the strength of the first stage.

mod ci;
mod critical;
mod transform;

pub use ci::{default_grid, invert_confidence_set, ConfidenceSet, GridPoint, GridSpec};
pub use critical::{
    empirical_quantile, mc_p_value, psi, simulate_critical_value, simulate_draws, summarize_draws,
    validate_mc, CriticalValue, WaldSpec,
};
pub use transform::{null_rotation, null_transform, reconstruct_r, NullConditioning};

use nalgebra::DVector;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::IVData;
use crate::error::{Error, Result, Stage, StageExt};
use crate::estimators::{estimate, EstimateResult, EstimatorKind};
use crate::reduced_form::ReducedFormStats;
use crate::vcov::VcovKind;
use crate::wald::{wald, PlugIn, WaldForm};

/// Options shared by the test, confidence-set and simulation entry points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub estimator: EstimatorKind,
    pub vcov: VcovKind,
    /// `None` selects the estimator's natural form.
    pub wald_form: Option<WaldForm>,
    pub plug_in: PlugIn,
    pub alpha: f64,
    pub n_draws: usize,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorKind::Tsls,
            vcov: VcovKind::default(),
            wald_form: None,
            plug_in: PlugIn::Estimate,
            alpha: 0.05,
            n_draws: 20_000,
            seed: 0,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        validate_mc(self.alpha, self.n_draws)
    }

    pub fn wald_spec(&self) -> WaldSpec {
        WaldSpec {
            estimator: self.estimator,
            form: self.wald_form.unwrap_or_else(|| WaldForm::default_for(&self.estimator)),
            plug_in: self.plug_in,
        }
    }
}

/// `χ²_p` quantile at `1-α`.
pub fn chi2_critical_value(p: usize, alpha: f64) -> f64 {
    ChiSquared::new(p as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalResult {
    pub beta0: DVector<f64>,
    pub beta_hat: DVector<f64>,
    pub conventional_se: DVector<f64>,
    pub statistic: f64,
    pub critical_value: f64,
    pub conventional_critical_value: f64,
    pub p_value_conditional: f64,
    pub reject: bool,
    pub n_draws: usize,
    pub n_degenerate: usize,
    pub seed: u64,
    pub alpha: f64,
    pub estimator: EstimatorKind,
    pub vcov: VcovKind,
    pub wald_form: WaldForm,
    pub plug_in: PlugIn,
    pub d_hat: DVector<f64>,
    pub n: usize,
    pub k: usize,
    pub p: usize,
}

impl ConditionalResult {
    /// Rejection by the fixed `χ²` critical value.
    pub fn conventional_reject(&self) -> bool {
        self.statistic > self.conventional_critical_value
    }
}

/// Statistics and point estimate computed once, reusable across null values.
#[derive(Debug, Clone)]
pub struct PreparedTest {
    stats: ReducedFormStats,
    estimate: EstimateResult,
    config: TestConfig,
}

impl PreparedTest {
    pub fn new(data: &IVData, config: TestConfig) -> Result<Self> {
        config.validate().stage(Stage::Config)?;
        config.estimator.validate(data.p()).stage(Stage::Config)?;
        config.vcov.validate(data).stage(Stage::Config)?;
        let stats = ReducedFormStats::from_data(data, config.vcov)?;
        Self::from_stats(stats, config)
    }

    pub fn from_stats(stats: ReducedFormStats, config: TestConfig) -> Result<Self> {
        config.validate().stage(Stage::Config)?;
        config.estimator.validate(stats.p()).stage(Stage::Config)?;
        let estimate = estimate(&stats, config.estimator).stage(Stage::Estimate)?;
        Ok(Self {
            stats,
            estimate,
            config,
        })
    }

    pub fn stats(&self) -> &ReducedFormStats {
        &self.stats
    }
    pub fn estimate(&self) -> &EstimateResult {
        &self.estimate
    }
    pub fn config(&self) -> &TestConfig {
        &self.config
    }

    /// Conditional Wald test of `β = beta0` using draws keyed by `seed`.
    pub fn test_at(&self, beta0: &DVector<f64>, seed: u64) -> Result<ConditionalResult> {
        let spec = self.config.wald_spec();
        let stats = &self.stats;
        if beta0.len() != stats.p() {
            return Err(Error::Dimension(format!(
                "β0 must have length p = {}, got {}",
                stats.p(),
                beta0.len()
            )))
            .stage(Stage::Config);
        }
        let comps = wald(stats, spec.form, &self.estimate.beta_hat, beta0, spec.plug_in).stage(Stage::Wald)?;
        let cond = null_transform(stats, beta0).stage(Stage::NullTransform)?;
        let draws = simulate_draws(&cond, stats, &spec, self.config.n_draws, seed).stage(Stage::Simulate)?;
        let cv = summarize_draws(draws, comps.statistic, self.config.alpha).stage(Stage::Simulate)?;
        Ok(ConditionalResult {
            beta0: beta0.clone(),
            beta_hat: self.estimate.beta_hat.clone(),
            conventional_se: comps.conventional_se(),
            statistic: comps.statistic,
            critical_value: cv.c_alpha,
            conventional_critical_value: chi2_critical_value(stats.p(), self.config.alpha),
            p_value_conditional: cv.p_value,
            reject: comps.statistic > cv.c_alpha,
            n_draws: self.config.n_draws,
            n_degenerate: cv.n_degenerate,
            seed,
            alpha: self.config.alpha,
            estimator: self.config.estimator,
            vcov: self.config.vcov,
            wald_form: spec.form,
            plug_in: spec.plug_in,
            d_hat: cond.d_hat,
            n: stats.n(),
            k: stats.k(),
            p: stats.p(),
        })
    }
}

/// Full pipeline: partial out, reduced form, estimate, Wald, conditional
/// critical value, decision.
pub fn conditional_wald_test(data: &IVData, config: &TestConfig, beta0: &DVector<f64>) -> Result<ConditionalResult> {
    PreparedTest::new(data, *config)?.test_at(beta0, config.seed)
}
