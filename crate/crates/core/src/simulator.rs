//! Data-generating processes and size/power experiments.
//!
//! Designs have one endogenous regressor. Instruments are standard normal,
//! `Π = c·(1,…,1)'/√k` with `c = √(μ²/n)` so that `nΠ'E[ZZ']Π/var(v2) = μ²`,
//! and the structural errors `(u, v2)` have unit variances and correlation
//! `ρ`. Heteroskedastic designs scale both errors by `|z_{i1}|`; clustered
//! designs split the sample into `G` contiguous equal clusters and give the
//! errors a common cluster component, so that each error is equicorrelated
//! with correlation `η` within a cluster.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::{PreparedTest, TestConfig};
use crate::data::IVData;
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::linalg;
use crate::reduced_form::ReducedFormStats;
use crate::rng;
use crate::vcov::VcovKind;
use crate::wald::{PlugIn, WaldForm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ErrorKind {
    Homoskedastic,
    Heteroskedastic,
    Clustered { groups: usize, eta: f64 },
}

impl ErrorKind {
    pub const DEFAULT_GROUPS: usize = 25;
    pub const DEFAULT_ETA: f64 = 0.5;

    pub fn clustered() -> Self {
        ErrorKind::Clustered {
            groups: Self::DEFAULT_GROUPS,
            eta: Self::DEFAULT_ETA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ErrorKind::Homoskedastic => "homoskedastic",
            ErrorKind::Heteroskedastic => "heteroskedastic",
            ErrorKind::Clustered { .. } => "clustered",
        }
    }

    /// Robust variance matching the design.
    pub fn natural_vcov(&self) -> VcovKind {
        match self {
            ErrorKind::Clustered { .. } => VcovKind::Cluster,
            _ => VcovKind::default(),
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "homoskedastic" | "hom" => Ok(ErrorKind::Homoskedastic),
            "heteroskedastic" | "het" => Ok(ErrorKind::Heteroskedastic),
            "clustered" | "cluster" => Ok(ErrorKind::clustered()),
            other => Err(Error::Config(format!("unknown error kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DGPDesign {
    pub n: usize,
    pub k: usize,
    /// Concentration parameter `μ²`.
    pub concentration: f64,
    pub rho: f64,
    pub error_kind: ErrorKind,
    pub beta_true: f64,
    pub seed: u64,
}

impl DGPDesign {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n <= self.k + 1 {
            return Err(Error::Config(format!("need k ≥ 1 and n > k + 1, got n={}, k={}", self.n, self.k)));
        }
        if !(self.concentration >= 0.0 && self.concentration.is_finite()) {
            return Err(Error::Config(format!("concentration must be finite and ≥ 0, got {}", self.concentration)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::Config(format!("need |rho| < 1, got {}", self.rho)));
        }
        if !self.beta_true.is_finite() {
            return Err(Error::Config("beta_true must be finite".into()));
        }
        if let ErrorKind::Clustered { groups, eta } = self.error_kind {
            if groups < 2 || groups > self.n {
                return Err(Error::Config(format!("need 2 ≤ G ≤ n clusters, got {groups}")));
            }
            if !(0.0..1.0).contains(&eta) {
                return Err(Error::Config(format!("need eta in [0, 1), got {eta}")));
            }
        }
        Ok(())
    }

    /// First-stage coefficient `Π`.
    pub fn pi(&self) -> DVector<f64> {
        let c = (self.concentration / self.n as f64).sqrt();
        DVector::from_element(self.k, c / (self.k as f64).sqrt())
    }

    /// Homoskedastic 2SLS standard error with unit error variances, `1/μ`.
    pub fn nominal_se(&self) -> f64 {
        1.0 / self.concentration.sqrt()
    }
}

pub fn generate_dgp(design: &DGPDesign) -> Result<IVData> {
    design.validate()?;
    let (n, k) = (design.n, design.k);
    let mut rng = rng::stream(design.seed, 0);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    let pi = design.pi();
    let s_rho = (1.0 - design.rho * design.rho).sqrt();

    let (groups, eta) = match design.error_kind {
        ErrorKind::Clustered { groups, eta } => (groups, eta),
        _ => (1, 0.0),
    };
    let cluster_of = |i: usize| i * groups / n;
    let common: Vec<[f64; 2]> = (0..groups).map(|_| [normal(), normal()]).collect();
    let (w_common, w_own) = (eta.sqrt(), (1.0 - eta).sqrt());

    let mut z = DMatrix::zeros(n, k);
    let mut y1 = DVector::zeros(n);
    let mut y2 = DMatrix::zeros(n, 1);
    for i in 0..n {
        let g = &common[cluster_of(i)];
        for j in 0..k {
            z[(i, j)] = normal();
        }
        let e1 = w_common * g[0] + w_own * normal();
        let e2 = w_common * g[1] + w_own * normal();
        let mut v2 = e1;
        let mut u = design.rho * e1 + s_rho * e2;
        if design.error_kind == ErrorKind::Heteroskedastic {
            let scale = z[(i, 0)].abs();
            v2 *= scale;
            u *= scale;
        }
        let x = z.row(i).dot(&pi.transpose()) + v2;
        y2[(i, 0)] = x;
        y1[i] = x * design.beta_true + u;
    }
    let clusters = matches!(design.error_kind, ErrorKind::Clustered { .. })
        .then(|| (0..n).map(|i| cluster_of(i) as i64).collect());
    IVData::new(y1, y2, z, None, clusters)
}

/// Gaussian limit experiment with known `Σ`: `vec R ~ N(vec R̄, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitExperiment {
    pub r_mean: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub n: usize,
    sigma_half: DMatrix<f64>,
}

impl LimitExperiment {
    pub fn new(r_mean: DMatrix<f64>, sigma: DMatrix<f64>, phi: DMatrix<f64>, n: usize) -> Result<Self> {
        // validates dimensions
        ReducedFormStats::from_parts(r_mean.clone(), sigma.clone(), phi.clone(), n)?;
        let sigma_half = linalg::sym_sqrt_psd(&sigma, "Σ")?;
        Ok(Self {
            r_mean,
            sigma,
            phi,
            n,
            sigma_half,
        })
    }

    /// Homoskedastic design: `R̄ = [μ_R β : μ_R]` with `‖μ_R‖² = μ²` and
    /// `Σ = Φ ⊗ I_k` for the reduced-form error covariance `Φ`.
    pub fn homoskedastic(k: usize, concentration: f64, rho: f64, beta_true: f64, n: usize) -> Result<Self> {
        let mu = DVector::from_element(k, (concentration / k as f64).sqrt());
        let mut r_mean = DMatrix::zeros(k, 2);
        r_mean.set_column(0, &(&mu * beta_true));
        r_mean.set_column(1, &mu);
        let phi = DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0 + 2.0 * rho * beta_true + beta_true * beta_true,
                rho + beta_true,
                rho + beta_true,
                1.0,
            ],
        );
        let sigma = phi.kronecker(&DMatrix::identity(k, k));
        Self::new(r_mean, sigma, phi, n)
    }

    pub fn draw(&self, seed: u64) -> ReducedFormStats {
        let m = self.sigma.nrows();
        let mut xi = vec![0.0; m];
        rng::fill_normals(seed, 0, &mut xi);
        let noise = &self.sigma_half * DVector::from_vec(xi);
        let r = &self.r_mean + linalg::unvec(&noise, self.r_mean.nrows(), self.r_mean.ncols());
        ReducedFormStats::from_parts(r, self.sigma.clone(), self.phi.clone(), self.n).expect("validated at construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub estimator: EstimatorKind,
    pub wald_form: Option<WaldForm>,
    /// `None` picks the design's natural variance (cluster for clustered).
    pub vcov: Option<VcovKind>,
    pub plug_in: PlugIn,
    pub alpha: f64,
    pub n_draws: usize,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorKind::Tsls,
            wald_form: None,
            vcov: None,
            plug_in: PlugIn::Estimate,
            alpha: 0.05,
            n_draws: 2000,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub design: usize,
    pub error_kind: String,
    pub concentration: f64,
    /// Null offset in units of the design's nominal standard error.
    pub offset: f64,
    pub beta0: f64,
    pub reps: usize,
    pub failures: usize,
    pub cw_rate: f64,
    pub cw_mc_se: f64,
    pub conventional_rate: f64,
    pub conventional_mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub designs: Vec<DGPDesign>,
    pub offsets: Vec<f64>,
    pub reps: usize,
    pub rows: Vec<ExperimentRow>,
    pub runtime_secs: f64,
}

impl ExperimentReport {
    pub fn row(&self, design: usize, offset: f64) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.design == design && r.offset == offset)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>6} {:>16} {:>8} {:>8} {:>10} {:>6} {:>5} {:>8} {:>8} {:>8} {:>8}\n",
            "design", "errors", "mu2", "offset", "beta0", "reps", "fail", "cw", "cw_se", "conv", "conv_se"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:>6} {:>16} {:>8.2} {:>8.2} {:>10.4} {:>6} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
                r.design,
                r.error_kind,
                r.concentration,
                r.offset,
                r.beta0,
                r.reps,
                r.failures,
                r.cw_rate,
                r.cw_mc_se,
                r.conventional_rate,
                r.conventional_mc_se
            ));
        }
        out.push_str(&format!(
            "estimator={} alpha={} draws={} reps={} seed={} runtime={:.1}s\n",
            self.config.estimator, self.config.alpha, self.config.n_draws, self.reps, self.config.master_seed, self.runtime_secs
        ));
        out
    }
}

/// Rejection outcome of one replication at one offset; `None` on failure.
type Outcome = Option<(bool, bool)>;

fn run_replication(
    design: &DGPDesign,
    d: usize,
    rep: usize,
    config: &ExperimentConfig,
    beta0s: &[f64],
) -> Vec<Outcome> {
    let seed = config.master_seed;
    let design = DGPDesign {
        seed: rng::derive_seed(seed, &[d as u64, rep as u64, 0]),
        ..*design
    };
    let test_config = TestConfig {
        estimator: config.estimator,
        vcov: config.vcov.unwrap_or_else(|| design.error_kind.natural_vcov()),
        wald_form: config.wald_form,
        plug_in: config.plug_in,
        alpha: config.alpha,
        n_draws: config.n_draws,
        seed: rng::derive_seed(seed, &[d as u64, rep as u64, 1]),
    };
    let prepared = generate_dgp(&design).and_then(|data| PreparedTest::new(&data, test_config));
    let Ok(prepared) = prepared else {
        return vec![None; beta0s.len()];
    };
    beta0s
        .iter()
        .map(|&b0| {
            prepared
                .test_at(&DVector::from_element(1, b0), test_config.seed)
                .ok()
                .map(|r| (r.reject, r.conventional_reject()))
        })
        .collect()
}

/// Runs every design × offset for `reps` fresh datasets. Offset 0 rows
/// measure size; other offsets measure power against
/// `β0 = β_true + offset · nominal_se`. Replication `r` of design `d` uses
/// data seed `derive_seed(master, [d, r, 0])` and draw seed
/// `derive_seed(master, [d, r, 1])`.
pub fn size_power_experiment(
    designs: &[DGPDesign],
    config: &ExperimentConfig,
    offsets: &[f64],
    reps: usize,
) -> Result<ExperimentReport> {
    if reps < 100 {
        return Err(Error::Config(format!("need at least 100 replications, got {reps}")));
    }
    if designs.is_empty() || offsets.is_empty() {
        return Err(Error::Config("need at least one design and one offset".into()));
    }
    crate::conditional::validate_mc(config.alpha, config.n_draws)?;
    config.estimator.validate(1)?;
    let mut beta0s = Vec::with_capacity(designs.len());
    for d in designs {
        d.validate()?;
        let row: Result<Vec<f64>> = offsets
            .iter()
            .map(|&o| {
                if o == 0.0 {
                    Ok(d.beta_true)
                } else if d.concentration > 0.0 {
                    Ok(d.beta_true + o * d.nominal_se())
                } else {
                    Err(Error::Config("nonzero offsets need a positive concentration".into()))
                }
            })
            .collect();
        beta0s.push(row?);
    }

    let start = Instant::now();
    let tasks: Vec<(usize, usize)> = (0..designs.len())
        .flat_map(|d| (0..reps).map(move |r| (d, r)))
        .collect();
    let outcomes: Vec<Vec<Outcome>> = tasks
        .par_iter()
        .map(|&(d, r)| run_replication(&designs[d], d, r, config, &beta0s[d]))
        .collect();

    let mut rows = Vec::new();
    for (d, design) in designs.iter().enumerate() {
        for (o, &offset) in offsets.iter().enumerate() {
            let (mut ok, mut cw, mut conv) = (0usize, 0usize, 0usize);
            for rep_out in &outcomes[d * reps..(d + 1) * reps] {
                if let Some((a, b)) = rep_out[o] {
                    ok += 1;
                    cw += a as usize;
                    conv += b as usize;
                }
            }
            let rate = |x: usize| if ok > 0 { x as f64 / ok as f64 } else { f64::NAN };
            let se = |r: f64| (r * (1.0 - r) / ok as f64).sqrt();
            let (cw_rate, conventional_rate) = (rate(cw), rate(conv));
            rows.push(ExperimentRow {
                design: d,
                error_kind: design.error_kind.name().to_string(),
                concentration: design.concentration,
                offset,
                beta0: beta0s[d][o],
                reps,
                failures: reps - ok,
                cw_rate,
                cw_mc_se: se(cw_rate),
                conventional_rate,
                conventional_mc_se: se(conventional_rate),
            });
        }
    }
    Ok(ExperimentReport {
        schema_version: crate::report::SCHEMA_VERSION,
        config: *config,
        designs: designs.to_vec(),
        offsets: offsets.to_vec(),
        reps,
        rows,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}
