use nalgebra::DVector;
use rayon::prelude::*;

use super::{PreparedTest, TestConfig};
use crate::data::IVData;
use crate::error::{Error, Result, Stage, StageExt};
use crate::estimators::estimate_2sls;
use crate::reduced_form::ReducedFormStats;
use crate::rng;
use crate::wald::sandwich_variance;

/// Evenly spaced grid of null values `[lo, hi]` with `points` entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl GridSpec {
    pub const DEFAULT_POINTS: usize = 401;
    pub const DEFAULT_HALF_WIDTH_SE: f64 = 40.0;

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::Config(format!(
                "grid bounds must be finite with lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.points < 21 {
            return Err(Error::Config(format!("grid needs at least 21 points, got {}", self.points)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| if i + 1 == self.points { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub beta0: f64,
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub accepted: bool,
}

/// Accepted region of a grid inversion. Interval endpoints sit at midpoints
/// between adjacent accepted and rejected grid values; an accepted boundary
/// grid value extends its interval to infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub alpha: f64,
    pub beta_hat: f64,
    pub conventional_se: f64,
    pub grid: GridSpec,
    pub points: Vec<GridPoint>,
    pub intervals: Vec<(f64, f64)>,
    pub unbounded_left: bool,
    pub unbounded_right: bool,
    pub empty: bool,
}

impl ConfidenceSet {
    pub fn unbounded(&self) -> bool {
        self.unbounded_left || self.unbounded_right
    }

    pub fn contains(&self, beta: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= beta && beta <= hi)
    }

    fn from_points(alpha: f64, beta_hat: f64, conventional_se: f64, grid: GridSpec, points: Vec<GridPoint>) -> Self {
        let last = points.len() - 1;
        let mut intervals = Vec::new();
        let mut i = 0;
        while i <= last {
            if !points[i].accepted {
                i += 1;
                continue;
            }
            let start = i;
            while i < last && points[i + 1].accepted {
                i += 1;
            }
            let lo = if start == 0 {
                f64::NEG_INFINITY
            } else {
                0.5 * (points[start - 1].beta0 + points[start].beta0)
            };
            let hi = if i == last {
                f64::INFINITY
            } else {
                0.5 * (points[i].beta0 + points[i + 1].beta0)
            };
            intervals.push((lo, hi));
            i += 1;
        }
        Self {
            alpha,
            beta_hat,
            conventional_se,
            grid,
            unbounded_left: points[0].accepted,
            unbounded_right: points[last].accepted,
            empty: intervals.is_empty(),
            points,
            intervals,
        }
    }
}

/// `β̂_2SLS ± 40` conventional 2SLS sandwich standard errors.
pub fn default_grid(stats: &ReducedFormStats, points: usize) -> Result<GridSpec> {
    let tsls = estimate_2sls(stats).stage(Stage::Estimate)?.beta_hat;
    let se = sandwich_variance(stats, &tsls).stage(Stage::Wald)?[(0, 0)].sqrt();
    let half = GridSpec::DEFAULT_HALF_WIDTH_SE * se;
    Ok(GridSpec {
        lo: tsls[0] - half,
        hi: tsls[0] + half,
        points,
    })
}

/// Inverts the conditional Wald test over a grid of null values (p = 1).
/// Grid point `i` draws from seed `derive_seed(seed, [i])`. Without a grid,
/// `β̂_2SLS ± 40` conventional 2SLS standard errors with 401 points is used.
pub fn invert_confidence_set(data: &IVData, config: &TestConfig, grid: Option<GridSpec>) -> Result<ConfidenceSet> {
    if data.p() != 1 {
        return Err(Error::Unsupported(format!(
            "confidence sets by grid inversion need p = 1, data have p = {}",
            data.p()
        )))
        .stage(Stage::Config);
    }
    let prepared = PreparedTest::new(data, *config)?;
    let stats = prepared.stats();
    let grid = match grid {
        Some(g) => g,
        None => default_grid(stats, GridSpec::DEFAULT_POINTS)?,
    };
    grid.validate().stage(Stage::ConfidenceSet)?;
    let values = grid.values();
    let points = values
        .par_iter()
        .enumerate()
        .map(|(i, &b0)| {
            let r = prepared.test_at(&DVector::from_element(1, b0), rng::derive_seed(config.seed, &[i as u64]))?;
            Ok(GridPoint {
                beta0: b0,
                statistic: r.statistic,
                critical_value: r.critical_value,
                p_value: r.p_value_conditional,
                accepted: !r.reject,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let beta_hat = prepared.estimate().beta_hat[0];
    let se = sandwich_or_efficient_se(&prepared);
    Ok(ConfidenceSet::from_points(config.alpha, beta_hat, se, grid, points))
}

fn sandwich_or_efficient_se(prepared: &PreparedTest) -> f64 {
    let spec = prepared.config().wald_spec();
    let b = &prepared.estimate().beta_hat;
    crate::wald::wald(prepared.stats(), spec.form, b, b, crate::wald::PlugIn::Estimate)
        .map(|w| w.conventional_se()[0])
        .unwrap_or(f64::NAN)
}
