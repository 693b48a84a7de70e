//! Weak-instrument robust conditional Wald inference for linear
//! instrumental-variables models and general moment models.
//!
//! The pipeline runs data → partialling out → reduced-form statistics
//! (`R`, `Σ̂`, `Φ̂`) → point estimate → Wald statistic → null conditioning
//! statistic `D̂` → Monte Carlo critical value → decision. Confidence sets
//! come from inverting the test over a grid of null values.
//!
//! ```no_run
//! use rcw::{conditional_wald_test, load_dataset, ColumnSpec, TestConfig};
//! use nalgebra::DVector;
//!
//! let data = load_dataset("data.csv", &ColumnSpec::new("y", &["x"], &["z1", "z2", "z3"]))?;
//! let res = conditional_wald_test(&data, &TestConfig::default(), &DVector::from_element(1, 0.0))?;
//! println!("W = {}, c = {}, reject = {}", res.statistic, res.critical_value, res.reject);
//! # Ok::<(), rcw::Error>(())
//! ```

// Negated comparisons are used as NaN-rejecting guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditional;
pub mod data;
pub mod error;
pub mod estimators;
pub mod general;
pub mod linalg;
pub mod reduced_form;
pub mod report;
pub mod rng;
pub mod simulator;
pub mod vcov;
pub mod wald;

pub use conditional::{
    chi2_critical_value, conditional_wald_test, invert_confidence_set, null_transform, reconstruct_r,
    simulate_critical_value, ConditionalResult, ConfidenceSet, CriticalValue, GridSpec, NullConditioning,
    PreparedTest, TestConfig, WaldSpec,
};
pub use data::{load_dataset, load_dataset_from_reader, partial_out_exogenous, ColumnSpec, IVData};
pub use error::{Error, Result, Stage};
pub use estimators::{estimate, CueSettings, EstimateResult, EstimatorKind};
pub use general::{general_conditional_test, FnMomentModel, LinearIvMoments, MomentModel};
pub use reduced_form::ReducedFormStats;
pub use simulator::{generate_dgp, size_power_experiment, DGPDesign, ErrorKind, ExperimentConfig, ExperimentReport};
pub use vcov::VcovKind;
pub use wald::{PlugIn, WaldForm};
