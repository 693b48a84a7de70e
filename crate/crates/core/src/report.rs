//! Versioned JSON documents shared by the command-line tool and the
//! bindings. Floats are written with 17 significant digits; infinities
//! become the strings `"inf"` / `"-inf"` and NaN becomes `null`.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};
use serde_json::{json, Map, Value};

use nalgebra::DVector;

use crate::conditional::{
    conditional_wald_test, default_grid, invert_confidence_set, ConditionalResult, ConfidenceSet, GridSpec,
    TestConfig,
};
use crate::data::IVData;
use crate::error::{Error, Result, Stage, StageExt};
use crate::reduced_form::ReducedFormStats;
use crate::estimators::EstimatorKind;
use crate::simulator::ExperimentReport;
use crate::vcov::VcovKind;

pub const SCHEMA_VERSION: u32 = 1;

/// Formatter wrapper that prints every `f64` as `{:.16e}`.
struct FullPrecision<F>(F);

impl<F: Formatter> Formatter for FullPrecision<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn end_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_key(w)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes with full float precision; `pretty` selects two-space indent.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T, pretty: bool) -> String {
    let mut buf = Vec::new();
    let res = if pretty {
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision(PrettyFormatter::new()));
        value.serialize(&mut ser)
    } else {
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision(CompactFormatter));
        value.serialize(&mut ser)
    };
    res.expect("serializing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

/// JSON number, or a sentinel string for infinities.
pub fn num(x: f64) -> Value {
    if x == f64::INFINITY {
        Value::from("inf")
    } else if x == f64::NEG_INFINITY {
        Value::from("-inf")
    } else {
        serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
    }
}

/// Inverse of [`num`].
pub fn parse_num(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) if s == "inf" => Some(f64::INFINITY),
        Value::String(s) if s == "-inf" => Some(f64::NEG_INFINITY),
        Value::Null => Some(f64::NAN),
        _ => None,
    }
}

fn nums<'a>(xs: impl IntoIterator<Item = &'a f64>) -> Value {
    Value::Array(xs.into_iter().map(|&x| num(x)).collect())
}

fn estimator_value(kind: &EstimatorKind) -> Value {
    match kind {
        EstimatorKind::Cue(s) => json!({
            "name": kind.name(),
            "bounds": s.bounds.map(|(lo, hi)| vec![num(lo), num(hi)]),
            "grid_points": s.grid_points,
            "tol": num(s.tol),
        }),
        _ => json!({ "name": kind.name() }),
    }
}

fn vcov_value(kind: &VcovKind) -> Value {
    match *kind {
        VcovKind::Hc { small_sample } => json!({ "kind": kind.name(), "small_sample": small_sample }),
        VcovKind::Hac { bandwidth } => json!({ "kind": kind.name(), "bandwidth": bandwidth }),
        VcovKind::Cluster => json!({ "kind": kind.name() }),
    }
}

/// Settings and dimensions that produced a result.
pub fn provenance(config: &TestConfig, seed: u64, n: usize, k: usize, p: usize) -> Value {
    let spec = config.wald_spec();
    json!({
        "seed": seed,
        "draws": config.n_draws,
        "alpha": num(config.alpha),
        "estimator": estimator_value(&config.estimator),
        "vcov": vcov_value(&config.vcov),
        "wald_form": spec.form,
        "plug_in": spec.plug_in,
        "n": n,
        "k": k,
        "p": p,
    })
}

pub fn test_result_value(r: &ConditionalResult) -> Value {
    let config = TestConfig {
        estimator: r.estimator,
        vcov: r.vcov,
        wald_form: Some(r.wald_form),
        plug_in: r.plug_in,
        alpha: r.alpha,
        n_draws: r.n_draws,
        seed: r.seed,
    };
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": "test",
        "beta0": nums(r.beta0.iter()),
        "beta_hat": nums(r.beta_hat.iter()),
        "conventional_se": nums(r.conventional_se.iter()),
        "wald_stat": num(r.statistic),
        "conventional_critical_value": num(r.conventional_critical_value),
        "conditional_critical_value": num(r.critical_value),
        "p_value_conditional": num(r.p_value_conditional),
        "reject": r.reject,
        "conventional_reject": r.conventional_reject(),
        "n_degenerate": r.n_degenerate,
        "d_hat": nums(r.d_hat.iter()),
        "provenance": provenance(&config, r.seed, r.n, r.k, r.p),
    })
}

pub fn confidence_set_value(cs: &ConfidenceSet, config: &TestConfig, n: usize, k: usize) -> Value {
    let intervals: Vec<Value> = cs.intervals.iter().map(|&(lo, hi)| json!([num(lo), num(hi)])).collect();
    let points: Vec<Value> = cs
        .points
        .iter()
        .map(|g| {
            json!({
                "beta0": num(g.beta0),
                "wald_stat": num(g.statistic),
                "conditional_critical_value": num(g.critical_value),
                "p_value_conditional": num(g.p_value),
                "accepted": g.accepted,
            })
        })
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": "ci",
        "alpha": num(cs.alpha),
        "beta_hat": num(cs.beta_hat),
        "conventional_se": num(cs.conventional_se),
        "intervals": intervals,
        "unbounded_left": cs.unbounded_left,
        "unbounded_right": cs.unbounded_right,
        "unbounded": cs.unbounded(),
        "empty": cs.empty,
        "grid": { "lo": num(cs.grid.lo), "hi": num(cs.grid.hi), "points": cs.grid.points },
        "grid_points": points,
        "provenance": provenance(config, config.seed, n, k, 1),
    })
}

pub fn experiment_value(report: &ExperimentReport) -> Value {
    let mut v = serde_json::to_value(report).expect("report is serializable");
    if let Value::Object(m) = &mut v {
        m.insert("command".into(), Value::from("simulate"));
    }
    v
}

/// Grid request from a front end; unset bounds fall back to the default
/// width around the 2SLS estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GridRequest {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: Option<usize>,
}

impl GridRequest {
    pub fn resolve(&self, data: &IVData, config: &TestConfig) -> Result<GridSpec> {
        let points = self.points.unwrap_or(GridSpec::DEFAULT_POINTS);
        match (self.lo, self.hi) {
            (Some(lo), Some(hi)) => Ok(GridSpec { lo, hi, points }),
            (None, None) => {
                let stats = ReducedFormStats::from_data(data, config.vcov)?;
                default_grid(&stats, points)
            }
            _ => Err(Error::Config("grid bounds must be given together".into())).stage(Stage::Config),
        }
    }
}

/// Document for a single conditional Wald test.
pub fn test_document(data: &IVData, config: &TestConfig, beta0: &[f64]) -> Result<Value> {
    let r = conditional_wald_test(data, config, &DVector::from_column_slice(beta0))?;
    Ok(test_result_value(&r))
}

/// Document for a confidence set by grid inversion.
pub fn ci_document(data: &IVData, config: &TestConfig, grid: &GridRequest) -> Result<Value> {
    if data.p() != 1 {
        return Err(Error::Unsupported(format!(
            "confidence sets by grid inversion need p = 1, data have p = {}",
            data.p()
        )))
        .stage(Stage::Config);
    }
    config.validate().stage(Stage::Config)?;
    let spec = grid.resolve(data, config)?;
    let cs = invert_confidence_set(data, config, Some(spec))?;
    Ok(confidence_set_value(&cs, config, data.n(), data.k()))
}

/// `{"schema_version", "error": {"stage", "kind", "message"}}`.
pub fn error_value(err: &Error) -> Value {
    let mut e = Map::new();
    e.insert("stage".into(), err.stage().map_or(Value::Null, |s| Value::from(s.as_str())));
    e.insert("kind".into(), Value::from(err.kind()));
    e.insert("message".into(), Value::from(err.root().to_string()));
    json!({ "schema_version": SCHEMA_VERSION, "error": Value::Object(e) })
}
