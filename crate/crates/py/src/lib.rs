//! Python bindings. Every function assembles inputs, calls the core
//! library and returns the same document the command-line tool prints, as
//! nested dicts and lists.

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use rcw::estimators::{CueSettings, EstimatorKind};
use rcw::report::{self, GridRequest};
use rcw::simulator::{size_power_experiment, DGPDesign, ErrorKind, ExperimentConfig};
use rcw::{Error, IVData, PlugIn, Stage, TestConfig, VcovKind, WaldForm};
use serde_json::Value;

create_exception!(rcw, RcwError, PyValueError, "Failure inside the rcw library; carries `stage` and `kind`.");

fn to_py_err(py: Python<'_>, e: &Error) -> PyErr {
    let stage = e.stage().map(|s| s.as_str());
    let msg = match stage {
        Some(s) => format!("[{s}] {}", e.root()),
        None => e.root().to_string(),
    };
    let err = RcwError::new_err(msg);
    let value = err.value(py);
    let _ = value.setattr("stage", stage);
    let _ = value.setattr("kind", e.kind());
    err
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::InStage {
        stage: Stage::Config,
        source: Box::new(Error::Config(msg.into())),
    }
}

fn staged(e: Error, stage: Stage) -> Error {
    match e {
        e @ Error::InStage { .. } => e,
        e => Error::InStage {
            stage,
            source: Box::new(e),
        },
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any().unbind(),
            (None, Some(i)) => i.into_pyobject(py)?.into_any().unbind(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

/// Rows of a 1-D or 2-D numeric sequence.
fn rows(obj: &Bound<'_, PyAny>, what: &str) -> Result<Vec<Vec<f64>>, Error> {
    if let Ok(m) = obj.extract::<Vec<Vec<f64>>>() {
        let width = m.first().map_or(0, Vec::len);
        if m.iter().any(|r| r.len() != width) {
            return Err(staged(Error::Dimension(format!("{what} is ragged")), Stage::Load));
        }
        return Ok(m);
    }
    if let Ok(v) = obj.extract::<Vec<f64>>() {
        return Ok(v.into_iter().map(|x| vec![x]).collect());
    }
    Err(staged(
        Error::Dimension(format!("{what} must be a numeric 1-D or 2-D sequence")),
        Stage::Load,
    ))
}

fn matrix(obj: &Bound<'_, PyAny>, what: &str) -> Result<DMatrix<f64>, Error> {
    let r = rows(obj, what)?;
    let cols = r.first().map_or(0, Vec::len);
    let flat: Vec<f64> = r.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / cols.max(1), cols, &flat))
}

fn assemble(
    y1: &Bound<'_, PyAny>,
    y2: &Bound<'_, PyAny>,
    z: &Bound<'_, PyAny>,
    x: Option<&Bound<'_, PyAny>>,
    intercept: bool,
    cluster: Option<Vec<i64>>,
) -> Result<IVData, Error> {
    let y1 = matrix(y1, "y1")?;
    if y1.ncols() != 1 {
        return Err(staged(Error::Dimension("y1 must be one-dimensional".into()), Stage::Load));
    }
    let y2 = matrix(y2, "y2")?;
    let z = matrix(z, "z")?;
    let n = y1.nrows();
    let mut x = x.map(|x| matrix(x, "x")).transpose()?;
    if intercept {
        x = Some(match x {
            Some(m) => m.insert_column(0, 1.0),
            None => DMatrix::from_element(n, 1, 1.0),
        });
    }
    IVData::new(DVector::from_column_slice(y1.as_slice()), y2, z, x, cluster).map_err(|e| staged(e, Stage::Load))
}

#[allow(clippy::too_many_arguments)]
fn test_config(
    estimator: &str,
    vcov: &str,
    bandwidth: Option<usize>,
    small_sample: bool,
    wald_form: Option<&str>,
    plug_in: &str,
    cue_bounds: Option<(f64, f64)>,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<TestConfig, Error> {
    let estimator = match estimator.parse::<EstimatorKind>().map_err(|e| staged(e, Stage::Config))? {
        EstimatorKind::Cue(_) => EstimatorKind::Cue(CueSettings {
            bounds: cue_bounds,
            ..CueSettings::default()
        }),
        other => other,
    };
    Ok(TestConfig {
        estimator,
        vcov: parse_vcov(vcov, bandwidth, small_sample)?,
        wald_form: wald_form
            .map(|f| f.parse::<WaldForm>())
            .transpose()
            .map_err(|e| staged(e, Stage::Config))?,
        plug_in: match plug_in {
            "estimate" => PlugIn::Estimate,
            "null" => PlugIn::Null,
            other => return Err(config_error(format!("unknown plug-in '{other}'"))),
        },
        alpha,
        n_draws: draws,
        seed,
    })
}

fn parse_vcov(name: &str, bandwidth: Option<usize>, small_sample: bool) -> Result<VcovKind, Error> {
    match (name, bandwidth) {
        ("hac", Some(b)) => Ok(VcovKind::Hac { bandwidth: b }),
        ("hac", None) => Err(config_error("vcov 'hac' needs a bandwidth")),
        (_, Some(_)) => Err(config_error("bandwidth applies only to vcov 'hac'")),
        ("hc", None) => Ok(VcovKind::Hc { small_sample }),
        ("cluster", None) => Ok(VcovKind::Cluster),
        (other, _) => Err(config_error(format!("unknown vcov '{other}'"))),
    }
}

/// Conditional Wald test of `beta = beta0`; returns the `rcw test` document.
#[pyfunction]
#[pyo3(signature = (
    y1, y2, z, beta0, *, x=None, intercept=false, cluster=None, estimator="2sls", vcov="hc",
    bandwidth=None, small_sample=false, wald_form=None, plug_in="estimate", cue_bounds=None,
    alpha=0.05, draws=20_000, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn conditional_wald_test(
    py: Python<'_>,
    y1: &Bound<'_, PyAny>,
    y2: &Bound<'_, PyAny>,
    z: &Bound<'_, PyAny>,
    beta0: Vec<f64>,
    x: Option<&Bound<'_, PyAny>>,
    intercept: bool,
    cluster: Option<Vec<i64>>,
    estimator: &str,
    vcov: &str,
    bandwidth: Option<usize>,
    small_sample: bool,
    wald_form: Option<&str>,
    plug_in: &str,
    cue_bounds: Option<(f64, f64)>,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let run = || -> Result<(TestConfig, IVData), Error> {
        let config = test_config(estimator, vcov, bandwidth, small_sample, wald_form, plug_in, cue_bounds, alpha, draws, seed)?;
        Ok((config, assemble(y1, y2, z, x, intercept, cluster)?))
    };
    let (config, data) = run().map_err(|e| to_py_err(py, &e))?;
    let doc = py
        .detach(|| report::test_document(&data, &config, &beta0))
        .map_err(|e| to_py_err(py, &e))?;
    to_py(py, &doc)
}

/// Confidence set by grid inversion; returns the `rcw ci` document.
#[pyfunction]
#[pyo3(signature = (
    y1, y2, z, *, x=None, intercept=false, cluster=None, estimator="2sls", vcov="hc",
    bandwidth=None, small_sample=false, wald_form=None, plug_in="estimate", cue_bounds=None,
    alpha=0.05, draws=4000, seed=0, grid_lo=None, grid_hi=None, grid_points=None
))]
#[allow(clippy::too_many_arguments)]
fn confidence_set(
    py: Python<'_>,
    y1: &Bound<'_, PyAny>,
    y2: &Bound<'_, PyAny>,
    z: &Bound<'_, PyAny>,
    x: Option<&Bound<'_, PyAny>>,
    intercept: bool,
    cluster: Option<Vec<i64>>,
    estimator: &str,
    vcov: &str,
    bandwidth: Option<usize>,
    small_sample: bool,
    wald_form: Option<&str>,
    plug_in: &str,
    cue_bounds: Option<(f64, f64)>,
    alpha: f64,
    draws: usize,
    seed: u64,
    grid_lo: Option<f64>,
    grid_hi: Option<f64>,
    grid_points: Option<usize>,
) -> PyResult<Py<PyAny>> {
    let run = || -> Result<(TestConfig, IVData), Error> {
        let config = test_config(estimator, vcov, bandwidth, small_sample, wald_form, plug_in, cue_bounds, alpha, draws, seed)?;
        Ok((config, assemble(y1, y2, z, x, intercept, cluster)?))
    };
    let (config, data) = run().map_err(|e| to_py_err(py, &e))?;
    let grid = GridRequest {
        lo: grid_lo,
        hi: grid_hi,
        points: grid_points,
    };
    let doc = py
        .detach(|| report::ci_document(&data, &config, &grid))
        .map_err(|e| to_py_err(py, &e))?;
    to_py(py, &doc)
}

/// Size and power experiment; returns the `rcw simulate` document.
#[pyfunction]
#[pyo3(signature = (
    *, n=400, k=4, mu2=vec![0.0, 4.0, 16.0, 64.0], rho=0.9, error_kind=vec!["homoskedastic".to_string()],
    groups=ErrorKind::DEFAULT_GROUPS, eta=ErrorKind::DEFAULT_ETA, beta_true=0.0, offsets=vec![0.0], reps=1000,
    draws=2000, estimator="2sls", vcov=None, bandwidth=None, wald_form=None, alpha=0.05, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    n: usize,
    k: usize,
    mu2: Vec<f64>,
    rho: f64,
    error_kind: Vec<String>,
    groups: usize,
    eta: f64,
    beta_true: f64,
    offsets: Vec<f64>,
    reps: usize,
    draws: usize,
    estimator: &str,
    vcov: Option<&str>,
    bandwidth: Option<usize>,
    wald_form: Option<&str>,
    alpha: f64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let setup = || -> Result<(Vec<DGPDesign>, ExperimentConfig), Error> {
        let mut designs = Vec::new();
        for name in &error_kind {
            let kind = match name.parse::<ErrorKind>().map_err(|e| staged(e, Stage::Config))? {
                ErrorKind::Clustered { .. } => ErrorKind::Clustered { groups, eta },
                other => other,
            };
            for &c in &mu2 {
                designs.push(DGPDesign {
                    n,
                    k,
                    concentration: c,
                    rho,
                    error_kind: kind,
                    beta_true,
                    seed: 0,
                });
            }
        }
        let config = ExperimentConfig {
            estimator: estimator.parse().map_err(|e| staged(e, Stage::Config))?,
            wald_form: wald_form
                .map(|f| f.parse::<WaldForm>())
                .transpose()
                .map_err(|e| staged(e, Stage::Config))?,
            vcov: vcov.map(|v| parse_vcov(v, bandwidth, false)).transpose()?,
            plug_in: PlugIn::Estimate,
            alpha,
            n_draws: draws,
            master_seed: seed,
        };
        Ok((designs, config))
    };
    let (designs, config) = setup().map_err(|e| to_py_err(py, &e))?;
    let report = py
        .detach(|| size_power_experiment(&designs, &config, &offsets, reps))
        .map_err(|e| to_py_err(py, &staged(e, Stage::Config)))?;
    to_py(py, &report::experiment_value(&report))
}

/// Serializes a result document exactly as the command-line tool does.
#[pyfunction]
fn to_json(py: Python<'_>, doc: &Bound<'_, PyAny>) -> PyResult<String> {
    let json = py.import("json")?;
    let text: String = json.call_method1("dumps", (doc,))?.extract()?;
    let value: Value = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(report::to_json_string(&value, true))
}

#[pymodule]
#[pyo3(name = "rcw")]
fn rcw_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RcwError", m.py().get_type::<RcwError>())?;
    m.add("SCHEMA_VERSION", report::SCHEMA_VERSION)?;
    m.add_function(wrap_pyfunction!(conditional_wald_test, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_set, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(to_json, m)?)?;
    Ok(())
}
