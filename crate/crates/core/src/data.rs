//! Raw IV samples: construction, CSV ingestion and covariate partialling.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// A linear IV sample: outcome `y1`, endogenous regressors `y2` (n×p),
/// excluded instruments `z` (n×k), optional exogenous covariates `x` (n×q)
/// and optional integer cluster labels.
#[derive(Debug, Clone, PartialEq)]
pub struct IVData {
    y1: DVector<f64>,
    y2: DMatrix<f64>,
    z: DMatrix<f64>,
    x: Option<DMatrix<f64>>,
    cluster_ids: Option<Vec<i64>>,
}

impl IVData {
    pub fn new(
        y1: DVector<f64>,
        y2: DMatrix<f64>,
        z: DMatrix<f64>,
        x: Option<DMatrix<f64>>,
        cluster_ids: Option<Vec<i64>>,
    ) -> Result<Self> {
        let n = y1.len();
        if y2.nrows() != n || z.nrows() != n {
            return Err(Error::Dimension(format!(
                "y1 has {n} rows, Y2 has {}, Z has {}",
                y2.nrows(),
                z.nrows()
            )));
        }
        let (p, k) = (y2.ncols(), z.ncols());
        if p == 0 {
            return Err(Error::Dimension("at least one endogenous regressor required".into()));
        }
        if k < p {
            return Err(Error::Dimension(format!(
                "under-identified: {k} instruments for {p} endogenous regressors"
            )));
        }
        let q = match &x {
            Some(x) if x.nrows() != n => {
                return Err(Error::Dimension(format!("X has {} rows, expected {n}", x.nrows())))
            }
            Some(x) => x.ncols(),
            None => 0,
        };
        if n <= k + q {
            return Err(Error::Dimension(format!(
                "need n > k + q, got n={n}, k={k}, q={q}"
            )));
        }
        if let Some(ids) = &cluster_ids {
            if ids.len() != n {
                return Err(Error::Dimension(format!(
                    "cluster labels have length {}, expected {n}",
                    ids.len()
                )));
            }
            if ids.iter().collect::<BTreeSet<_>>().len() < 2 {
                return Err(Error::Dimension("need at least 2 distinct cluster labels".into()));
            }
        }
        let finite = y1.iter().chain(y2.iter()).chain(z.iter()).all(|v| v.is_finite())
            && x.as_ref().is_none_or(|x| x.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Numerical("data contain non-finite values".into()));
        }
        linalg::check_full_rank(&(z.transpose() * &z), "Z'Z")?;
        if let Some(x) = &x {
            linalg::check_full_rank(&(x.transpose() * x), "X'X")?;
        }
        Ok(Self {
            y1,
            y2,
            z,
            x,
            cluster_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }
    pub fn p(&self) -> usize {
        self.y2.ncols()
    }
    pub fn k(&self) -> usize {
        self.z.ncols()
    }
    pub fn q(&self) -> usize {
        self.x.as_ref().map_or(0, |x| x.ncols())
    }
    pub fn y1(&self) -> &DVector<f64> {
        &self.y1
    }
    pub fn y2(&self) -> &DMatrix<f64> {
        &self.y2
    }
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }
    pub fn x(&self) -> Option<&DMatrix<f64>> {
        self.x.as_ref()
    }
    pub fn cluster_ids(&self) -> Option<&[i64]> {
        self.cluster_ids.as_deref()
    }

    /// `Y = [y1 : Y2]`, n×(p+1).
    pub fn y(&self) -> DMatrix<f64> {
        let (n, p) = (self.n(), self.p());
        let mut y = DMatrix::zeros(n, p + 1);
        y.set_column(0, &self.y1);
        y.view_mut((0, 1), (n, p)).copy_from(&self.y2);
        y
    }

    /// Same sample with the instruments replaced (used for invariance checks).
    pub fn with_instruments(&self, z: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.y1.clone(),
            self.y2.clone(),
            z,
            self.x.clone(),
            self.cluster_ids.clone(),
        )
    }

    /// Same sample with a new outcome vector.
    pub fn with_outcome(&self, y1: DVector<f64>) -> Result<Self> {
        Self::new(
            y1,
            self.y2.clone(),
            self.z.clone(),
            self.x.clone(),
            self.cluster_ids.clone(),
        )
    }
}

/// Column selection for [`load_dataset`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnSpec {
    pub y: String,
    pub endog: Vec<String>,
    pub instruments: Vec<String>,
    pub exog: Vec<String>,
    pub cluster: Option<String>,
    /// Append a constant column to the exogenous covariates.
    pub intercept: bool,
}

impl ColumnSpec {
    pub fn new(y: &str, endog: &[&str], instruments: &[&str]) -> Self {
        Self {
            y: y.to_string(),
            endog: endog.iter().map(|s| s.to_string()).collect(),
            instruments: instruments.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | ".")
}

/// Reads a header-row CSV file. Rows are numbered from 1 (first data row)
/// in error messages.
pub fn load_dataset(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<IVData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_dataset_from_reader(file, spec)
}

pub fn load_dataset_from_reader<R: Read>(reader: R, spec: &ColumnSpec) -> Result<IVData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    if spec.endog.is_empty() || spec.instruments.is_empty() {
        return Err(Error::Config(
            "need at least one endogenous and one instrument column".into(),
        ));
    }
    let y_idx = index_of(&spec.y)?;
    let endog_idx = spec.endog.iter().map(|c| index_of(c)).collect::<Result<Vec<_>>>()?;
    let iv_idx = spec.instruments.iter().map(|c| index_of(c)).collect::<Result<Vec<_>>>()?;
    let exog_idx = spec.exog.iter().map(|c| index_of(c)).collect::<Result<Vec<_>>>()?;
    let cluster_idx = spec.cluster.as_deref().map(index_of).transpose()?;

    let mut y = Vec::new();
    let mut endog = Vec::new();
    let mut iv = Vec::new();
    let mut exog = Vec::new();
    let mut clusters = Vec::new();

    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |idx: usize| -> Result<&str> {
            let raw = record.get(idx).unwrap_or("");
            if is_missing(raw) {
                return Err(Error::MissingValue {
                    row,
                    column: headers[idx].to_string(),
                });
            }
            Ok(raw)
        };
        let num = |idx: usize| -> Result<f64> {
            let raw = cell(idx)?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonNumeric {
                    row,
                    column: headers[idx].to_string(),
                    value: raw.to_string(),
                }),
            }
        };
        y.push(num(y_idx)?);
        for &j in &endog_idx {
            endog.push(num(j)?);
        }
        for &j in &iv_idx {
            iv.push(num(j)?);
        }
        for &j in &exog_idx {
            exog.push(num(j)?);
        }
        if let Some(j) = cluster_idx {
            let raw = cell(j)?;
            let label = raw.parse::<i64>().map_err(|_| Error::NonNumeric {
                row,
                column: headers[j].to_string(),
                value: raw.to_string(),
            })?;
            clusters.push(label);
        }
    }

    let n = y.len();
    let (p, k) = (endog_idx.len(), iv_idx.len());
    let mut q = exog_idx.len();
    let y1 = DVector::from_vec(y);
    let y2 = DMatrix::from_row_slice(n, p, &endog);
    let z = DMatrix::from_row_slice(n, k, &iv);
    let x = if q > 0 || spec.intercept {
        let mut x = DMatrix::from_row_slice(n, q, &exog);
        if spec.intercept {
            x = x.insert_column(0, 1.0);
            q += 1;
        }
        debug_assert_eq!(x.ncols(), q);
        Some(x)
    } else {
        None
    };
    let cluster_ids = cluster_idx.map(|_| clusters);
    IVData::new(y1, y2, z, x, cluster_ids)
}

/// Replaces `y1`, `Y2` and `Z` by their residuals from a least-squares
/// projection on `X` and drops `X`. A no-op when `X` is absent.
pub fn partial_out_exogenous(data: &IVData) -> Result<IVData> {
    let Some(x) = data.x() else {
        return Ok(data.clone());
    };
    let y = linalg::ols_residuals(&data.y(), x, "X'X")?;
    let z = linalg::ols_residuals(data.z(), x, "X'X")?;
    let (n, p) = (data.n(), data.p());
    let y1 = y.column(0).into_owned();
    let y2 = y.view((0, 1), (n, p)).into_owned();
    linalg::check_full_rank(&(z.transpose() * &z), "partialled Z'Z")?;
    Ok(IVData {
        y1,
        y2,
        z,
        x: None,
        cluster_ids: data.cluster_ids.clone(),
    })
}
