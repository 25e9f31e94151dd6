//! Dataset container, CSV ingestion, robust standardization and sparsity
//! accounting.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column {column}: non-finite value {value:?}")]
    NonFinite {
        row: usize,
        column: String,
        value: String,
    },
    #[error("response column {0} not found")]
    MissingResponse(String),
    #[error("need at least 2 observations, found {0}")]
    TooFewRows(usize),
    #[error("need at least one predictor column")]
    NoPredictors,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Response vector plus candidate-predictor matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Array1<f64>,
    x: Array2<f64>,
    column_names: Option<Vec<String>>,
    response_name: Option<String>,
}

impl Dataset {
    pub fn new(
        y: Array1<f64>,
        x: Array2<f64>,
        column_names: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        let n = y.len();
        if x.nrows() != n {
            return Err(DataError::Shape(format!(
                "response has {n} rows but predictors have {}",
                x.nrows()
            )));
        }
        if n < 2 {
            return Err(DataError::TooFewRows(n));
        }
        if x.ncols() == 0 {
            return Err(DataError::NoPredictors);
        }
        if let Some(names) = &column_names {
            if names.len() != x.ncols() {
                return Err(DataError::Shape(format!(
                    "{} column names for {} columns",
                    names.len(),
                    x.ncols()
                )));
            }
        }
        for (i, v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row: i + 1,
                    column: "response".into(),
                    value: v.to_string(),
                });
            }
        }
        for ((i, j), v) in x.indexed_iter() {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row: i + 1,
                    column: format!("{}", j),
                    value: v.to_string(),
                });
            }
        }
        Ok(Self {
            y,
            x,
            column_names,
            response_name: None,
        })
    }

    pub fn with_response_name(mut self, name: impl Into<String>) -> Self {
        self.response_name = Some(name.into());
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn response_name(&self) -> Option<&str> {
        self.response_name.as_deref()
    }

    /// Name of column `j`, falling back to `x{j+1}`.
    pub fn column_name(&self, j: usize) -> String {
        match &self.column_names {
            Some(names) => names[j].clone(),
            None => format!("x{}", j + 1),
        }
    }

    /// Copy of the columns listed in `columns`, in that order.
    pub fn select_columns(&self, columns: &[usize]) -> Array2<f64> {
        self.x.select(Axis(1), columns)
    }

    /// Same predictors with a replaced response.
    pub fn with_response(&self, y: Array1<f64>) -> Result<Self, DataError> {
        let mut d = Dataset::new(y, self.x.clone(), self.column_names.clone())?;
        d.response_name = self.response_name.clone();
        Ok(d)
    }

    /// Emits the dataset as CSV with the response first, full round-trip precision.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![self.response_name.clone().unwrap_or_else(|| "y".into())];
        header.extend((0..self.p()).map(|j| self.column_name(j)));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.p() + 1);
        for i in 0..self.n() {
            record.clear();
            record.push(format_f64(self.y[i]));
            record.extend(self.x.row(i).iter().map(|v| format_f64(*v)));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        self.write_csv(File::create(path)?)
    }
}

/// Shortest representation that parses back to the identical `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// How the response column is identified in a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Name(String),
    /// Zero-based column position.
    Index(usize),
}

impl ColumnSelector {
    /// Interprets `s` as a header name, or as a zero-based index when it is
    /// an integer that does not match any header.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        }
    }
}

impl std::fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnSelector::Name(s) => write!(f, "{s:?}"),
            ColumnSelector::Index(i) => write!(f, "#{i}"),
        }
    }
}

pub fn load_csv(
    path: impl AsRef<Path>,
    response: &ColumnSelector,
    has_header: bool,
) -> Result<Dataset, DataError> {
    read_csv(File::open(path)?, response, has_header)
}

/// Parses a rectangular numeric table. Rows in error messages are 1-based
/// data rows (the header is not counted).
pub fn read_csv<R: Read>(
    reader: R,
    response: &ColumnSelector,
    has_header: bool,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header: Option<Vec<String>> = if has_header {
        match records.next() {
            Some(r) => Some(r?.iter().map(str::to_string).collect()),
            None => return Err(DataError::TooFewRows(0)),
        }
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    let column_label = |j: usize| -> String {
        match &header {
            Some(h) => h[j].clone(),
            None => format!("{}", j),
        }
    };
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let row = i + 1;
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(DataError::Ragged {
                row,
                expected,
                found: rec.len(),
            });
        }
        let mut values = Vec::with_capacity(expected);
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| DataError::NonNumeric {
                row,
                column: column_label(j),
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row,
                    column: column_label(j),
                    value: field.to_string(),
                });
            }
            values.push(v);
        }
        rows.push(values);
    }

    let width = width.unwrap_or(0);
    let response_col = match response {
        ColumnSelector::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| DataError::MissingResponse(name.clone()))?,
        ColumnSelector::Index(idx) => {
            // A numeric selector may still name a header column.
            let by_name = header
                .as_ref()
                .and_then(|h| h.iter().position(|c| *c == idx.to_string()));
            match by_name {
                Some(j) => j,
                None if *idx < width => *idx,
                None => return Err(DataError::MissingResponse(response.to_string())),
            }
        }
    };
    if width < 2 {
        return Err(DataError::NoPredictors);
    }
    let n = rows.len();
    if n < 2 {
        return Err(DataError::TooFewRows(n));
    }

    let p = width - 1;
    let mut y = Array1::zeros(n);
    let mut x = Array2::zeros((n, p));
    for (i, row) in rows.iter().enumerate() {
        let mut k = 0;
        for (j, v) in row.iter().enumerate() {
            if j == response_col {
                y[i] = *v;
            } else {
                x[[i, k]] = *v;
                k += 1;
            }
        }
    }
    let names = header.as_ref().map(|h| {
        h.iter()
            .enumerate()
            .filter(|(j, _)| *j != response_col)
            .map(|(_, s)| s.clone())
            .collect::<Vec<_>>()
    });
    let response_name = header.as_ref().map(|h| h[response_col].clone());
    let mut d = Dataset::new(y, x, names)?;
    d.response_name = response_name;
    Ok(d)
}

/// Per-column robust location and scale used by [`robust_standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub center: Vec<f64>,
    /// Normal-consistent MAD; 0 exactly for degenerate columns.
    pub scale: Vec<f64>,
    pub degenerate_columns: Vec<usize>,
    pub y_center: f64,
    /// 1 when the response has zero MAD.
    pub y_scale: f64,
}

impl StandardizationStats {
    pub fn is_degenerate(&self, j: usize) -> bool {
        self.scale[j] == 0.0
    }

    /// Maps a standardized matrix back to original units.
    pub fn destandardize(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            if self.is_degenerate(j) {
                continue;
            }
            let (c, s) = (self.center[j], self.scale[j]);
            col.mapv_inplace(|v| v * s + c);
        }
        out
    }
}

/// Column scaling used before penalized selection. Both center columns by
/// their median; the response always uses median and MAD.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Standardization {
    /// Normal-consistent MAD. Zero-inflated columns can get a tiny MAD and
    /// dominate the penalty path.
    MedianMad,
    /// Sample standard deviation; stable under many exact zeros.
    #[default]
    MedianSd,
}

/// Centers every non-degenerate column by its median and divides by its
/// normal-consistent MAD. Columns with zero MAD are left untouched and
/// listed in `degenerate_columns`. The response is treated the same way.
pub fn robust_standardize(d: &Dataset) -> (Dataset, StandardizationStats) {
    standardize(d, Standardization::MedianMad)
}

/// As [`robust_standardize`] with a choice of column scale. Under
/// `MedianSd` a column is degenerate when it is constant up to rounding.
pub fn standardize(d: &Dataset, method: Standardization) -> (Dataset, StandardizationStats) {
    let p = d.p();
    let mut x = d.x.clone();
    let mut center = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    let mut degenerate = Vec::new();
    for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
        let values = col.to_vec();
        let (c, mad) = stats::median_and_mad(&values);
        let s = match method {
            Standardization::MedianMad => mad,
            Standardization::MedianSd => {
                let sd = stats::sample_sd(&values);
                let size = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                if sd > 1e-12 * size {
                    sd
                } else {
                    0.0
                }
            }
        };
        center.push(c);
        if s > 0.0 {
            col.mapv_inplace(|v| (v - c) / s);
            scale.push(s);
        } else {
            scale.push(0.0);
            degenerate.push(j);
        }
    }
    let (y_center, y_mad) = stats::median_and_mad(d.y.as_slice().expect("contiguous"));
    let y_scale = if y_mad > 0.0 { y_mad } else { 1.0 };
    let y = d.y.mapv(|v| (v - y_center) / y_scale);
    let std = Dataset {
        y,
        x,
        column_names: d.column_names.clone(),
        response_name: d.response_name.clone(),
    };
    (
        std,
        StandardizationStats {
            center,
            scale,
            degenerate_columns: degenerate,
            y_center,
            y_scale,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityProfile {
    pub zero_fraction: f64,
    pub zero_rows: usize,
    pub per_column_zero_fraction: Vec<f64>,
}

pub fn sparsity_profile(d: &Dataset) -> SparsityProfile {
    let (n, p) = (d.n(), d.p());
    let per_column: Vec<usize> = d
        .x
        .axis_iter(Axis(1))
        .map(|c| c.iter().filter(|v| **v == 0.0).count())
        .collect();
    let zero_rows = d
        .x
        .axis_iter(Axis(0))
        .filter(|r| r.iter().all(|v| *v == 0.0))
        .count();
    let total: usize = per_column.iter().sum();
    SparsityProfile {
        zero_fraction: total as f64 / (n * p) as f64,
        zero_rows,
        per_column_zero_fraction: per_column.iter().map(|&z| z as f64 / n as f64).collect(),
    }
}
