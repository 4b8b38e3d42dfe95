//! Response/design-matrix container and CSV ingestion.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::indicator::{ModelIndicator, MAX_PREDICTORS};

#[derive(Clone, Debug)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        let d = Self { y, x, column_names };
        validate_dataset(d)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Design submatrix holding the active columns of `gamma`, in index order.
    pub fn submatrix(&self, gamma: &ModelIndicator) -> Result<DMatrix<f64>> {
        if gamma.p() != self.p() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "indicator covers {} columns but the design has {}",
                    gamma.p(),
                    self.p()
                ),
            });
        }
        let cols = gamma.active_indices();
        let mut out = DMatrix::zeros(self.n(), cols.len());
        for (k, &j) in cols.iter().enumerate() {
            out.set_column(k, &self.x.column(j));
        }
        Ok(out)
    }

    /// Reads a dataset from CSV text. The header row is required and the first
    /// column must be named `y`; remaining columns are predictors in file
    /// order. With `add_intercept`, a column of ones named `intercept` is
    /// inserted at position 0.
    pub fn from_csv_reader<R: Read>(reader: R, add_intercept: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::CsvParse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        if headers.is_empty() || &headers[0] != "y" {
            return Err(Error::MissingResponseColumn {
                found: headers.get(0).unwrap_or("").to_string(),
            });
        }
        let mut names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
        if add_intercept {
            names.insert(0, "intercept".to_string());
        }
        let p_file = headers.len() - 1;

        let mut y = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| Error::CsvParse {
                line,
                message: e.to_string(),
            })?;
            if record.len() != p_file + 1 {
                return Err(Error::CsvParse {
                    line,
                    message: format!("expected {} fields, found {}", p_file + 1, record.len()),
                });
            }
            let parse = |field: &str| -> Result<f64> {
                field.parse::<f64>().map_err(|_| Error::CsvParse {
                    line,
                    message: format!("cannot parse `{field}` as a number"),
                })
            };
            y.push(parse(&record[0])?);
            let mut row = Vec::with_capacity(p_file + usize::from(add_intercept));
            if add_intercept {
                row.push(1.0);
            }
            for field in record.iter().skip(1) {
                row.push(parse(field)?);
            }
            rows.push(row);
        }
        let n = rows.len();
        let p = p_file + usize::from(add_intercept);
        if n == 0 || p == 0 {
            return Err(Error::DimensionMismatch {
                context: format!("need n ≥ 1 and p ≥ 1, got n = {n}, p = {p}"),
            });
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::new(DVector::from_vec(y), x, names)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P, add_intercept: bool) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, add_intercept)
    }

    /// Returns a copy with every non-constant predictor column centred and
    /// scaled to unit sample standard deviation. Constant columns (such as an
    /// intercept) are left untouched.
    pub fn zscored(&self) -> Self {
        let n = self.n() as f64;
        let mut x = self.x.clone();
        for j in 0..self.p() {
            let col = self.x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            if var > 0.0 {
                let sd = var.sqrt();
                for i in 0..self.n() {
                    x[(i, j)] = (self.x[(i, j)] - mean) / sd;
                }
            }
        }
        Self {
            y: self.y.clone(),
            x,
            column_names: self.column_names.clone(),
        }
    }

    /// True when every response is a non-negative integer value.
    pub fn is_count_response(&self) -> bool {
        self.y
            .iter()
            .all(|&v| v >= 0.0 && v.fract() == 0.0 && v.is_finite())
    }
}

/// Checks the dataset invariants and returns it unchanged when they hold.
pub fn validate_dataset(d: Dataset) -> Result<Dataset> {
    let (n, p) = (d.x.nrows(), d.x.ncols());
    if n == 0 || p == 0 || d.y.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "y has {} entries but X is {}×{}; need n ≥ 1 and p ≥ 1",
                d.y.len(),
                n,
                p
            ),
        });
    }
    if p > MAX_PREDICTORS {
        return Err(Error::TooManyColumns {
            p,
            max: MAX_PREDICTORS,
        });
    }
    if d.column_names.len() != p {
        return Err(Error::DimensionMismatch {
            context: format!("{} column names for {} columns", d.column_names.len(), p),
        });
    }
    for (i, v) in d.y.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteResponse { row: i });
        }
    }
    for j in 0..p {
        for i in 0..n {
            if !d.x[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    for name in &d.column_names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumnName { name: name.clone() });
        }
    }
    Ok(d)
}
