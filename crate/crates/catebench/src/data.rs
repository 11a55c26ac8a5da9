//! Shared data model: column-major matrices, datasets with treatment and
//! outcome, categorical dummy encoding, fold assignment, and CSV ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Dense column-major matrix of f64. Column-major keeps per-feature scans
/// (split search, encoding) contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn from_cols(cols: Vec<Vec<f64>>) -> Result<Self> {
        let n_cols = cols.len();
        let n_rows = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Data("columns have unequal lengths".into()));
        }
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for c in cols {
            data.extend_from_slice(&c);
        }
        Ok(Matrix { n_rows, n_cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Data("rows have unequal lengths".into()));
        }
        let mut m = Matrix::zeros(n_rows, n_cols);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.n_rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[col * self.n_rows + row] = v;
    }

    pub fn col(&self, col: usize) -> &[f64] {
        &self.data[col * self.n_rows..(col + 1) * self.n_rows]
    }

    /// Column-major backing slice; handy for bitwise equality checks.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn col_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.n_rows..(col + 1) * self.n_rows]
    }

    pub fn push_col(&mut self, col: &[f64]) -> Result<()> {
        if self.n_cols == 0 && self.n_rows == 0 {
            self.n_rows = col.len();
        }
        if col.len() != self.n_rows {
            return Err(Error::Data(format!(
                "pushed column has length {}, expected {}",
                col.len(),
                self.n_rows
            )));
        }
        self.data.extend_from_slice(col);
        self.n_cols += 1;
        Ok(())
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.n_cols).map(|j| self.get(row, j)).collect()
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(rows.len(), self.n_cols);
        for j in 0..self.n_cols {
            let src = self.col(j);
            let dst = m.col_mut(j);
            for (i, &r) in rows.iter().enumerate() {
                dst[i] = src[r];
            }
        }
        m
    }
}

/// A modeling dataset: fully numeric feature matrix (categoricals already
/// dummy-encoded), binary treatment, continuous outcome, and optional
/// simulation ground truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Matrix,
    pub feature_names: Vec<String>,
    /// Original categorical column name -> indices of its dummy columns.
    pub categorical_map: BTreeMap<String, Vec<usize>>,
    pub treatment: Vec<u8>,
    pub outcome: Vec<f64>,
    /// True individual treatment effect, when simulated.
    pub oracle_tau: Option<Vec<f64>>,
    /// Feature columns that truly drive the treatment effect, when simulated.
    pub oracle_predictive_set: Option<BTreeSet<usize>>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        feature_names: Vec<String>,
        categorical_map: BTreeMap<String, Vec<usize>>,
        treatment: Vec<u8>,
        outcome: Vec<f64>,
        oracle_tau: Option<Vec<f64>>,
        oracle_predictive_set: Option<BTreeSet<usize>>,
    ) -> Result<Self> {
        let n = features.n_rows();
        if feature_names.len() != features.n_cols() {
            return Err(Error::Data(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.n_cols()
            )));
        }
        let unique: BTreeSet<&String> = feature_names.iter().collect();
        if unique.len() != feature_names.len() {
            return Err(Error::Data("duplicate feature names".into()));
        }
        if treatment.len() != n || outcome.len() != n {
            return Err(Error::Data("treatment/outcome length mismatch".into()));
        }
        if treatment.iter().any(|&a| a > 1) {
            return Err(Error::Data("treatment must be coded 0/1".into()));
        }
        if n > 0 && (!treatment.contains(&0) || !treatment.contains(&1)) {
            return Err(Error::Data("treatment must contain both arms".into()));
        }
        if let Some(tau) = &oracle_tau {
            if tau.len() != n {
                return Err(Error::Data("oracle_tau length mismatch".into()));
            }
        }
        if let Some(set) = &oracle_predictive_set {
            if set.iter().any(|&j| j >= features.n_cols()) {
                return Err(Error::Data("oracle predictive column out of range".into()));
            }
        }
        Ok(Dataset {
            features,
            feature_names,
            categorical_map,
            treatment,
            outcome,
            oracle_tau,
            oracle_predictive_set,
        })
    }

    pub fn n(&self) -> usize {
        self.features.n_rows()
    }

    pub fn p(&self) -> usize {
        self.features.n_cols()
    }

    pub fn treated_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.treatment[i] == 1).collect()
    }

    pub fn control_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.treatment[i] == 0).collect()
    }

    /// Rows restricted to a subset, carrying oracle columns along.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            feature_names: self.feature_names.clone(),
            categorical_map: self.categorical_map.clone(),
            treatment: rows.iter().map(|&i| self.treatment[i]).collect(),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            oracle_tau: self
                .oracle_tau
                .as_ref()
                .map(|t| rows.iter().map(|&i| t[i]).collect()),
            oracle_predictive_set: self.oracle_predictive_set.clone(),
        }
    }

    /// Writes features, treatment, and outcome. Floats are printed with
    /// enough digits to reparse to the identical bits.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push("treatment");
        header.push("outcome");
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = Vec::with_capacity(self.p() + 2);
            for j in 0..self.p() {
                rec.push(fmt_f64(self.features.get(i, j)));
            }
            rec.push(self.treatment[i].to_string());
            rec.push(fmt_f64(self.outcome[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal representation that reparses to the same f64 bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Drop-first dummy coding for one categorical column. The first entry of
/// `level_order` is the reference level and gets no column.
#[derive(Debug, Clone)]
pub struct DummyEncoder {
    pub column: String,
    pub level_order: Vec<String>,
}

impl DummyEncoder {
    /// Levels default to lexicographic order over the observed values.
    pub fn fit(column: &str, observed: &[String], level_order: Option<&[String]>) -> Result<Self> {
        let seen: BTreeSet<&String> = observed.iter().collect();
        let order: Vec<String> = match level_order {
            Some(order) => {
                for lvl in &seen {
                    if !order.contains(lvl) {
                        return Err(Error::Data(format!(
                            "column {column}: level {lvl:?} missing from configured level order"
                        )));
                    }
                }
                order.to_vec()
            }
            None => seen.into_iter().cloned().collect(),
        };
        if order.len() < 2 {
            return Err(Error::Data(format!(
                "column {column}: needs at least two levels, saw {}",
                order.len()
            )));
        }
        Ok(DummyEncoder { column: column.to_string(), level_order: order })
    }

    pub fn n_columns(&self) -> usize {
        self.level_order.len() - 1
    }

    pub fn column_names(&self) -> Vec<String> {
        self.level_order[1..]
            .iter()
            .map(|lvl| format!("{}={}", self.column, lvl))
            .collect()
    }

    /// Indicator row for one value; errors on a level never fit.
    pub fn encode_value(&self, value: &str) -> Result<Vec<f64>> {
        let pos = self
            .level_order
            .iter()
            .position(|l| l == value)
            .ok_or_else(|| {
                Error::Data(format!("column {}: unseen level {value:?}", self.column))
            })?;
        let mut row = vec![0.0; self.n_columns()];
        if pos > 0 {
            row[pos - 1] = 1.0;
        }
        Ok(row)
    }

    pub fn encode(&self, values: &[String]) -> Result<Matrix> {
        let mut m = Matrix::zeros(values.len(), self.n_columns());
        for (i, v) in values.iter().enumerate() {
            for (j, x) in self.encode_value(v)?.into_iter().enumerate() {
                m.set(i, j, x);
            }
        }
        Ok(m)
    }
}

/// One-shot dummy encoding with an explicit level order.
pub fn dummy_encode(values: &[String], level_order: &[String]) -> Result<Matrix> {
    DummyEncoder::fit("value", values, Some(level_order))?.encode(values)
}

/// Assignment of rows to K cross-validation folds.
#[derive(Debug, Clone)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Random partition into K folds whose sizes differ by at most one.
pub fn split_folds<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("fold count {k} exceeds sample size {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

/// Loads a CSV into a Dataset. Columns where every cell parses as a float
/// are numeric; any other column is treated as categorical and
/// dummy-encoded (drop-first, levels sorted lexicographically unless an
/// order is supplied for that column).
pub fn load_csv<P: AsRef<Path>>(path: P, outcome_col: &str, treatment_col: &str) -> Result<Dataset> {
    load_csv_with_level_orders(path, outcome_col, treatment_col, &BTreeMap::new())
}

pub fn load_csv_with_level_orders<P: AsRef<Path>>(
    path: P,
    outcome_col: &str,
    treatment_col: &str,
    level_orders: &BTreeMap<String, Vec<String>>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let outcome_idx = headers
        .iter()
        .position(|h| h == outcome_col)
        .ok_or_else(|| Error::Data(format!("outcome column {outcome_col:?} not found")))?;
    let treatment_idx = headers
        .iter()
        .position(|h| h == treatment_col)
        .ok_or_else(|| Error::Data(format!("treatment column {treatment_col:?} not found")))?;

    let mut cells: Vec<Vec<String>> = Vec::new();
    for (row_idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::DataAt {
                row: row_idx + 1,
                col: "<record>".into(),
                msg: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        cells.push(rec.iter().map(str::to_string).collect());
    }
    let n = cells.len();
    if n == 0 {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }

    // Reject missing cells anywhere before typing columns.
    for (i, row) in cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if cell.trim().is_empty() {
                return Err(Error::DataAt {
                    row: i + 1,
                    col: headers[j].clone(),
                    msg: "missing value".into(),
                });
            }
        }
    }

    let mut treatment = Vec::with_capacity(n);
    for (i, row) in cells.iter().enumerate() {
        let cell = row[treatment_idx].trim();
        match cell.parse::<f64>() {
            Ok(v) if v == 0.0 => treatment.push(0u8),
            Ok(v) if v == 1.0 => treatment.push(1u8),
            _ => {
                return Err(Error::DataAt {
                    row: i + 1,
                    col: headers[treatment_idx].clone(),
                    msg: format!("treatment must be 0 or 1, found {cell:?}"),
                })
            }
        }
    }

    let mut outcome = Vec::with_capacity(n);
    for (i, row) in cells.iter().enumerate() {
        let cell = row[outcome_idx].trim();
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => outcome.push(v),
            _ => {
                return Err(Error::DataAt {
                    row: i + 1,
                    col: headers[outcome_idx].clone(),
                    msg: format!("outcome must be a finite number, found {cell:?}"),
                })
            }
        }
    }

    let mut features = Matrix::zeros(n, 0);
    let mut feature_names = Vec::new();
    let mut categorical_map = BTreeMap::new();
    for (j, name) in headers.iter().enumerate() {
        if j == outcome_idx || j == treatment_idx {
            continue;
        }
        let raw: Vec<&str> = cells.iter().map(|row| row[j].trim()).collect();
        let parsed: Option<Vec<f64>> = raw
            .iter()
            .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        match parsed {
            Some(col) => {
                feature_names.push(name.clone());
                features.push_col(&col)?;
            }
            None => {
                let values: Vec<String> = raw.iter().map(|s| s.to_string()).collect();
                let enc = DummyEncoder::fit(name, &values, level_orders.get(name).map(Vec::as_slice))?;
                let start = features.n_cols();
                let encoded = enc.encode(&values)?;
                for d in 0..encoded.n_cols() {
                    features.push_col(encoded.col(d))?;
                }
                feature_names.extend(enc.column_names());
                categorical_map.insert(name.clone(), (start..start + enc.n_columns()).collect());
            }
        }
    }

    Dataset::new(features, feature_names, categorical_map, treatment, outcome, None, None)
}

/// Pearson correlation; 0.0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "correlation inputs must align");
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..n {
        let da = a[i] - ma;
        let db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Mean and population-sd-based standard error of a sample.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, (var / n as f64).sqrt())
}
