//! Survival datasets, model identifiers and CSV/TSV ingestion.
//!
//! A [`SurvivalDataset`] is always stored in ascending time order. Rows with
//! equal observed times keep their values; they are ranked deterministically
//! (events before censorings, then original row order) so that every risk set
//! is well defined.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted, duplicate-free set of zero-based design column indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelId(Vec<usize>);

impl ModelId {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        ModelId(set.into_iter().collect())
    }

    pub fn empty() -> Self {
        ModelId(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, column: usize) -> bool {
        self.0.binary_search(&column).is_ok()
    }

    /// Position of `column` inside the model, if present.
    pub fn position(&self, column: usize) -> Option<usize> {
        self.0.binary_search(&column).ok()
    }

    pub fn with(&self, column: usize) -> Self {
        let mut out = self.0.clone();
        if let Err(pos) = out.binary_search(&column) {
            out.insert(pos, column);
        }
        ModelId(out)
    }

    pub fn without(&self, column: usize) -> Self {
        ModelId(self.0.iter().copied().filter(|&c| c != column).collect())
    }

    pub fn is_superset_of(&self, columns: &[usize]) -> bool {
        columns.iter().all(|&c| self.contains(c))
    }

    /// Dense 0/1 inclusion vector of length `p`.
    pub fn to_indicator(&self, p: usize) -> Vec<bool> {
        let mut gamma = vec![false; p];
        for &c in &self.0 {
            gamma[c] = true;
        }
        gamma
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// Result of ordering observations by time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeOrder {
    /// `permutation[i]` is the input row placed at sorted position `i`.
    pub permutation: Vec<usize>,
    /// Whether two or more observations share a time.
    pub tied: bool,
}

impl TimeOrder {
    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &r)| i == r)
    }
}

/// Ascending time order; at equal times events precede censorings and the
/// input order breaks any remaining tie.
pub fn sort_by_time(times: &[f64], status: &[bool]) -> TimeOrder {
    let mut permutation: Vec<usize> = (0..times.len()).collect();
    permutation.sort_by(|&a, &b| {
        times[a]
            .total_cmp(&times[b])
            .then_with(|| status[b].cmp(&status[a]))
    });
    let tied = permutation.windows(2).any(|w| times[w[0]] == times[w[1]]);
    TimeOrder { permutation, tied }
}

/// Column centring/scaling applied by [`SurvivalDataset::standardize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub center: f64,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    status: Vec<bool>,
    design: DMatrix<f64>,
    column_names: Vec<String>,
    fixed: Vec<usize>,
    row_order: Vec<usize>,
    tied: bool,
    scales: Option<Vec<ColumnScale>>,
}

impl SurvivalDataset {
    /// Validates the inputs and stores the rows in ascending time order.
    pub fn new(
        times: Vec<f64>,
        status: Vec<bool>,
        design: DMatrix<f64>,
        column_names: Vec<String>,
        fixed: Vec<usize>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::validation("dataset has no rows"));
        }
        if status.len() != n || design.nrows() != n {
            return Err(Error::validation(format!(
                "length mismatch: {} times, {} status values, {} design rows",
                n,
                status.len(),
                design.nrows()
            )));
        }
        if design.ncols() == 0 {
            return Err(Error::validation("design has no covariate columns"));
        }
        if column_names.len() != design.ncols() {
            return Err(Error::validation(format!(
                "{} column names for {} design columns",
                column_names.len(),
                design.ncols()
            )));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::validation(format!(
                "row {i}: observed time {} is not a nonnegative finite number",
                times[i]
            )));
        }
        if !status.iter().any(|&s| s) {
            return Err(Error::validation(
                "all observations are censored; the partial likelihood is constant",
            ));
        }
        for j in 0..design.ncols() {
            if let Some(i) = design.column(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "row {i}, column '{}': non-finite design entry",
                    column_names[j]
                )));
            }
        }
        let fixed: Vec<usize> = ModelId::new(fixed).indices().to_vec();
        if let Some(&bad) = fixed.iter().find(|&&c| c >= design.ncols()) {
            return Err(Error::validation(format!(
                "fixed column index {bad} out of range for {} columns",
                design.ncols()
            )));
        }

        let order = sort_by_time(&times, &status);
        if order.tied {
            warn!("tied observed times found; ranked with events before censorings");
        }
        let dataset = SurvivalDataset {
            times: order.permutation.iter().map(|&r| times[r]).collect(),
            status: order.permutation.iter().map(|&r| status[r]).collect(),
            design: design.select_rows(order.permutation.iter()),
            column_names,
            fixed,
            row_order: order.permutation,
            tied: order.tied,
            scales: None,
        };
        Ok(dataset)
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn p_nonfixed(&self) -> usize {
        self.p() - self.fixed.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Contiguous slice of column `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.design.as_slice()[j * n..(j + 1) * n]
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn fixed_columns(&self) -> &[usize] {
        &self.fixed
    }

    pub fn is_fixed(&self, column: usize) -> bool {
        self.fixed.binary_search(&column).is_ok()
    }

    /// Columns that the search may add or remove.
    pub fn free_columns(&self) -> Vec<usize> {
        (0..self.p()).filter(|&c| !self.is_fixed(c)).collect()
    }

    /// The model made of the fixed columns only.
    pub fn fixed_model(&self) -> ModelId {
        ModelId(self.fixed.clone())
    }

    /// Original input row for each stored (sorted) row.
    pub fn row_order(&self) -> &[usize] {
        &self.row_order
    }

    pub fn has_ties(&self) -> bool {
        self.tied
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    pub fn censoring_fraction(&self) -> f64 {
        1.0 - self.n_events() as f64 / self.n() as f64
    }

    pub fn scales(&self) -> Option<&[ColumnScale]> {
        self.scales.as_deref()
    }

    /// Checks that `model` refers to existing columns and keeps every fixed column.
    pub fn check_model(&self, model: &ModelId) -> Result<()> {
        if let Some(&bad) = model.indices().iter().find(|&&c| c >= self.p()) {
            return Err(Error::validation(format!(
                "model column {bad} out of range for p = {}",
                self.p()
            )));
        }
        if !model.is_superset_of(&self.fixed) {
            return Err(Error::validation(format!(
                "model {model} drops a fixed column"
            )));
        }
        Ok(())
    }

    /// `n x |model|` design block, columns in model order.
    pub fn submatrix(&self, model: &ModelId) -> Result<DMatrix<f64>> {
        if let Some(&bad) = model.indices().iter().find(|&&c| c >= self.p()) {
            return Err(Error::validation(format!(
                "model column {bad} out of range for p = {}",
                self.p()
            )));
        }
        Ok(self.design.select_columns(model.indices()))
    }

    /// Restriction to a subset of the stored rows; `rows` index the sorted
    /// order and the result is re-sorted.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<SurvivalDataset> {
        let mut rows = rows.to_vec();
        rows.sort_unstable();
        let times = rows.iter().map(|&r| self.times[r]).collect();
        let status = rows.iter().map(|&r| self.status[r]).collect();
        let design = self.design.select_rows(rows.iter());
        let mut out = SurvivalDataset::new(
            times,
            status,
            design,
            self.column_names.clone(),
            self.fixed.clone(),
        )?;
        out.row_order = out.row_order.iter().map(|&i| self.row_order[rows[i]]).collect();
        out.scales = self.scales.clone();
        Ok(out)
    }

    /// Centres and scales every non-fixed column to unit sample variance.
    /// Constant columns are only centred.
    pub fn standardize(&mut self) {
        let n = self.n() as f64;
        let mut scales = Vec::with_capacity(self.p());
        for j in 0..self.p() {
            if self.is_fixed(j) {
                scales.push(ColumnScale {
                    center: 0.0,
                    scale: 1.0,
                });
                continue;
            }
            let mut col = self.design.column_mut(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            col.apply(|v| *v = (*v - mean) / sd);
            scales.push(ColumnScale {
                center: mean,
                scale: sd,
            });
        }
        self.scales = Some(scales);
    }
}

/// Column roles for tabular input.
#[derive(Debug, Clone)]
pub struct Schema {
    pub time_col: String,
    pub status_col: String,
    pub fixed_cols: Vec<String>,
    /// Field delimiter; `None` picks tab for `.tsv`/`.tab` paths and comma otherwise.
    pub delimiter: Option<u8>,
}

impl Schema {
    pub fn new(time_col: impl Into<String>, status_col: impl Into<String>) -> Self {
        Schema {
            time_col: time_col.into(),
            status_col: status_col.into(),
            fixed_cols: Vec::new(),
            delimiter: None,
        }
    }

    pub fn with_fixed<S: Into<String>>(mut self, cols: impl IntoIterator<Item = S>) -> Self {
        self.fixed_cols = cols.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = Some(delimiter);
        self
    }
}

/// Reads a CSV/TSV file; see [`ingest_reader`].
pub fn ingest_path(path: impl AsRef<Path>, schema: &Schema) -> Result<SurvivalDataset> {
    let path = path.as_ref();
    let delimiter = schema.delimiter.unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => b'\t',
            _ => b',',
        }
    });
    let file = std::fs::File::open(path)?;
    ingest_reader(file, &schema.clone().with_delimiter(delimiter))
}

enum RawColumn {
    Numeric(Vec<f64>),
    Text(Vec<String>),
}

/// Parses delimited text with a header row.
///
/// Every column other than the time and status columns becomes a covariate,
/// in header order. Fixed covariates with non-numeric values are expanded to
/// reference-coded indicators (first level in sorted order is the
/// reference); non-numeric free covariates are rejected.
pub fn ingest_reader<R: Read>(source: R, schema: &Schema) -> Result<SurvivalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter.unwrap_or(b','))
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("column '{name}' not found in header")))
    };
    let time_idx = find(&schema.time_col)?;
    let status_idx = find(&schema.status_col)?;
    let covariate_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != time_idx && i != status_idx)
        .collect();
    if covariate_idx.is_empty() {
        return Err(Error::validation("no covariate columns"));
    }
    for f in &schema.fixed_cols {
        let i = find(f)?;
        if i == time_idx || i == status_idx {
            return Err(Error::validation(format!(
                "fixed column '{f}' is the time or status column"
            )));
        }
    }

    let mut times = Vec::new();
    let mut status = Vec::new();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); covariate_idx.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::Cell {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let cell = |i: usize| -> Result<&str> {
            let v = &record[i];
            if v.is_empty() || v.eq_ignore_ascii_case("na") {
                Err(Error::Cell {
                    row,
                    column: headers[i].clone(),
                    message: "missing value".into(),
                })
            } else {
                Ok(v)
            }
        };
        let t = parse_finite(cell(time_idx)?).ok_or_else(|| Error::Cell {
            row,
            column: headers[time_idx].clone(),
            message: "time is not a finite number".into(),
        })?;
        if t < 0.0 {
            return Err(Error::Cell {
                row,
                column: headers[time_idx].clone(),
                message: "negative time".into(),
            });
        }
        let s = match parse_finite(cell(status_idx)?) {
            Some(v) if v == 0.0 => false,
            Some(v) if v == 1.0 => true,
            _ => {
                return Err(Error::Cell {
                    row,
                    column: headers[status_idx].clone(),
                    message: format!("status '{}' is not 0 or 1", &record[status_idx]),
                })
            }
        };
        times.push(t);
        status.push(s);
        for (slot, &i) in raw.iter_mut().zip(&covariate_idx) {
            slot.push(cell(i)?.to_owned());
        }
    }
    if times.is_empty() {
        return Err(Error::validation("no data rows"));
    }

    let n = times.len();
    let mut columns: Vec<(String, bool, Vec<f64>)> = Vec::new();
    for (values, &i) in raw.into_iter().zip(&covariate_idx) {
        let name = &headers[i];
        let fixed = schema.fixed_cols.iter().any(|f| f == name);
        match classify(values) {
            RawColumn::Numeric(v) => {
                if let Some(r) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::Cell {
                        row: r + 1,
                        column: name.clone(),
                        message: "non-finite value".into(),
                    });
                }
                columns.push((name.clone(), fixed, v));
            }
            RawColumn::Text(v) if fixed => {
                let levels: BTreeSet<&str> = v.iter().map(String::as_str).collect();
                for level in levels.iter().skip(1) {
                    let ind = v.iter().map(|x| f64::from(u8::from(x == level))).collect();
                    columns.push((format!("{name}={level}"), true, ind));
                }
            }
            RawColumn::Text(v) => {
                let r = v.iter().position(|x| parse_finite(x).is_none()).unwrap_or(0);
                return Err(Error::Cell {
                    row: r + 1,
                    column: name.clone(),
                    message: format!("non-numeric value '{}' in a non-fixed covariate", v[r]),
                });
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::validation("covariate set is empty after encoding"));
    }
    let p = columns.len();
    let mut data = Vec::with_capacity(n * p);
    for (_, _, v) in &columns {
        data.extend_from_slice(v);
    }
    let design = DMatrix::from_vec(n, p, data);
    let fixed = columns
        .iter()
        .enumerate()
        .filter_map(|(j, c)| c.1.then_some(j))
        .collect();
    let names = columns.into_iter().map(|c| c.0).collect();
    SurvivalDataset::new(times, status, design, names, fixed)
}

fn parse_finite(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| !v.is_nan())
}

fn classify(values: Vec<String>) -> RawColumn {
    let parsed: Option<Vec<f64>> = values.iter().map(|s| s.parse::<f64>().ok()).collect();
    match parsed {
        Some(v) => RawColumn::Numeric(v),
        None => RawColumn::Text(values),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SurvivalDataset {
        let design = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        SurvivalDataset::new(
            vec![3.0, 1.0, 2.0],
            vec![true, true, false],
            design,
            vec!["a".into(), "b".into(), "c".into()],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn model_id_is_sorted_and_deduplicated() {
        let m = ModelId::new([5, 1, 5, 3]);
        assert_eq!(m.indices(), &[1, 3, 5]);
        assert_eq!(m.with(2).indices(), &[1, 2, 3, 5]);
        assert_eq!(m.with(3), m);
        assert_eq!(m.without(3).indices(), &[1, 5]);
        assert_eq!(m.to_string(), "{1,3,5}");
        assert_eq!(m.to_indicator(6), vec![false, true, false, true, false, true]);
    }

    #[test]
    fn sorting_permutes_all_fields() {
        let ds = toy();
        assert_eq!(ds.times(), &[1.0, 2.0, 3.0]);
        assert_eq!(ds.status(), &[true, false, true]);
        assert_eq!(ds.row_order(), &[1, 2, 0]);
        assert_eq!(ds.column(0), &[4.0, 7.0, 1.0]);
        assert!(!ds.has_ties());
    }

    #[test]
    fn sort_is_idempotent() {
        let ds = toy();
        let again = sort_by_time(ds.times(), ds.status());
        assert!(again.is_identity());
    }

    #[test]
    fn ties_rank_events_first() {
        let order = sort_by_time(&[2.0, 2.0, 1.0, 2.0], &[false, true, true, true]);
        assert!(order.tied);
        assert_eq!(order.permutation, vec![2, 1, 3, 0]);
    }

    #[test]
    fn submatrix_selects_columns() {
        let ds = toy();
        let sub = ds.submatrix(&ModelId::new([1])).unwrap();
        assert_eq!(sub.as_slice(), ds.column(1));
        let full = ds.submatrix(&ModelId::new(0..3)).unwrap();
        assert_eq!(&full, ds.design());
        assert!(ds.submatrix(&ModelId::new([3])).is_err());
    }

    #[test]
    fn all_censored_is_rejected() {
        let err = SurvivalDataset::new(
            vec![1.0, 2.0],
            vec![false, false],
            DMatrix::zeros(2, 1),
            vec!["x".into()],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("censored"));
    }

    #[test]
    fn ingest_small_file() {
        let csv = "time,status,x1,x2\n1.5,1,0.1,2\n2.5,0,0.2,3\n0.5,1,0.3,4\n";
        let ds = ingest_reader(csv.as_bytes(), &Schema::new("time", "status")).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.n_events(), 2);
        assert_eq!(ds.times(), &[0.5, 1.5, 2.5]);
    }

    #[test]
    fn ingest_rejects_bad_status_with_row() {
        let csv = "time,status,x\n1,1,0\n2,2,1\n";
        let err = ingest_reader(csv.as_bytes(), &Schema::new("time", "status")).unwrap_err();
        match err {
            Error::Cell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "status");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_missing_and_nan() {
        let schema = Schema::new("time", "status");
        let missing = "time,status,x\n1,1,\n2,0,1\n";
        assert!(matches!(
            ingest_reader(missing.as_bytes(), &schema),
            Err(Error::Cell { row: 1, .. })
        ));
        let nan = "time,status,x\n1,1,NaN\n2,0,1\n";
        assert!(matches!(
            ingest_reader(nan.as_bytes(), &schema),
            Err(Error::Cell { row: 1, .. })
        ));
        let bad_time = "time,status,x\nsoon,1,1\n";
        assert!(ingest_reader(bad_time.as_bytes(), &schema).is_err());
        let no_cov = "time,status\n1,1\n";
        assert!(ingest_reader(no_cov.as_bytes(), &schema).is_err());
    }

    #[test]
    fn categorical_fixed_column_is_reference_coded() {
        let csv = "time,status,stage,g1\n1,1,I,0.5\n2,1,II,0.1\n3,0,III,0.2\n4,1,I,0.3\n";
        let schema = Schema::new("time", "status").with_fixed(["stage"]);
        let ds = ingest_reader(csv.as_bytes(), &schema).unwrap();
        assert_eq!(ds.column_names(), &["stage=II", "stage=III", "g1"]);
        assert_eq!(ds.fixed_columns(), &[0, 1]);
        assert_eq!(ds.column(0), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(ds.column(1), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn categorical_free_column_is_rejected() {
        let csv = "time,status,g\n1,1,low\n2,1,high\n";
        assert!(ingest_reader(csv.as_bytes(), &Schema::new("time", "status")).is_err());
    }

    #[test]
    fn standardize_records_scales() {
        let mut ds = toy();
        ds.standardize();
        let col = ds.column(0);
        let mean: f64 = col.iter().sum::<f64>() / 3.0;
        let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert_eq!(ds.scales().unwrap()[0].center, 4.0);
    }

    #[test]
    fn subset_rows_keeps_original_row_ids() {
        let ds = toy();
        let sub = ds.subset_rows(&[2, 0]).unwrap();
        assert_eq!(sub.times(), &[1.0, 3.0]);
        assert_eq!(sub.row_order(), &[1, 0]);
    }
}
