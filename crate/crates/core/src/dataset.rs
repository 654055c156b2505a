//! In-memory dataset: a dense row-major matrix of `f64` features plus row
//! identity, optional boolean labels, and CSV input/output.
//!
//! Missing cells are represented as NaN between loading and imputation; every
//! downstream stage refuses non-finite values, so the only legal place for a
//! NaN is the window between [`load_csv`] and [`Dataset::impute`].

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
    feature_names: Vec<String>,
    row_ids: Vec<String>,
    labels: Option<Vec<bool>>,
}

/// How to resolve missing values during preprocessing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStrategy {
    /// Replace each missing cell with the mean of the observed values in its
    /// column.
    #[default]
    FeatureMean,
    /// Drop every row that contains a missing cell.
    DropRows,
}

impl Dataset {
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        feature_names: Vec<String>,
        row_ids: Vec<String>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::data("load", "dataset has no rows"));
        }
        let d = feature_names.len();
        if d == 0 {
            return Err(Error::data("load", "dataset has no feature columns"));
        }
        if row_ids.len() != n {
            return Err(Error::data("load", format!("{} row ids for {} rows", row_ids.len(), n)));
        }
        if let Some(ref labels) = labels {
            if labels.len() != n {
                return Err(Error::data("load", format!("{} labels for {} rows", labels.len(), n)));
            }
        }
        let mut values = Vec::with_capacity(n * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::data(
                    "load",
                    format!("row {} has {} values, expected {}", i + 1, row.len(), d),
                ));
            }
            values.extend_from_slice(&row);
        }
        Ok(Dataset { n, d, values, feature_names, row_ids, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    /// Errors unless every value is finite. `stage` names the caller in the
    /// diagnostic.
    pub fn require_finite(&self, stage: &'static str) -> Result<()> {
        for i in 0..self.n {
            for j in 0..self.d {
                let v = self.value(i, j);
                if !v.is_finite() {
                    return Err(Error::data(
                        stage,
                        format!(
                            "row {} (id {}), column '{}' is {}",
                            i + 1,
                            self.row_ids[i],
                            self.feature_names[j],
                            if v.is_nan() { "missing" } else { "non-finite" }
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// New dataset with the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::data("load", "row subset is empty"));
        }
        let mut values = Vec::with_capacity(indices.len() * self.d);
        let mut row_ids = Vec::with_capacity(indices.len());
        let mut labels = self.labels.as_ref().map(|_| Vec::with_capacity(indices.len()));
        for &i in indices {
            if i >= self.n {
                return Err(Error::data("load", format!("row index {i} out of range for {} rows", self.n)));
            }
            values.extend_from_slice(self.row(i));
            row_ids.push(self.row_ids[i].clone());
            if let (Some(out), Some(src)) = (labels.as_mut(), self.labels.as_ref()) {
                out.push(src[i]);
            }
        }
        Ok(Dataset { n: indices.len(), d: self.d, values, feature_names: self.feature_names.clone(), row_ids, labels })
    }

    /// Resolve missing values. `FeatureMean` keeps every row; `DropRows`
    /// may shrink the dataset and errors if nothing would remain.
    pub fn impute(&self, strategy: ImputeStrategy) -> Result<Self> {
        match strategy {
            ImputeStrategy::FeatureMean => {
                let mut out = self.clone();
                for j in 0..self.d {
                    let (mut sum, mut count) = (0.0, 0usize);
                    for i in 0..self.n {
                        let v = self.value(i, j);
                        if !v.is_nan() {
                            sum += v;
                            count += 1;
                        }
                    }
                    if count == self.n {
                        continue;
                    }
                    if count == 0 {
                        return Err(Error::data(
                            "preprocess",
                            format!("column '{}' has no observed values to impute from", self.feature_names[j]),
                        ));
                    }
                    let mean = sum / count as f64;
                    for i in 0..self.n {
                        if out.values[i * self.d + j].is_nan() {
                            out.values[i * self.d + j] = mean;
                        }
                    }
                }
                Ok(out)
            }
            ImputeStrategy::DropRows => {
                let keep: Vec<usize> =
                    (0..self.n).filter(|&i| self.row(i).iter().all(|v| !v.is_nan())).collect();
                if keep.is_empty() {
                    return Err(Error::data("preprocess", "every row has a missing value; nothing left after drop_rows"));
                }
                self.subset(&keep)
            }
        }
    }

    /// Remove exact duplicate rows (bitwise feature equality), keeping the
    /// first occurrence of each distinct row.
    pub fn dedupe(&self) -> Result<Self> {
        let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(self.n);
        let mut keep = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let key: Vec<u64> = self.row(i).iter().map(|v| v.to_bits()).collect();
            if seen.insert(key) {
                keep.push(i);
            }
        }
        self.subset(&keep)
    }

    /// Count of distinct rows under bitwise feature equality.
    pub fn distinct_rows(&self) -> usize {
        let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(self.n);
        for i in 0..self.n {
            seen.insert(self.row(i).iter().map(|v| v.to_bits()).collect());
        }
        seen.len()
    }

    /// Seeded shuffle-and-cut split into (train, test). The test side gets
    /// `round(n * test_fraction)` rows, clamped so both sides are non-empty.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::config("split", format!("test fraction {test_fraction} outside (0, 1)")));
        }
        if self.n < 2 {
            return Err(Error::data("split", "need at least 2 rows to split"));
        }
        let mut order: Vec<usize> = (0..self.n).collect();
        SeededRng::new(seed).shuffle(&mut order);
        let test_n = ((self.n as f64 * test_fraction).round() as usize).clamp(1, self.n - 1);
        let test = self.subset(&order[..test_n])?;
        let train = self.subset(&order[test_n..])?;
        Ok((train, test))
    }

    /// Write the dataset as CSV with a header row. Labels, when present, go
    /// last under `label_name`.
    pub fn write_csv<W: Write>(&self, writer: W, label_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(|s| s.as_str()).collect();
        if self.labels.is_some() {
            header.push(label_name);
        }
        w.write_record(&header).map_err(csv_error)?;
        for i in 0..self.n {
            let mut record: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            if let Some(labels) = &self.labels {
                record.push(if labels[i] { "1".into() } else { "0".into() });
            }
            w.write_record(&record).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(err: csv::Error) -> Error {
    Error::data("io", err.to_string())
}

/// What [`load_csv_reader`] should pull out of the file besides features.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub has_header: bool,
    pub label_column: Option<String>,
    pub weight_column: Option<String>,
}

/// A loaded dataset plus the raw values of the weight column, if one was
/// requested.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub weights: Option<Vec<f64>>,
}

/// Load a CSV file. Columns are features except for the optional label
/// column. Without a header, columns are named `f0`, `f1`, ... and those
/// names can still be used to address the label column.
pub fn load_csv(path: &Path, has_header: bool, label_column: Option<&str>) -> Result<Dataset> {
    let options = LoadOptions {
        has_header,
        label_column: label_column.map(str::to_string),
        weight_column: None,
    };
    load_csv_path(path, &options).map(|loaded| loaded.dataset)
}

pub fn load_csv_path(path: &Path, options: &LoadOptions) -> Result<LoadedCsv> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data("load", format!("cannot open {}: {e}", path.display())))?;
    load_csv_reader(file, options)
}

pub fn load_csv_reader<R: Read>(reader: R, options: &LoadOptions) -> Result<LoadedCsv> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut column_names: Vec<String> = if options.has_header {
        let headers = csv_reader.headers().map_err(csv_error)?;
        headers.iter().map(str::to_string).collect()
    } else {
        Vec::new()
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<bool> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut label_idx: Option<usize> = None;
    let mut weight_idx: Option<usize> = None;
    let mut feature_cols: Vec<usize> = Vec::new();
    let mut initialized = false;

    for (data_row, record) in csv_reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row_number = data_row + 1;
        if !initialized {
            if column_names.is_empty() {
                column_names = (0..record.len()).map(|j| format!("f{j}")).collect();
            }
            label_idx = resolve_column(&column_names, options.label_column.as_deref(), "label")?;
            weight_idx = resolve_column(&column_names, options.weight_column.as_deref(), "weight")?;
            if label_idx.is_some() && label_idx == weight_idx {
                return Err(Error::config("load", "label and weight columns must differ"));
            }
            feature_cols = (0..column_names.len())
                .filter(|j| Some(*j) != label_idx && Some(*j) != weight_idx)
                .collect();
            if feature_cols.is_empty() {
                return Err(Error::data("load", "no feature columns remain after label/weight extraction"));
            }
            initialized = true;
        }
        if record.len() != column_names.len() {
            return Err(Error::data(
                "load",
                format!("row {row_number} has {} cells, expected {}", record.len(), column_names.len()),
            ));
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        for &j in &feature_cols {
            row.push(parse_cell(&record[j], row_number, &column_names[j])?);
        }
        rows.push(row);
        if let Some(j) = label_idx {
            labels.push(parse_label(&record[j], row_number, &column_names[j])?);
        }
        if let Some(j) = weight_idx {
            let w = parse_cell(&record[j], row_number, &column_names[j])?;
            if !w.is_finite() {
                return Err(Error::data(
                    "load",
                    format!("row {row_number}, column '{}': weight must be a finite number", column_names[j]),
                ));
            }
            weights.push(w);
        }
    }

    if rows.is_empty() {
        return Err(Error::data("load", "dataset has no rows"));
    }
    let feature_names: Vec<String> = feature_cols.iter().map(|&j| column_names[j].clone()).collect();
    let row_ids: Vec<String> = (0..rows.len()).map(|i| i.to_string()).collect();
    let dataset = Dataset::from_rows(rows, feature_names, row_ids, if label_idx.is_some() { Some(labels) } else { None })?;
    Ok(LoadedCsv { dataset, weights: if weight_idx.is_some() { Some(weights) } else { None } })
}

fn resolve_column(names: &[String], wanted: Option<&str>, what: &str) -> Result<Option<usize>> {
    match wanted {
        None => Ok(None),
        Some(name) => names
            .iter()
            .position(|c| c == name)
            .map(Some)
            .ok_or_else(|| Error::config("load", format!("{what} column '{name}' not found in CSV columns"))),
    }
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    cell.parse::<f64>().map_err(|_| {
        Error::data("load", format!("row {row}, column '{column}': cannot parse '{cell}' as a number"))
    })
}

fn parse_label(cell: &str, row: usize, column: &str) -> Result<bool> {
    match cell.to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        _ => Err(Error::data(
            "load",
            format!("row {row}, column '{column}': label '{cell}' is not one of 0, 1, true, false"),
        )),
    }
}
