//! Dataset representation, file ingestion and standard normalization.
//!
//! Two on-disk formats are supported: dense CSV (one sample per row, a
//! designated integer label column, optional header) and a sparse
//! `label idx:val idx:val ...` text format with 1-based, strictly
//! increasing feature indices. Both tolerate LF and CRLF line endings.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A labeled sample matrix: `n_samples x n_features` plus integer class ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<i64>,
    name: String,
}

impl Dataset {
    /// Builds a dataset, validating shape agreement and non-emptiness.
    pub fn new(features: DMatrix<f64>, labels: Vec<i64>, name: impl Into<String>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::InvalidInput("no samples".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "feature rows ({}) do not match label count ({})",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(Dataset {
            features,
            labels,
            name: name.into(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Distinct labels, ascending.
    pub fn label_set(&self) -> Vec<i64> {
        let set: BTreeSet<i64> = self.labels.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Occurrences per label, ascending by label.
    pub fn class_counts(&self) -> Vec<(i64, usize)> {
        self.label_set()
            .into_iter()
            .map(|c| (c, self.labels.iter().filter(|&&l| l == c).count()))
            .collect()
    }

    /// New dataset with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize], name: impl Into<String>) -> Result<Self> {
        for &r in rows {
            if r >= self.n_samples() {
                return Err(Error::InvalidInput(format!(
                    "row index {r} out of range (n = {})",
                    self.n_samples()
                )));
            }
        }
        let features = DMatrix::from_fn(rows.len(), self.n_features(), |i, j| {
            self.features[(rows[i], j)]
        });
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Dataset::new(features, labels, name)
    }

    /// Label-free view of this dataset, for transductive fit interfaces.
    pub fn features_only(&self) -> FeatureSet {
        FeatureSet {
            features: self.features.clone(),
            name: self.name.clone(),
        }
    }
}

/// Unlabeled samples. Transfer estimators take the target domain in this
/// form so that no fit path can read target labels.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    features: DMatrix<f64>,
    name: String,
}

impl FeatureSet {
    pub fn new(features: DMatrix<f64>, name: impl Into<String>) -> Self {
        FeatureSet {
            features,
            name: name.into(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Per-feature moments stored by [`standard_normalize`]. Standard deviations
/// are strictly positive: zero-variance features store 1.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl fmt::Display for NormalizationStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NormalizationStats(d = {})", self.mean.len())
    }
}

/// Shifts every feature to mean 0 and scales it to standard deviation 1
/// (population variance). Zero-variance features are centered only and
/// their stored deviation is 1, so the transform never divides by zero.
pub fn normalize_features(features: &DMatrix<f64>) -> (DMatrix<f64>, NormalizationStats) {
    let n = features.nrows();
    let d = features.ncols();
    let mut mean = vec![0.0; d];
    let mut std = vec![1.0; d];
    let mut out = features.clone();
    for j in 0..d {
        let col = features.column(j);
        let mu = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        mean[j] = mu;
        std[j] = sd;
        for i in 0..n {
            out[(i, j)] = (features[(i, j)] - mu) / sd;
        }
    }
    (out, NormalizationStats { mean, std })
}

/// Normalizes the two domains independently, each with its own statistics,
/// so that both singular spectra live on a comparable scale afterwards.
pub fn standard_normalize(
    train: &Dataset,
    test: &Dataset,
) -> Result<(Dataset, Dataset, NormalizationStats, NormalizationStats)> {
    if train.n_features() != test.n_features() {
        return Err(Error::InvalidInput(format!(
            "feature dimension mismatch: train d = {}, test d = {}",
            train.n_features(),
            test.n_features()
        )));
    }
    let (train_f, train_stats) = normalize_features(train.features());
    let (test_f, test_stats) = normalize_features(test.features());
    let train_out = Dataset::new(train_f, train.labels().to_vec(), train.name())?;
    let test_out = Dataset::new(test_f, test.labels().to_vec(), test.name())?;
    Ok((train_out, test_out, train_stats, test_stats))
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(BufReader::new(file).lines())
}

fn read_line(path: &Path, line: std::io::Result<String>) -> Result<String> {
    line.map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a dense comma-separated file. `label_column` is the zero-based
/// index of the integer label column; the remaining columns become features
/// in file order. Errors carry the 1-based line number.
pub fn load_dense_csv(
    path: impl AsRef<Path>,
    label_column: usize,
    skip_header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, line) in open_lines(path)?.enumerate() {
        let line_no = idx + 1;
        if skip_header && idx == 0 {
            continue;
        }
        let line = read_line(path, line)?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => {
                if label_column >= cells.len() {
                    return Err(Error::Parse(format!(
                        "line {line_no}: label column {label_column} out of range ({} cells)",
                        cells.len()
                    )));
                }
                width = Some(cells.len());
            }
            Some(w) if cells.len() != w => {
                return Err(Error::Parse(format!(
                    "line {line_no}: ragged row with {} cells, expected {w}",
                    cells.len()
                )));
            }
            _ => {}
        }
        let label: i64 = cells[label_column].trim().parse().map_err(|_| {
            Error::Parse(format!(
                "line {line_no}: label '{}' is not an integer",
                cells[label_column].trim()
            ))
        })?;
        let mut row = Vec::with_capacity(cells.len() - 1);
        for (j, cell) in cells.iter().enumerate() {
            if j == label_column {
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "line {line_no}: cell '{}' (column {j}) is not numeric",
                    cell.trim()
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
        labels.push(label);
    }

    if rows.is_empty() {
        return Err(Error::Parse("no samples".into()));
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::Parse("no feature columns".into()));
    }
    let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Dataset::new(features, labels, name)
}

/// Loads a sparse `label idx:val ...` file (1-based, strictly increasing
/// indices). The dimension defaults to the maximum index seen and can be
/// overridden upward with `dimension`.
pub fn load_sparse(path: impl AsRef<Path>, dimension: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut samples: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut max_index = 0usize;

    for (idx, line) in open_lines(path)?.enumerate() {
        let line_no = idx + 1;
        let line = read_line(path, line)?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label_tok = parts.next().expect("non-empty line has a first token");
        let label: i64 = label_tok.parse().map_err(|_| {
            Error::Parse(format!(
                "line {line_no}: label '{label_tok}' is not an integer"
            ))
        })?;
        let mut entries: Vec<(usize, f64)> = Vec::new();
        let mut prev_index = 0usize;
        for pair in parts {
            let (idx_str, val_str) = pair.split_once(':').ok_or_else(|| {
                Error::Parse(format!("line {line_no}: malformed pair '{pair}'"))
            })?;
            let index: usize = idx_str.parse().map_err(|_| {
                Error::Parse(format!("line {line_no}: bad feature index '{idx_str}'"))
            })?;
            if index < 1 {
                return Err(Error::Parse(format!(
                    "line {line_no}: feature index {index} is below 1"
                )));
            }
            if index <= prev_index {
                return Err(Error::Parse(format!(
                    "line {line_no}: index {index} not strictly increasing after {prev_index}"
                )));
            }
            let value: f64 = val_str.parse().map_err(|_| {
                Error::Parse(format!("line {line_no}: bad feature value '{val_str}'"))
            })?;
            prev_index = index;
            entries.push((index, value));
        }
        max_index = max_index.max(prev_index);
        samples.push(entries);
        labels.push(label);
    }

    if samples.is_empty() {
        return Err(Error::Parse("no samples".into()));
    }
    let d = match dimension {
        Some(d) => {
            if d < max_index {
                return Err(Error::Parse(format!(
                    "declared dimension {d} is below the maximum feature index {max_index}"
                )));
            }
            d
        }
        None => max_index,
    };
    if d == 0 {
        return Err(Error::Parse("no feature columns".into()));
    }
    let mut features = DMatrix::zeros(samples.len(), d);
    for (i, entries) in samples.iter().enumerate() {
        for &(index, value) in entries {
            features[(i, index - 1)] = value;
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Dataset::new(features, labels, name)
}

/// Column means of a matrix, as a vector.
pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / m.nrows() as f64)
}
