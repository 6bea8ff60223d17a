//! Tabular dataset ingestion, 6:2:2 splitting, and standardization.
//!
//! The dataset tracks how many times each split's rows have been handed
//! out, so end-to-end runs can prove the test split was never touched
//! before imputation. Standardization statistics come from training-split
//! observed entries only.

use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    fn idx(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Per-column mean/std captured when the dataset was standardized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Data matrix with a missingness mask, split assignments, and
/// standardization state.
#[derive(Debug)]
pub struct MaskedDataset {
    values: Array2<f64>,
    /// Original-scale copy taken at construction; observed entries of
    /// imputation outputs are restored from here verbatim.
    raw: Array2<f64>,
    mask: Array2<f64>,
    names: Vec<String>,
    split: Option<Vec<Split>>,
    standardization: Option<Standardization>,
    reads: [AtomicU64; 3],
}

impl Clone for MaskedDataset {
    fn clone(&self) -> Self {
        MaskedDataset {
            values: self.values.clone(),
            raw: self.raw.clone(),
            mask: self.mask.clone(),
            names: self.names.clone(),
            split: self.split.clone(),
            standardization: self.standardization.clone(),
            reads: [AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0)],
        }
    }
}

pub const DEFAULT_MISSING_TOKENS: &[&str] = &["", "NA", "NaN"];

impl MaskedDataset {
    pub fn from_parts(values: Array2<f64>, mask: Array2<f64>, names: Vec<String>) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::Dim(format!(
                "values {:?} vs mask {:?}",
                values.dim(),
                mask.dim()
            )));
        }
        if names.len() != values.dim().1 {
            return Err(Error::Dim(format!(
                "{} names for {} columns",
                names.len(),
                values.dim().1
            )));
        }
        if let Some(((i, j), &v)) = mask
            .indexed_iter()
            .find(|(_, &v)| v != 0.0 && v != 1.0)
        {
            return Err(Error::NonBinary { index: i * values.dim().1 + j, value: v });
        }
        Ok(MaskedDataset {
            raw: values.clone(),
            values,
            mask,
            names,
            split: None,
            standardization: None,
            reads: [AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0)],
        })
    }

    /// Parse a rectangular CSV; cells matching a missing token become
    /// masked entries. A header row is assumed when no cell of the first
    /// row parses as a number or missing token.
    pub fn load_csv(path: &Path, missing_tokens: &[&str]) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, missing_tokens)
    }

    pub fn from_reader<R: Read>(reader: R, missing_tokens: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);

        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        let mut names: Option<Vec<String>> = None;
        let mut width: Option<usize> = None;

        let parse_cell = |cell: &str| -> Option<Option<f64>> {
            if missing_tokens.contains(&cell) {
                Some(None)
            } else {
                cell.parse::<f64>().ok().map(Some)
            }
        };

        for (ri, record) in rdr.records().enumerate() {
            let record = record?;
            let cells: Vec<&str> = record.iter().collect();
            if ri == 0 {
                let header = cells.iter().all(|c| parse_cell(c).is_none());
                if header {
                    names = Some(cells.iter().map(|s| s.to_string()).collect());
                    width = Some(cells.len());
                    continue;
                }
            }
            let expected = *width.get_or_insert(cells.len());
            if cells.len() != expected {
                return Err(Error::RaggedCsv { row: ri, got: cells.len(), expected });
            }
            let mut row = Vec::with_capacity(cells.len());
            for (ci, cell) in cells.iter().enumerate() {
                match parse_cell(cell) {
                    Some(v) => row.push(v),
                    None => {
                        return Err(Error::CsvCell {
                            row: ri,
                            col: ci,
                            msg: format!("cannot parse {cell:?} as a number"),
                        })
                    }
                }
            }
            rows.push(row);
        }

        let p = width.unwrap_or(0);
        let n = rows.len();
        let names =
            names.unwrap_or_else(|| (0..p).map(|j| format!("x{j}")).collect::<Vec<_>>());
        if names.len() != p {
            return Err(Error::RaggedCsv { row: 0, got: names.len(), expected: p });
        }
        let mut values = Array2::zeros((n, p));
        let mut mask = Array2::zeros((n, p));
        for (i, row) in rows.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    values[(i, j)] = *v;
                    mask[(i, j)] = 1.0;
                }
            }
        }
        Self::from_parts(values, mask, names)
    }

    /// Write values as CSV with empty cells at masked entries. Floats are
    /// printed in shortest round-trip form, so write -> read is exact.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.names)?;
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.p())
                .map(|j| {
                    if self.mask[(i, j)] == 1.0 {
                        format!("{}", self.values[(i, j)])
                    } else {
                        String::new()
                    }
                })
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.values.dim().0
    }

    pub fn p(&self) -> usize {
        self.values.dim().1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.is_some()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn split_assignments(&self) -> Option<&[Split]> {
        self.split.as_deref()
    }

    /// Seed-deterministic uniform permutation, then a contiguous
    /// 60/20/20 cut; each count is within one row of the exact fraction.
    pub fn assign_splits(&mut self, seed: u64) -> Result<()> {
        let n = self.n();
        if n < 5 {
            return Err(Error::Invalid(format!("need at least 5 rows to split, have {n}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let n_train = (0.6 * n as f64).round() as usize;
        let n_valid = (0.2 * n as f64).round() as usize;
        let mut split = vec![Split::Test; n];
        for (pos, &row) in order.iter().enumerate() {
            split[row] = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            };
        }
        self.split = Some(split);
        Ok(())
    }

    pub fn split_sizes(&self) -> Option<(usize, usize, usize)> {
        self.split.as_ref().map(|s| {
            let c = |w: Split| s.iter().filter(|&&x| x == w).count();
            (c(Split::Train), c(Split::Valid), c(Split::Test))
        })
    }

    pub fn split_indices(&self, split: Split) -> Result<Vec<usize>> {
        let s = self
            .split
            .as_ref()
            .ok_or_else(|| Error::Invalid("dataset not split".into()))?;
        Ok(s.iter()
            .enumerate()
            .filter(|(_, &x)| x == split)
            .map(|(i, _)| i)
            .collect())
    }

    /// Hand out (values, mask) for a split's rows, counting the access.
    /// This is the accessor all training/imputation stages go through,
    /// which is what makes held-out discipline checkable.
    pub fn split_rows(&self, split: Split) -> Result<(Array2<f64>, Array2<f64>)> {
        let idx = self.split_indices(split)?;
        self.reads[split.idx()].fetch_add(1, Ordering::Relaxed);
        Ok((self.take_rows(&self.values, &idx), self.take_rows(&self.mask, &idx)))
    }

    /// Original-scale values for a split (counted like `split_rows`).
    pub fn raw_split_rows(&self, split: Split) -> Result<(Array2<f64>, Array2<f64>)> {
        let idx = self.split_indices(split)?;
        self.reads[split.idx()].fetch_add(1, Ordering::Relaxed);
        Ok((self.take_rows(&self.raw, &idx), self.take_rows(&self.mask, &idx)))
    }

    fn take_rows(&self, src: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((idx.len(), self.p()));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&src.row(i));
        }
        out
    }

    /// How many times a split's rows have been handed out.
    pub fn read_count(&self, split: Split) -> u64 {
        self.reads[split.idx()].load(Ordering::Relaxed)
    }

    /// Columns with at least one missing entry in the training split.
    pub fn train_missing_cols(&self) -> Result<Vec<usize>> {
        let idx = self.split_indices(Split::Train)?;
        Ok((0..self.p())
            .filter(|&j| idx.iter().any(|&i| self.mask[(i, j)] == 0.0))
            .collect())
    }

    /// Per-column means of training-split observed entries, on the
    /// current scale.
    pub fn train_observed_col_means(&self) -> Result<Vec<f64>> {
        let idx = self.split_indices(Split::Train)?;
        Ok((0..self.p())
            .map(|j| {
                let vals: Vec<f64> = idx
                    .iter()
                    .filter(|&&i| self.mask[(i, j)] == 1.0)
                    .map(|&i| self.values[(i, j)])
                    .collect();
                if vals.is_empty() {
                    0.0
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect())
    }

    /// Count of training-split observed entries per column.
    pub fn train_observed_counts(&self) -> Result<Vec<usize>> {
        let idx = self.split_indices(Split::Train)?;
        Ok((0..self.p())
            .map(|j| idx.iter().filter(|&&i| self.mask[(i, j)] == 1.0).count())
            .collect())
    }

    /// Transform observed cells by (x - mean)/std with stats from
    /// training-split observed entries (population std; degenerate
    /// columns get std clamped to 1). Missing cells are untouched.
    pub fn standardize(&mut self) -> Result<()> {
        if self.standardization.is_some() {
            return Err(Error::Invalid("dataset already standardized".into()));
        }
        let idx = self.split_indices(Split::Train)?;
        let mut means = Vec::with_capacity(self.p());
        let mut stds = Vec::with_capacity(self.p());
        for j in 0..self.p() {
            let vals: Vec<f64> = idx
                .iter()
                .filter(|&&i| self.mask[(i, j)] == 1.0)
                .map(|&i| self.values[(i, j)])
                .collect();
            let (mean, std) = crate::math::mean_std(&vals);
            let std = if vals.len() < 2 || std == 0.0 { 1.0 } else { std };
            means.push(mean);
            stds.push(std);
        }
        for i in 0..self.n() {
            for j in 0..self.p() {
                if self.mask[(i, j)] == 1.0 {
                    self.values[(i, j)] = (self.values[(i, j)] - means[j]) / stds[j];
                }
            }
        }
        self.standardization = Some(Standardization { means, stds });
        Ok(())
    }

    /// Exact inverse of `standardize` on observed cells.
    pub fn destandardize(&mut self) -> Result<()> {
        let st = self
            .standardization
            .take()
            .ok_or_else(|| Error::Invalid("dataset not standardized".into()))?;
        for i in 0..self.n() {
            for j in 0..self.p() {
                if self.mask[(i, j)] == 1.0 {
                    self.values[(i, j)] = self.values[(i, j)] * st.stds[j] + st.means[j];
                }
            }
        }
        Ok(())
    }

    /// Map a standardized value back to the original scale.
    pub fn destandardize_value(&self, col: usize, v: f64) -> f64 {
        match &self.standardization {
            Some(st) => v * st.stds[col] + st.means[col],
            None => v,
        }
    }

    /// Original-scale (as-constructed) value at a cell.
    pub fn raw_value(&self, row: usize, col: usize) -> f64 {
        self.raw[(row, col)]
    }

    pub fn mask_value(&self, row: usize, col: usize) -> f64 {
        self.mask[(row, col)]
    }

    pub fn mask_matrix(&self) -> &Array2<f64> {
        &self.mask
    }

    #[cfg(test)]
    pub(crate) fn set_split_unchecked(&mut self, split: Vec<Split>) {
        self.split = Some(split);
    }

    /// Export split assignments as a one-column CSV of train/valid/test.
    pub fn write_split_csv(&self, path: &Path) -> Result<()> {
        let s = self
            .split
            .as_ref()
            .ok_or_else(|| Error::Invalid("dataset not split".into()))?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["split"])?;
        for a in s {
            w.write_record([a.label()])?;
        }
        w.flush()?;
        Ok(())
    }
}
