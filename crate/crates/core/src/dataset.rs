//! CSV ingestion, encoding, normalization, splitting, and reference rows.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::schema::{FeatureKind, FeatureSchema};

/// Values are snapped to this grid after min-max scaling. With at most 20
/// fractional bits per value, squared column differences carry at most 40
/// bits, so sums over a dozen columns stay well inside an f64 mantissa and
/// every summation order produces bit-identical distances.
pub const QUANT_BITS: u32 = 20;

fn quantize(x: f64) -> f64 {
    let scale = (1u64 << QUANT_BITS) as f64;
    (x * scale).round() / scale
}

/// Dense row-major matrix of f64 features.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::ColumnCount {
                    row: i,
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: n,
            cols,
            data,
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// New matrix containing the given rows in the given order.
    pub fn take_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// New matrix restricted to the given rows and columns, in order.
    pub fn restrict(&self, row_indices: &[usize], col_indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(row_indices.len() * col_indices.len());
        for &i in row_indices {
            let row = self.row(i);
            for &j in col_indices {
                data.push(row[j]);
            }
        }
        Matrix {
            rows: row_indices.len(),
            cols: col_indices.len(),
            data,
        }
    }
}

/// Rows as ordinal codes before normalization, plus bookkeeping from the
/// loader.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub schema: FeatureSchema,
    /// Ordinal-coded feature values; continuous columns hold the parsed
    /// number, categorical columns the category position.
    pub values: Matrix,
    /// 0/1 labels.
    pub labels: Vec<u8>,
    /// Zero-based position of each kept row in the source file (header
    /// excluded), which doubles as the stable instance id.
    pub ids: Vec<u64>,
    /// Rows discarded because some field held the missing marker `?`.
    pub dropped_missing: usize,
}

/// Fully encoded dataset: min-max scaled, grid-quantized features.
#[derive(Debug, Clone)]
pub struct NumericDataset {
    pub schema: FeatureSchema,
    pub matrix: Matrix,
    pub labels: Vec<u8>,
    pub ids: Vec<u64>,
}

impl NumericDataset {
    pub fn n_rows(&self) -> usize {
        self.matrix.rows
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.cols
    }

    /// New dataset holding the selected rows.
    pub fn subset(&self, indices: &[usize]) -> NumericDataset {
        NumericDataset {
            schema: self.schema.clone(),
            matrix: self.matrix.take_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }
}

/// Reads a census-style CSV against `schema`.
///
/// The first line is treated as a header when its first field matches the
/// first schema feature name; otherwise it is data. Fields are trimmed.
/// Any row containing the missing marker `?` is dropped and counted; an
/// unknown categorical token or unparseable number is a hard error naming
/// the row.
pub fn load_census_csv(path: &Path, schema: &FeatureSchema) -> Result<RawDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let expected = schema.n_features() + 1;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut ids: Vec<u64> = Vec::new();
    let mut dropped_missing = 0usize;
    let mut data_row = 0usize;
    let mut first = true;

    for record in reader.records() {
        let record = record?;
        if first {
            first = false;
            if record.get(0).map(str::trim) == Some(schema.features[0].name.as_str()) {
                continue;
            }
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let row_no = data_row;
        data_row += 1;
        if record.len() != expected {
            return Err(Error::ColumnCount {
                row: row_no,
                expected,
                found: record.len(),
            });
        }
        if record.iter().any(|f| f == "?") {
            dropped_missing += 1;
            continue;
        }
        let mut row = Vec::with_capacity(schema.n_features());
        for (j, feature) in schema.features.iter().enumerate() {
            let token = record.get(j).unwrap();
            let value = match &feature.kind {
                FeatureKind::Continuous => token.parse::<f64>().map_err(|_| Error::BadNumber {
                    row: row_no,
                    column: feature.name.clone(),
                    token: token.to_string(),
                })?,
                FeatureKind::Categorical(cats) => match cats.iter().position(|c| c == token) {
                    Some(code) => code as f64,
                    None => {
                        return Err(Error::UnknownCategory {
                            row: row_no,
                            column: feature.name.clone(),
                            token: token.to_string(),
                        })
                    }
                },
            };
            row.push(value);
        }
        let label_token = record.get(schema.n_features()).unwrap();
        labels.push(u8::from(label_token == schema.positive_label));
        ids.push(row_no as u64);
        rows.push(row);
    }

    let values = if rows.is_empty() {
        Matrix::zeros(0, schema.n_features())
    } else {
        Matrix::from_rows(rows)?
    };
    Ok(RawDataset {
        schema: schema.clone(),
        values,
        labels,
        ids,
        dropped_missing,
    })
}

/// Min-max scales every column to [0, 1] and snaps the result to the
/// quantization grid. A constant column maps to all zeros.
pub fn encode_and_normalize(raw: &RawDataset) -> Result<NumericDataset> {
    let m = &raw.values;
    if m.rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut out = Matrix::zeros(m.rows, m.cols);
    for j in 0..m.cols {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m.rows {
            let v = m.get(i, j);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = hi - lo;
        for i in 0..m.rows {
            let scaled = if span == 0.0 {
                0.0
            } else {
                (m.get(i, j) - lo) / span
            };
            out.set(i, j, quantize(scaled));
        }
    }
    Ok(NumericDataset {
        schema: raw.schema.clone(),
        matrix: out,
        labels: raw.labels.clone(),
        ids: raw.ids.clone(),
    })
}

/// Deterministic shuffled split of `n` row indices. The first
/// `floor(n * train_fraction)` shuffled positions form the training set.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !train_fraction.is_finite() || train_fraction <= 0.0 || train_fraction >= 1.0 {
        return Err(Error::BadFraction(train_fraction));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut order);
    let n_train = ((n as f64) * train_fraction).floor() as usize;
    let train = order[..n_train].to_vec();
    let test = order[n_train..].to_vec();
    Ok((train, test))
}

/// Splits a dataset into train and test subsets.
pub fn train_test_split(
    data: &NumericDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(NumericDataset, NumericDataset, Vec<usize>, Vec<usize>)> {
    let (train_idx, test_idx) = split_indices(data.n_rows(), train_fraction, seed)?;
    Ok((
        data.subset(&train_idx),
        data.subset(&test_idx),
        train_idx,
        test_idx,
    ))
}

/// Lower-middle median of each column: the value at sorted position
/// `(n - 1) / 2`, always an observed value.
pub fn column_medians(m: &Matrix) -> Result<Vec<f64>> {
    if m.rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut medians = Vec::with_capacity(m.cols);
    for j in 0..m.cols {
        let mut col = m.column(j);
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(col[(m.rows - 1) / 2]);
    }
    Ok(medians)
}

/// Per-column reference row for masking: the lower-middle median of each
/// training column. These are the values substituted for features
/// excluded from a coalition.
pub fn compute_reference(train: &NumericDataset) -> Result<Vec<f64>> {
    column_medians(&train.matrix)
}
