//! Value types for conditional models and their tangent vectors.
//!
//! A positive conditional model over finite explanatory/response spaces of sizes
//! k and m is a k×m matrix with strictly positive entries: entry (x, y) is the
//! weight the model places on response y given explanatory value x. Row-normalized
//! matrices are points of the product of simplexes; general positive matrices are
//! points of the positive cone. Tangent vectors are coefficient matrices over the
//! entrywise coordinate basis; tangents to the normalized submanifold have zero
//! row sums.
//!
//! All indices are 0-based. Constraint checks use an absolute tolerance of
//! [`CONSTRAINT_TOL`]; the types are immutable after construction.

use ndarray::{Array1, Array2};
use num::rational::BigRational;
use thiserror::Error;

use crate::rational::{from_u64, kahan_sum};

/// Absolute tolerance for constraint checks (row sums, weight sums).
pub const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("matrix must have at least 1 row and 2 columns, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("entry ({row},{col}) = {value} is not strictly positive")]
    NonPositiveEntry { row: usize, col: usize, value: f64 },
    #[error("entry ({row},{col}) = {value} is not finite")]
    NonFiniteEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 1 within {CONSTRAINT_TOL:e}")]
    NotNormalized { row: usize, sum: f64 },
    #[error("row index {index} out of range for {rows} rows")]
    RowIndexOutOfRange { index: usize, rows: usize },
    #[error("tangent row {row} sums to {sum}, expected 0 within {CONSTRAINT_TOL:e}")]
    RowSumNotZero { row: usize, sum: f64 },
    #[error("rational numerator at ({row},{col}) must be >= 1")]
    ZeroNumerator { row: usize, col: usize },
    #[error("rational denominator must be >= 1")]
    ZeroDenominator,
    #[error("weight {index} = {value} is negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1 within {CONSTRAINT_TOL:e}")]
    WeightsNotNormalized { sum: f64 },
    #[error("empty weight vector")]
    EmptyWeights,
    #[error("csv row {row} has {got} entries, expected {expected}")]
    RaggedCsvRow { row: usize, got: usize, expected: usize },
    #[error("csv entry at row {row}, column {col}: {message}")]
    BadCsvEntry { row: usize, col: usize, message: String },
    #[error("csv input has no rows")]
    EmptyCsv,
}

/// A strictly positive k×m conditional model; a point on the positive cone, or of
/// the product of simplexes when `normalized` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveConditionalModel {
    entries: Array2<f64>,
    normalized: bool,
}

impl PositiveConditionalModel {
    /// Validates shape (k >= 1, m >= 2), strict positivity, finiteness, and row
    /// normalization when the flag is set.
    pub fn new(entries: Array2<f64>, normalized: bool) -> Result<Self, ModelError> {
        let (rows, cols) = entries.dim();
        if rows < 1 || cols < 2 {
            return Err(ModelError::BadShape { rows, cols });
        }
        for ((i, j), &v) in entries.indexed_iter() {
            if !v.is_finite() {
                return Err(ModelError::NonFiniteEntry { row: i, col: j, value: v });
            }
            if v <= 0.0 {
                return Err(ModelError::NonPositiveEntry { row: i, col: j, value: v });
            }
        }
        if normalized {
            for (i, row) in entries.rows().into_iter().enumerate() {
                let sum = kahan_sum(row.iter().copied());
                if (sum - 1.0).abs() > CONSTRAINT_TOL {
                    return Err(ModelError::NotNormalized { row: i, sum });
                }
            }
        }
        Ok(Self { entries, normalized })
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>], normalized: bool) -> Result<Self, ModelError> {
        Self::new(rows_to_array(rows)?, normalized)
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Total L1 mass `|M|` (all entries are positive, so no absolute values needed).
    pub fn l1_norm(&self) -> f64 {
        kahan_sum(self.entries.iter().copied())
    }

    /// Row mass `|M_i|`.
    pub fn row_l1_norm(&self, row: usize) -> Result<f64, ModelError> {
        if row >= self.rows() {
            return Err(ModelError::RowIndexOutOfRange { index: row, rows: self.rows() });
        }
        Ok(kahan_sum(self.entries.row(row).iter().copied()))
    }

    /// All row masses at once.
    pub fn row_l1_norms(&self) -> Array1<f64> {
        Array1::from_iter(
            self.entries
                .rows()
                .into_iter()
                .map(|r| kahan_sum(r.iter().copied())),
        )
    }

    /// Divides each row by its mass. Idempotent up to float rounding; positivity
    /// guarantees nonzero row sums.
    pub fn normalize_rows(&self) -> Self {
        let mut out = self.entries.clone();
        for mut row in out.rows_mut() {
            let sum = kahan_sum(row.iter().copied());
            row.mapv_inplace(|v| v / sum);
        }
        Self { entries: out, normalized: true }
    }

    /// Nearest rational model with common denominator `z`: numerators are
    /// `round(z * entry)` clamped to >= 1. When no clamping occurs the entrywise
    /// error is at most `1/(2z)`.
    pub fn rationalize(&self, z: u64) -> Result<RationalConditionalModel, ModelError> {
        if z == 0 {
            return Err(ModelError::ZeroDenominator);
        }
        let numerators = self.entries.mapv(|v| {
            let n = (v * z as f64).round();
            if n < 1.0 {
                1
            } else {
                n as u64
            }
        });
        RationalConditionalModel::new(numerators, z)
    }
}

/// A tangent vector at a conditional model: coefficients over the entrywise
/// basis. In a normalized context every row of coefficients sums to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    coeffs: Array2<f64>,
    normalized_context: bool,
}

impl TangentVector {
    pub fn new(coeffs: Array2<f64>, normalized_context: bool) -> Result<Self, ModelError> {
        let (rows, cols) = coeffs.dim();
        if rows < 1 || cols < 2 {
            return Err(ModelError::BadShape { rows, cols });
        }
        for ((i, j), &v) in coeffs.indexed_iter() {
            if !v.is_finite() {
                return Err(ModelError::NonFiniteEntry { row: i, col: j, value: v });
            }
        }
        if normalized_context {
            for (i, row) in coeffs.rows().into_iter().enumerate() {
                let sum = kahan_sum(row.iter().copied());
                if sum.abs() > CONSTRAINT_TOL {
                    return Err(ModelError::RowSumNotZero { row: i, sum });
                }
            }
        }
        Ok(Self { coeffs, normalized_context })
    }

    pub fn from_rows(rows: &[Vec<f64>], normalized_context: bool) -> Result<Self, ModelError> {
        Self::new(rows_to_array(rows)?, normalized_context)
    }

    /// Projects an arbitrary coefficient matrix onto the normalized-context
    /// tangent space by subtracting each row's mean.
    pub fn project_zero_row_sums(raw: &Array2<f64>) -> Result<Self, ModelError> {
        let mut coeffs = raw.clone();
        for mut row in coeffs.rows_mut() {
            let mean = kahan_sum(row.iter().copied()) / row.len() as f64;
            row.mapv_inplace(|v| v - mean);
        }
        Self::new(coeffs, true)
    }

    pub fn rows(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn cols(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn coeff(&self, row: usize, col: usize) -> f64 {
        self.coeffs[(row, col)]
    }

    pub fn is_normalized_context(&self) -> bool {
        self.normalized_context
    }
}

/// A conditional model with exactly representable entries `numerators / denominator`.
///
/// The rational-uniformizer construction consumes this form so its constant-matrix
/// identity can be asserted exactly instead of within a float tolerance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalConditionalModel {
    numerators: Array2<u64>,
    denominator: u64,
}

impl RationalConditionalModel {
    pub fn new(numerators: Array2<u64>, denominator: u64) -> Result<Self, ModelError> {
        let (rows, cols) = numerators.dim();
        if rows < 1 || cols < 2 {
            return Err(ModelError::BadShape { rows, cols });
        }
        if denominator == 0 {
            return Err(ModelError::ZeroDenominator);
        }
        for ((i, j), &v) in numerators.indexed_iter() {
            if v == 0 {
                return Err(ModelError::ZeroNumerator { row: i, col: j });
            }
        }
        Ok(Self { numerators, denominator })
    }

    pub fn from_rows(rows: &[Vec<u64>], denominator: u64) -> Result<Self, ModelError> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut flat = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(ModelError::RaggedCsvRow { row: i, got: row.len(), expected: cols });
            }
            flat.extend_from_slice(row);
        }
        let arr = Array2::from_shape_vec((rows.len(), cols), flat)
            .map_err(|_| ModelError::BadShape { rows: rows.len(), cols })?;
        Self::new(arr, denominator)
    }

    pub fn rows(&self) -> usize {
        self.numerators.nrows()
    }

    pub fn cols(&self) -> usize {
        self.numerators.ncols()
    }

    pub fn numerators(&self) -> &Array2<u64> {
        &self.numerators
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    /// Exact entry value as a rational.
    pub fn value(&self, row: usize, col: usize) -> BigRational {
        from_u64(self.numerators[(row, col)]) / from_u64(self.denominator)
    }

    /// Row sum of numerators, `|M̃_i|`.
    pub fn row_numerator_sum(&self, row: usize) -> u64 {
        self.numerators.row(row).iter().sum()
    }

    /// Total numerator mass `|M̃|`.
    pub fn total_numerator(&self) -> u64 {
        self.numerators.iter().sum()
    }

    /// Float view of the model.
    pub fn to_model(&self) -> Result<PositiveConditionalModel, ModelError> {
        let z = self.denominator as f64;
        PositiveConditionalModel::new(self.numerators.mapv(|n| n as f64 / z), false)
    }
}

/// An empirical distribution over the explanatory space: non-negative weights
/// summing to 1. Zero weights are allowed; rows with zero weight contribute
/// nothing to the divergence functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    weights: Array1<f64>,
}

impl EmpiricalDistribution {
    pub fn new(weights: Array1<f64>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::EmptyWeights);
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(ModelError::NegativeWeight { index: i, value: w });
            }
        }
        let sum = kahan_sum(weights.iter().copied());
        if (sum - 1.0).abs() > CONSTRAINT_TOL {
            return Err(ModelError::WeightsNotNormalized { sum });
        }
        Ok(Self { weights })
    }

    pub fn from_slice(weights: &[f64]) -> Result<Self, ModelError> {
        Self::new(Array1::from_vec(weights.to_vec()))
    }

    pub fn uniform(k: usize) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::EmptyWeights);
        }
        Ok(Self { weights: Array1::from_elem(k, 1.0 / k as f64) })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }
}

fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>, ModelError> {
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut flat = Vec::with_capacity(rows.len() * cols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(ModelError::RaggedCsvRow { row: i, got: row.len(), expected: cols });
        }
        flat.extend_from_slice(row);
    }
    Array2::from_shape_vec((rows.len(), cols), flat)
        .map_err(|_| ModelError::BadShape { rows: rows.len(), cols })
}

/// Parses the matrix CSV format: one row per line, comma-separated decimal
/// entries, no header. Ragged rows are rejected.
pub fn parse_matrix_csv(text: &str) -> Result<Array2<f64>, ModelError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (j, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|e| ModelError::BadCsvEntry {
                row: i,
                col: j,
                message: format!("{e}"),
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(ModelError::RaggedCsvRow {
                    row: i,
                    got: row.len(),
                    expected: first.len(),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ModelError::EmptyCsv);
    }
    rows_to_array(&rows)
}

/// Writes a matrix in the same CSV format `parse_matrix_csv` reads.
pub fn write_matrix_csv(matrix: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in matrix.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
