//! Congruent embeddings of conditional models by Markov morphisms.
//!
//! A morphism from k×m models to l×n models is built from a row-stochastic
//! matrix `R` (k×l, rows supported on the blocks of a k-block partition of the
//! l target columns) and k stochastic matrices `Q(i)` (m×n, rows supported on
//! the blocks of m-block partitions of the n target columns). It acts by
//!
//! ```text
//! f(M) = Rᵀ (M ⊗ Q),   [M ⊗ Q]_ij = [M Q(i)]_ij
//! ```
//!
//! Because every column of `R` and of each `Q(i)` has exactly one nonzero
//! entry, each entry of `f(M)` is a single product `R_si Q(s)_tj M_st`; the map
//! is injective, norm preserving, and models the extraction of sufficient
//! statistics on the response and explanatory spaces.
//!
//! The push-forward sends the basis tangent `∂ab` to the matrix
//! `(i,j) ↦ R_ai Q(a)_bj`; pulling a metric `g` back through `f` evaluates `g`
//! at `f(M)` on pushed-forward vectors. For every metric in the invariant
//! family these morphisms are isometries; [`check_isometry`] certifies that
//! numerically for a concrete `(f, params, M)` by comparing all basis pairs.
//!
//! Stochastic entries are kept as exact rationals so row sums and the
//! constant-matrix identity of [`rational_uniformizer`] can be checked
//! bit-exactly; float views are taken at the boundary of the float paths.
//!
//! Note on normalized models: `|f(M)| = |M|` always holds, but the image of a
//! row-normalized model is itself row-normalized only when `R` is a permutation
//! matrix; otherwise the output rows sum to the `R` entries. Outputs are
//! flagged accordingly.

use ndarray::Array2;
use num::rational::BigRational;
use num::traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{metric_basis, MetricError, MetricParams};
use crate::model::{ModelError, PositiveConditionalModel, RationalConditionalModel, TangentVector};
use crate::rational::{format_rational, from_u64, parse_rational, to_f64};

/// Default cap on `rows * cols` of a rational-uniformizer output; the
/// dimensions grow multiplicatively with the model's numerators.
pub const DEFAULT_SIZE_CAP: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum MorphismError {
    #[error("partition has no blocks")]
    EmptyPartition,
    #[error("partition block {block} is empty")]
    EmptyBlock { block: usize },
    #[error("element {element} appears in more than one block")]
    Overlap { element: usize },
    #[error("element {element} is covered by no block")]
    Gap { element: usize },
    #[error("element {element} out of range for ground set of size {n}")]
    ElementOutOfRange { element: usize, n: usize },
    #[error("weight row {row} has {got} entries, block has {expected}")]
    WeightLengthMismatch { row: usize, got: usize, expected: usize },
    #[error("weight at row {row}, position {pos} is not positive")]
    NonPositiveWeight { row: usize, pos: usize },
    #[error("row {row} sums to {sum}, expected exactly 1")]
    RowSumNotOne { row: usize, sum: String },
    #[error("entry ({row},{col}) violates the partition support")]
    SupportMismatch { row: usize, col: usize },
    #[error("matrix is {rows}x{cols} but partition expects {expected_rows}x{expected_cols}")]
    DenseShapeMismatch { rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("morphism needs at least one Q matrix")]
    NoQMatrices,
    #[error("Q matrix {index} is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    InconsistentQ { index: usize, rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("R has {r_rows} rows but {q_count} Q matrices were given")]
    RQCountMismatch { r_rows: usize, q_count: usize },
    #[error("shape mismatch: morphism expects {expected_rows}x{expected_cols}, got {got_rows}x{got_cols}")]
    ShapeMismatch { expected_rows: usize, expected_cols: usize, got_rows: usize, got_cols: usize },
    #[error("not a permutation of 0..{n}")]
    NotAPermutation { n: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolated(&'static str),
    #[error("index ({a},{b}) out of range for {rows}x{cols}")]
    IndexOutOfRange { a: usize, b: usize, rows: usize, cols: usize },
    #[error("uniformizer output would be {rows}x{cols} = {cells} cells, above the cap {cap}")]
    SizeCapExceeded { rows: u64, cols: u128, cells: u128, cap: u64 },
    #[error("replication factors must be at least 1")]
    InvalidReplication,
    #[error("composite of the two morphisms is not a Markov morphism: source row {row} sees inconsistent response statistics")]
    NotComposable { row: usize },
    #[error("bad morphism JSON: {0}")]
    BadJson(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A partition of `{0, …, n-1}` into ordered, nonempty, disjoint blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    // column -> (block index, position within the sorted block)
    owner: Vec<(usize, usize)>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>, n: usize) -> Result<Self, MorphismError> {
        if blocks.is_empty() {
            return Err(MorphismError::EmptyPartition);
        }
        let mut sorted: Vec<Vec<usize>> = Vec::with_capacity(blocks.len());
        for (i, block) in blocks.into_iter().enumerate() {
            if block.is_empty() {
                return Err(MorphismError::EmptyBlock { block: i });
            }
            let mut b = block;
            b.sort_unstable();
            sorted.push(b);
        }
        let mut owner = vec![None; n];
        for (i, block) in sorted.iter().enumerate() {
            for (pos, &element) in block.iter().enumerate() {
                if element >= n {
                    return Err(MorphismError::ElementOutOfRange { element, n });
                }
                if owner[element].is_some() {
                    return Err(MorphismError::Overlap { element });
                }
                owner[element] = Some((i, pos));
            }
        }
        if let Some(element) = owner.iter().position(|o| o.is_none()) {
            return Err(MorphismError::Gap { element });
        }
        let owner = owner.into_iter().map(|o| o.expect("checked")).collect();
        Ok(Self { blocks: sorted, owner })
    }

    /// The partition of `{0, …, n-1}` into singletons.
    pub fn singletons(n: usize) -> Self {
        Self::new((0..n).map(|i| vec![i]).collect(), n).expect("singletons are valid")
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn ground_size(&self) -> usize {
        self.owner.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    /// Which block contains `element`, and at which position.
    pub fn owner(&self, element: usize) -> (usize, usize) {
        self.owner[element]
    }
}

/// A stochastic matrix whose row i is supported exactly on block i of a
/// partition; consequently every column has exactly one nonzero entry.
///
/// Weights are exact rationals aligned with the ascending column order of each
/// block, and every row sums to exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStochastic {
    partition: Partition,
    weights: Vec<Vec<BigRational>>,
}

impl PartitionStochastic {
    pub fn new(partition: Partition, weights: Vec<Vec<BigRational>>) -> Result<Self, MorphismError> {
        if weights.len() != partition.num_blocks() {
            return Err(MorphismError::DenseShapeMismatch {
                rows: weights.len(),
                cols: partition.ground_size(),
                expected_rows: partition.num_blocks(),
                expected_cols: partition.ground_size(),
            });
        }
        for (row, (block, w)) in partition.blocks().iter().zip(&weights).enumerate() {
            if w.len() != block.len() {
                return Err(MorphismError::WeightLengthMismatch {
                    row,
                    got: w.len(),
                    expected: block.len(),
                });
            }
            let mut sum = BigRational::zero();
            for (pos, value) in w.iter().enumerate() {
                if *value <= BigRational::zero() {
                    return Err(MorphismError::NonPositiveWeight { row, pos });
                }
                sum += value;
            }
            if !sum.is_one() {
                return Err(MorphismError::RowSumNotOne { row, sum: format_rational(&sum) });
            }
        }
        Ok(Self { partition, weights })
    }

    /// Validating constructor from a dense matrix: the support must match the
    /// partition blocks exactly and rows must sum to exactly 1.
    pub fn from_dense(
        entries: &Array2<BigRational>,
        partition: Partition,
    ) -> Result<Self, MorphismError> {
        let (rows, cols) = entries.dim();
        if rows != partition.num_blocks() || cols != partition.ground_size() {
            return Err(MorphismError::DenseShapeMismatch {
                rows,
                cols,
                expected_rows: partition.num_blocks(),
                expected_cols: partition.ground_size(),
            });
        }
        for ((i, j), v) in entries.indexed_iter() {
            let in_block = partition.owner(j).0 == i;
            if in_block != !v.is_zero() {
                return Err(MorphismError::SupportMismatch { row: i, col: j });
            }
        }
        let weights = partition
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, block)| block.iter().map(|&j| entries[(i, j)].clone()).collect())
            .collect();
        Self::new(partition, weights)
    }

    /// Uniform weights `1/|block|` on every block.
    pub fn uniform(partition: Partition) -> Self {
        let weights = partition
            .blocks()
            .iter()
            .map(|block| {
                let w = BigRational::new(1.into(), (block.len() as u64).into());
                vec![w; block.len()]
            })
            .collect();
        Self { partition, weights }
    }

    pub fn nrows(&self) -> usize {
        self.partition.num_blocks()
    }

    pub fn ncols(&self) -> usize {
        self.partition.ground_size()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn weights(&self) -> &[Vec<BigRational>] {
        &self.weights
    }

    /// Exact entry value, zero off the support.
    pub fn entry(&self, row: usize, col: usize) -> BigRational {
        let (block, pos) = self.partition.owner(col);
        if block == row {
            self.weights[row][pos].clone()
        } else {
            BigRational::zero()
        }
    }

    /// The unique nonzero of a column: `(row, value)`.
    pub fn column_owner(&self, col: usize) -> (usize, &BigRational) {
        let (block, pos) = self.partition.owner(col);
        (block, &self.weights[block][pos])
    }

    /// True when all rows have equal support size and all positive entries are
    /// identical.
    pub fn is_uniform(&self) -> bool {
        let size = self.partition.block(0).len();
        let value = &self.weights[0][0];
        self.partition.blocks().iter().all(|b| b.len() == size)
            && self.weights.iter().all(|row| row.iter().all(|w| w == value))
    }

    pub fn to_dense(&self) -> Array2<BigRational> {
        let mut out = Array2::from_elem((self.nrows(), self.ncols()), BigRational::zero());
        for (i, (block, row)) in self.partition.blocks().iter().zip(&self.weights).enumerate() {
            for (&j, w) in block.iter().zip(row) {
                out[(i, j)] = w.clone();
            }
        }
        out
    }

    pub fn to_dense_f64(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows(), self.ncols()));
        for (i, (block, row)) in self.partition.blocks().iter().zip(&self.weights).enumerate() {
            for (&j, w) in block.iter().zip(row) {
                out[(i, j)] = to_f64(w);
            }
        }
        out
    }

    /// True iff every block is a singleton and every weight is 1.
    pub fn is_permutation(&self) -> bool {
        self.partition.blocks().iter().all(|b| b.len() == 1)
            && self.weights.iter().all(|row| row[0].is_one())
    }

    fn float_view(&self) -> FloatView {
        let col_owner = (0..self.ncols())
            .map(|j| {
                let (row, w) = self.column_owner(j);
                (row, to_f64(w))
            })
            .collect();
        let row_supports = self
            .partition
            .blocks()
            .iter()
            .zip(&self.weights)
            .map(|(block, row)| block.iter().zip(row).map(|(&j, w)| (j, to_f64(w))).collect())
            .collect();
        FloatView { col_owner, row_supports }
    }

    fn scaled_row_unchecked(&self, row: usize, factor: &BigRational) -> Self {
        let mut weights = self.weights.clone();
        for w in &mut weights[row] {
            *w *= factor;
        }
        Self { partition: self.partition.clone(), weights }
    }
}

/// Float view of a partition-stochastic matrix: per-column owners and per-row
/// supports.
struct FloatView {
    col_owner: Vec<(usize, f64)>,
    row_supports: Vec<Vec<(usize, f64)>>,
}

impl FloatView {
    fn row_sum(&self, row: usize) -> f64 {
        self.row_supports[row].iter().map(|&(_, v)| v).sum()
    }
}

/// The predicate behind [`PartitionStochastic::from_dense`]: support matches the
/// partition blocks and rows sum to exactly 1.
pub fn is_partition_stochastic(entries: &Array2<BigRational>, partition: &Partition) -> bool {
    PartitionStochastic::from_dense(entries, partition.clone()).is_ok()
}

/// Uniformity predicate on a dense matrix with respect to a partition.
pub fn is_uniform_partition_stochastic(
    entries: &Array2<BigRational>,
    partition: &Partition,
) -> bool {
    PartitionStochastic::from_dense(entries, partition.clone())
        .map(|q| q.is_uniform())
        .unwrap_or(false)
}

/// Row product `[M ⊗ Q]_ij = Σ_s M_is Q(i)_sj`: row i of the output is row i of
/// the plain product `M · Q(i)`. Preserves the L1 norm whenever every `Q(i)` is
/// row-stochastic.
pub fn row_product(m: &Array2<f64>, qs: &[Array2<f64>]) -> Result<Array2<f64>, MorphismError> {
    let (k, mm) = m.dim();
    if qs.len() != k {
        return Err(MorphismError::RQCountMismatch { r_rows: k, q_count: qs.len() });
    }
    let n = qs.first().map(|q| q.ncols()).unwrap_or(0);
    for (i, q) in qs.iter().enumerate() {
        if q.nrows() != mm || q.ncols() != n {
            return Err(MorphismError::InconsistentQ {
                index: i,
                rows: q.nrows(),
                cols: q.ncols(),
                expected_rows: mm,
                expected_cols: n,
            });
        }
    }
    let mut out = Array2::zeros((k, n));
    for i in 0..k {
        for j in 0..n {
            let mut acc = 0.0;
            for s in 0..mm {
                acc += m[(i, s)] * qs[i][(s, j)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// A congruent embedding by a Markov morphism: `f(M) = Rᵀ (M ⊗ Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMorphism {
    r: PartitionStochastic,
    q: Vec<PartitionStochastic>,
}

impl MarkovMorphism {
    pub fn new(r: PartitionStochastic, q: Vec<PartitionStochastic>) -> Result<Self, MorphismError> {
        if q.is_empty() {
            return Err(MorphismError::NoQMatrices);
        }
        if r.nrows() != q.len() {
            return Err(MorphismError::RQCountMismatch { r_rows: r.nrows(), q_count: q.len() });
        }
        let (m, n) = (q[0].nrows(), q[0].ncols());
        for (index, qi) in q.iter().enumerate() {
            if qi.nrows() != m || qi.ncols() != n {
                return Err(MorphismError::InconsistentQ {
                    index,
                    rows: qi.nrows(),
                    cols: qi.ncols(),
                    expected_rows: m,
                    expected_cols: n,
                });
            }
        }
        Ok(Self { r, q })
    }

    /// The identity embedding of k×m models.
    pub fn identity(k: usize, m: usize) -> Self {
        assert!(k >= 1 && m >= 1, "identity morphism needs positive dimensions");
        let r = PartitionStochastic::uniform(Partition::singletons(k));
        let q = vec![PartitionStochastic::uniform(Partition::singletons(m)); k];
        Self { r, q }
    }

    pub fn r(&self) -> &PartitionStochastic {
        &self.r
    }

    pub fn q(&self) -> &[PartitionStochastic] {
        &self.q
    }

    /// Source dimensions (k, m).
    pub fn source_dims(&self) -> (usize, usize) {
        (self.r.nrows(), self.q[0].nrows())
    }

    /// Target dimensions (l, n).
    pub fn target_dims(&self) -> (usize, usize) {
        (self.r.ncols(), self.q[0].ncols())
    }

    pub fn r_is_permutation(&self) -> bool {
        self.r.is_permutation()
    }

    fn check_source_shape(&self, rows: usize, cols: usize) -> Result<(), MorphismError> {
        let (k, m) = self.source_dims();
        if rows != k || cols != m {
            return Err(MorphismError::ShapeMismatch {
                expected_rows: k,
                expected_cols: m,
                got_rows: rows,
                got_cols: cols,
            });
        }
        Ok(())
    }

    /// Applies the single-nonzero-term map `(i,j) ↦ R_si Q(s)_tj X_st` to a raw
    /// coefficient matrix.
    fn map_entries(&self, src: &Array2<f64>) -> Array2<f64> {
        let (l, n) = self.target_dims();
        let r_view = self.r.float_view();
        let q_views: Vec<FloatView> = self.q.iter().map(|q| q.float_view()).collect();
        let mut out = Array2::zeros((l, n));
        for i in 0..l {
            let (s, rv) = r_view.col_owner[i];
            let qv = &q_views[s];
            for j in 0..n {
                let (t, qw) = qv.col_owner[j];
                out[(i, j)] = rv * qw * src[(s, t)];
            }
        }
        out
    }

    /// `f(M) = Rᵀ (M ⊗ Q)`. Norm preserving and injective; the output carries
    /// the normalized flag only when the input is normalized and `R` is a
    /// permutation matrix.
    pub fn apply(&self, model: &PositiveConditionalModel) -> Result<PositiveConditionalModel, MorphismError> {
        self.check_source_shape(model.rows(), model.cols())?;
        let out = self.map_entries(model.entries());
        let normalized = model.is_normalized() && self.r_is_permutation();
        Ok(PositiveConditionalModel::new(out, normalized)?)
    }

    /// Exact-rational application to a rational model; every output entry is a
    /// single product of rationals, so no rounding occurs anywhere.
    pub fn apply_exact(
        &self,
        model: &RationalConditionalModel,
    ) -> Result<Array2<BigRational>, MorphismError> {
        self.check_source_shape(model.rows(), model.cols())?;
        let (l, n) = self.target_dims();
        let values: Vec<Vec<BigRational>> = (0..model.rows())
            .map(|s| (0..model.cols()).map(|t| model.value(s, t)).collect())
            .collect();
        let mut data = Vec::with_capacity(l * n);
        for i in 0..l {
            let (s, rv) = self.r.column_owner(i);
            let scaled: Vec<BigRational> = values[s].iter().map(|v| rv * v).collect();
            for j in 0..n {
                let (t, qw) = self.q[s].column_owner(j);
                data.push(qw * &scaled[t]);
            }
        }
        Ok(Array2::from_shape_vec((l, n), data).expect("dimensions agree"))
    }

    /// Push-forward of a tangent vector: the basis tangent `∂ab` maps to the
    /// matrix `(i,j) ↦ R_ai Q(a)_bj`, extended linearly. Zero row sums are
    /// preserved (each output row sums to a mix of the source row sums), so the
    /// normalized-context flag propagates.
    pub fn push_forward(&self, v: &TangentVector) -> Result<TangentVector, MorphismError> {
        self.check_source_shape(v.rows(), v.cols())?;
        let out = self.map_entries(v.coeffs());
        Ok(TangentVector::new(out, v.is_normalized_context())?)
    }

    /// Diagnostic constructor: a copy with row `row` of `Q(which_q)` rescaled by
    /// `factor`, deliberately breaking row-stochasticity. The result violates
    /// this type's contract; it exists so sensitivity of the isometry check can
    /// be demonstrated.
    pub fn with_scaled_q_row(&self, which_q: usize, row: usize, factor: &BigRational) -> Self {
        let mut q = self.q.clone();
        q[which_q] = q[which_q].scaled_row_unchecked(row, factor);
        Self { r: self.r.clone(), q }
    }

    pub fn to_json(&self) -> String {
        let as_json = |s: &PartitionStochastic| StochasticJson {
            entries: s
                .to_dense()
                .rows()
                .into_iter()
                .map(|row| row.iter().map(format_rational).collect())
                .collect(),
            blocks: s.partition().blocks().to_vec(),
        };
        let doc = MorphismJson {
            r: as_json(&self.r),
            q: self.q.iter().map(as_json).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("morphism JSON serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, MorphismError> {
        let doc: MorphismJson =
            serde_json::from_str(text).map_err(|e| MorphismError::BadJson(e.to_string()))?;
        let parse_stoch = |s: &StochasticJson| -> Result<PartitionStochastic, MorphismError> {
            let rows = s.entries.len();
            let cols = s.entries.first().map(|r| r.len()).unwrap_or(0);
            let mut dense = Array2::from_elem((rows, cols), BigRational::zero());
            for (i, row) in s.entries.iter().enumerate() {
                if row.len() != cols {
                    return Err(MorphismError::BadJson(format!(
                        "entries row {i} has {} fields, expected {cols}",
                        row.len()
                    )));
                }
                for (j, field) in row.iter().enumerate() {
                    dense[(i, j)] = parse_rational(field)
                        .map_err(|e| MorphismError::BadJson(format!("entry ({i},{j}): {e}")))?;
                }
            }
            let partition = Partition::new(s.blocks.clone(), cols)?;
            PartitionStochastic::from_dense(&dense, partition)
        };
        let r = parse_stoch(&doc.r)?;
        let q = doc.q.iter().map(parse_stoch).collect::<Result<Vec<_>, _>>()?;
        Self::new(r, q)
    }
}

#[derive(Serialize, Deserialize)]
struct StochasticJson {
    entries: Vec<Vec<String>>,
    blocks: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct MorphismJson {
    #[serde(rename = "R")]
    r: StochasticJson,
    #[serde(rename = "Q")]
    q: Vec<StochasticJson>,
}

fn validate_permutation(p: &[usize], n: usize) -> Result<(), MorphismError> {
    if p.len() != n {
        return Err(MorphismError::NotAPermutation { n });
    }
    let mut seen = vec![false; n];
    for &v in p {
        if v >= n || seen[v] {
            return Err(MorphismError::NotAPermutation { n });
        }
        seen[v] = true;
    }
    Ok(())
}

fn permutation_stochastic(p: &[usize]) -> PartitionStochastic {
    let blocks = p.iter().map(|&target| vec![target]).collect();
    let partition = Partition::new(blocks, p.len()).expect("permutation blocks are valid");
    PartitionStochastic::uniform(partition)
}

/// The relabeling morphism: `R` is the permutation matrix of `sigma` over rows
/// and `Q(i)` the permutation matrix of `pis[i]` over columns, so entry (a, b)
/// of the model moves to (sigma(a), pis(a)(b)).
pub fn permutation_morphism(
    sigma: &[usize],
    pis: &[Vec<usize>],
) -> Result<MarkovMorphism, MorphismError> {
    let k = sigma.len();
    validate_permutation(sigma, k)?;
    if pis.len() != k {
        return Err(MorphismError::RQCountMismatch { r_rows: k, q_count: pis.len() });
    }
    let m = pis.first().map(|p| p.len()).unwrap_or(0);
    for pi in pis {
        validate_permutation(pi, m)?;
    }
    let r = permutation_stochastic(sigma);
    let q = pis.iter().map(|pi| permutation_stochastic(pi)).collect();
    MarkovMorphism::new(r, q)
}

/// Extends forced `source -> target` assignments to a full permutation by
/// mapping the remaining sources, in increasing order, to the remaining targets
/// in increasing order. Deterministic so transported bases are reproducible.
fn extend_permutation(n: usize, forced: &[(usize, usize)]) -> Vec<usize> {
    let mut map = vec![None; n];
    let mut used = vec![false; n];
    for &(src, dst) in forced {
        map[src] = Some(dst);
        used[dst] = true;
    }
    let mut free_targets = (0..n).filter(|&t| !used[t]);
    map.into_iter()
        .map(|slot| slot.unwrap_or_else(|| free_targets.next().expect("counts match")))
        .collect()
}

/// A permutation morphism carrying the basis pair `(∂_{a1 b1}, ∂_{c1 d1})` to
/// `(∂_{a2 b2}, ∂_{c2 d2})` under push-forward. Requires `a1 != c1` and
/// `a2 != c2`; the two response permutations are then forced at independent
/// rows and extended canonically.
#[allow(clippy::too_many_arguments)]
pub fn solve_basis_transport(
    src_first: (usize, usize),
    src_second: (usize, usize),
    dst_first: (usize, usize),
    dst_second: (usize, usize),
    k: usize,
    m: usize,
) -> Result<MarkovMorphism, MorphismError> {
    let (a1, b1) = src_first;
    let (c1, d1) = src_second;
    let (a2, b2) = dst_first;
    let (c2, d2) = dst_second;
    for &(a, b) in &[src_first, src_second, dst_first, dst_second] {
        if a >= k || b >= m {
            return Err(MorphismError::IndexOutOfRange { a, b, rows: k, cols: m });
        }
    }
    if a1 == c1 || a2 == c2 {
        return Err(MorphismError::PreconditionViolated(
            "basis transport requires distinct rows in source and target pairs",
        ));
    }
    let sigma = extend_permutation(k, &[(a1, a2), (c1, c2)]);
    let mut pis: Vec<Vec<usize>> = (0..k).map(|_| (0..m).collect()).collect();
    pis[a1] = extend_permutation(m, &[(b1, b2)]);
    pis[c1] = extend_permutation(m, &[(d1, d2)]);
    permutation_morphism(&sigma, &pis)
}

/// The replication morphism from k×m to kz×mw models: `R` uniform on the
/// contiguous blocks `{i*z, …, (i+1)*z - 1}` and a single shared `Q` uniform on
/// `{t*w, …, (t+1)*w - 1}`. Constant matrices map to constant matrices of the
/// same norm.
pub fn uniform_replication(
    k: usize,
    m: usize,
    z: usize,
    w: usize,
) -> Result<MarkovMorphism, MorphismError> {
    if k == 0 || m == 0 || z == 0 || w == 0 {
        return Err(MorphismError::InvalidReplication);
    }
    let contiguous = |count: usize, width: usize| -> Partition {
        let blocks = (0..count)
            .map(|i| (i * width..(i + 1) * width).collect())
            .collect();
        Partition::new(blocks, count * width).expect("contiguous blocks are valid")
    };
    let r = PartitionStochastic::uniform(contiguous(k, z));
    let q = vec![PartitionStochastic::uniform(contiguous(m, w)); k];
    MarkovMorphism::new(r, q)
}

/// The uniformizing morphism of a rational model `M = M̃/z`: maps k×m models
/// into `|M̃| × Π_s |M̃_s|` models, chosen so `M` itself lands on the constant
/// matrix with every entry `(z · Π_s |M̃_s|)⁻¹` — exactly, in rational
/// arithmetic.
///
/// Row j of `Q(i)` has `M̃_ij · Π_{s≠i} |M̃_s|` nonzeros of that reciprocal
/// value and row i of `R` has `|M̃_i|` nonzeros of value `|M̃_i|⁻¹`; supports
/// are laid out as consecutive column blocks in row-major order, which keeps
/// the construction deterministic (any layout satisfying the row constraints
/// works).
pub fn rational_uniformizer(
    model: &RationalConditionalModel,
    size_cap: u64,
) -> Result<MarkovMorphism, MorphismError> {
    let k = model.rows();
    let m = model.cols();
    let row_sums: Vec<u64> = (0..k).map(|i| model.row_numerator_sum(i)).collect();
    let total: u64 = model.total_numerator();
    let col_count: u128 = row_sums.iter().map(|&s| s as u128).product();
    let cells = total as u128 * col_count;
    if cells > size_cap as u128 {
        return Err(MorphismError::SizeCapExceeded {
            rows: total,
            cols: col_count,
            cells,
            cap: size_cap,
        });
    }
    let col_count = col_count as usize;

    // R: row i owns a contiguous block of |M̃_i| columns.
    let mut start = 0usize;
    let mut r_blocks = Vec::with_capacity(k);
    for &s in &row_sums {
        let width = s as usize;
        r_blocks.push((start..start + width).collect());
        start += width;
    }
    let r_partition = Partition::new(r_blocks, total as usize)?;
    let r_weights = row_sums
        .iter()
        .map(|&s| vec![BigRational::new(1.into(), s.into()); s as usize])
        .collect();
    let r = PartitionStochastic::new(r_partition, r_weights)?;

    // Q(i): row j owns M̃_ij · Π_{s≠i} |M̃_s| consecutive columns.
    let mut q = Vec::with_capacity(k);
    for (i, &row_sum) in row_sums.iter().enumerate() {
        let others: u64 = (col_count as u128 / row_sum as u128) as u64;
        let mut blocks = Vec::with_capacity(m);
        let mut cursor = 0usize;
        let mut sizes = Vec::with_capacity(m);
        for j in 0..m {
            let width = (model.numerators()[(i, j)] * others) as usize;
            blocks.push((cursor..cursor + width).collect());
            sizes.push(width as u64);
            cursor += width;
        }
        let partition = Partition::new(blocks, col_count)?;
        let weights = sizes
            .iter()
            .map(|&w| vec![BigRational::new(1.into(), w.into()); w as usize])
            .collect();
        q.push(PartitionStochastic::new(partition, weights)?);
    }
    MarkovMorphism::new(r, q)
}

/// The constant value `(z · Π_s |M̃_s|)⁻¹` that [`rational_uniformizer`] sends
/// every entry of its defining model to.
pub fn uniformizer_constant(model: &RationalConditionalModel) -> BigRational {
    let prod = (0..model.rows())
        .map(|i| from_u64(model.row_numerator_sum(i)))
        .fold(BigRational::one(), |acc, v| acc * v);
    (from_u64(model.denominator()) * prod).recip()
}

/// Composes two embeddings: the result applies `f` first, then `g`.
///
/// Conditional morphisms are not closed under composition in general — when a
/// block of `f`'s explanatory statistic spans target rows whose `g`-response
/// statistics differ, the composite is not of the `Rᵀ(M ⊗ Q)` form and
/// `NotComposable` is returned. Whenever a representation exists it is found
/// and returned (in particular: `f` with permutation `R`, shared-`Q` maps like
/// replications, and all identity/permutation combinations compose).
pub fn compose(f: &MarkovMorphism, g: &MarkovMorphism) -> Result<MarkovMorphism, MorphismError> {
    let (l, n) = f.target_dims();
    let (gl, gn) = g.source_dims();
    if (l, n) != (gl, gn) {
        return Err(MorphismError::ShapeMismatch {
            expected_rows: l,
            expected_cols: n,
            got_rows: gl,
            got_cols: gn,
        });
    }
    let (k, m) = f.source_dims();
    let (target_rows, target_cols) = g.target_dims();

    // R_h = R_f · R_g, sparse: column u is owned by the chain owner of u.
    let mut r_blocks: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut r_weights: Vec<Vec<BigRational>> = vec![Vec::new(); k];
    for u in 0..target_rows {
        let (i, gv) = g.r().column_owner(u);
        let (s, fv) = f.r().column_owner(i);
        r_blocks[s].push(u);
        r_weights[s].push(fv * gv);
    }
    let r_partition = Partition::new(r_blocks, target_rows)?;
    let r = PartitionStochastic::new(r_partition, r_weights)?;

    // Q_h(s) = Q_f(s) · Q_g(i) must agree for every i in f's block of s.
    let product_q = |s: usize, i: usize| -> Result<PartitionStochastic, MorphismError> {
        let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut weights: Vec<Vec<BigRational>> = vec![Vec::new(); m];
        for v in 0..target_cols {
            let (j, gv) = g.q()[i].column_owner(v);
            let (t, fv) = f.q()[s].column_owner(j);
            blocks[t].push(v);
            weights[t].push(fv * gv);
        }
        let partition = Partition::new(blocks, target_cols)?;
        PartitionStochastic::new(partition, weights)
    };
    let mut q = Vec::with_capacity(k);
    for s in 0..k {
        let block = f.r().partition().block(s);
        let candidate = product_q(s, block[0])?;
        for &i in &block[1..] {
            if product_q(s, i)? != candidate {
                return Err(MorphismError::NotComposable { row: s });
            }
        }
        q.push(candidate);
    }
    MarkovMorphism::new(r, q)
}

/// Precomputed pull-back of an invariant-family metric through a morphism at a
/// fixed model: `(f*g)_M(∂ab, ∂cd) = g_{f(M)}(f_*∂ab, f_*∂cd)`.
///
/// The evaluation exploits the single-nonzero column structure of `R` and
/// `Q(i)` — terms with distinct source rows (or distinct response blocks) pair
/// disjoint target supports — instead of the O(l²n²) quadruple sum, but uses
/// actual entry values throughout, so it stays exact for corrupted morphisms
/// whose support structure is intact.
pub struct PullbackMetric {
    k: usize,
    m: usize,
    a_val: f64,
    b_val: f64,
    c_val: f64,
    total: f64,
    r_row_sums: Vec<f64>,
    q_row_sums: Vec<Vec<f64>>,
    b_core: Vec<f64>,
    c_core: Vec<Vec<f64>>,
}

impl PullbackMetric {
    pub fn new(
        f: &MarkovMorphism,
        params: &MetricParams,
        model: &PositiveConditionalModel,
    ) -> Result<Self, MorphismError> {
        f.check_source_shape(model.rows(), model.cols())?;
        let (k, m) = f.source_dims();
        let fm = f.apply(model)?;
        let total = fm.l1_norm();
        let a_val = params.a().eval(total)?;
        let b_val = params.b().eval(total)?;
        let c_val = params.c().eval(total)?;
        let target_row_sums = fm.row_l1_norms();

        let r_view = f.r().float_view();
        let q_views: Vec<FloatView> = f.q().iter().map(|q| q.float_view()).collect();

        let r_row_sums: Vec<f64> = (0..k).map(|a| r_view.row_sum(a)).collect();
        let q_row_sums: Vec<Vec<f64>> = (0..k)
            .map(|a| (0..m).map(|b| q_views[a].row_sum(b)).collect())
            .collect();

        let mut b_core = vec![0.0; k];
        let mut c_core = vec![vec![0.0; m]; k];
        for a in 0..k {
            for &(i, rv) in &r_view.row_supports[a] {
                b_core[a] += rv * rv / target_row_sums[i];
                for (b, slot) in c_core[a].iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for &(j, qv) in &q_views[a].row_supports[b] {
                        acc += rv * rv * qv * qv / fm.entry(i, j);
                    }
                    *slot += acc;
                }
            }
        }
        Ok(Self { k, m, a_val, b_val, c_val, total, r_row_sums, q_row_sums, b_core, c_core })
    }

    /// `(f*g)_M(∂ab, ∂cd)`.
    pub fn basis(&self, ab: (usize, usize), cd: (usize, usize)) -> Result<f64, MorphismError> {
        let (a, b) = ab;
        let (c, d) = cd;
        for &(x, y) in &[ab, cd] {
            if x >= self.k || y >= self.m {
                return Err(MorphismError::IndexOutOfRange { a: x, b: y, rows: self.k, cols: self.m });
            }
        }
        let mut g = self.a_val
            * self.r_row_sums[a]
            * self.r_row_sums[c]
            * self.q_row_sums[a][b]
            * self.q_row_sums[c][d];
        if a == c {
            g += self.b_val * self.total * self.b_core[a] * self.q_row_sums[a][b] * self.q_row_sums[a][d];
            if b == d {
                g += self.c_val * self.total * self.c_core[a][b];
            }
        }
        Ok(g)
    }
}

/// One-shot pull-back evaluation; use [`PullbackMetric`] when many pairs are
/// needed at the same `(f, params, M)`.
pub fn pull_back_metric(
    f: &MarkovMorphism,
    params: &MetricParams,
    model: &PositiveConditionalModel,
    ab: (usize, usize),
    cd: (usize, usize),
) -> Result<f64, MorphismError> {
    PullbackMetric::new(f, params, model)?.basis(ab, cd)
}

/// Result of comparing a source metric against its pull-back over every basis
/// pair.
#[derive(Debug, Clone, Serialize)]
pub struct IsometryReport {
    pub max_abs_error: f64,
    pub worst_pair: ((usize, usize), (usize, usize)),
    pub pass: bool,
}

/// Certifies the isometry property of `f` for the given metric at the given
/// model: every basis pair must satisfy
/// `|g_M(∂ab,∂cd) − (f*g)_M(∂ab,∂cd)| ≤ tol · (1 + |g_M(∂ab,∂cd)|)`.
///
/// ```
/// use condgeo::{check_isometry, uniform_replication, MetricParams, PositiveConditionalModel};
///
/// let f = uniform_replication(1, 2, 2, 3).unwrap();
/// let m = PositiveConditionalModel::from_rows(&[vec![0.4, 1.1]], false).unwrap();
/// let report = check_isometry(&f, &MetricParams::fisher(), &m, 1e-9).unwrap();
/// assert!(report.pass);
/// ```
pub fn check_isometry(
    f: &MarkovMorphism,
    params: &MetricParams,
    model: &PositiveConditionalModel,
    tol: f64,
) -> Result<IsometryReport, MorphismError> {
    let pullback = PullbackMetric::new(f, params, model)?;
    let (k, m) = f.source_dims();
    let mut max_abs_error = 0.0f64;
    let mut worst_pair = ((0, 0), (0, 0));
    let mut pass = true;
    for a in 0..k {
        for b in 0..m {
            for c in 0..k {
                for d in 0..m {
                    let direct = metric_basis(params, model, (a, b), (c, d))?;
                    let pulled = pullback.basis((a, b), (c, d))?;
                    let err = (direct - pulled).abs();
                    if err > max_abs_error {
                        max_abs_error = err;
                        worst_pair = ((a, b), (c, d));
                    }
                    if err > tol * (1.0 + direct.abs()) {
                        pass = false;
                    }
                }
            }
        }
    }
    Ok(IsometryReport { max_abs_error, worst_pair, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::ScalarField;
    use crate::rational::ratio;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn def5_partition() -> Partition {
        Partition::new(vec![vec![0, 2], vec![1, 3], vec![4]], 5).unwrap()
    }

    fn def5_matrix() -> PartitionStochastic {
        PartitionStochastic::new(
            def5_partition(),
            vec![
                vec![ratio(1, 3), ratio(2, 3)],
                vec![ratio(1, 2), ratio(1, 2)],
                vec![ratio(1, 1)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn partition_validation() {
        let p = def5_partition();
        assert_eq!(p.num_blocks(), 3);
        assert_eq!(p.owner(2), (0, 1));

        assert!(matches!(
            Partition::new(vec![vec![0], vec![1]], 3),
            Err(MorphismError::Gap { element: 2 })
        ));
        assert!(matches!(
            Partition::new(vec![vec![0, 1], vec![1, 2]], 3),
            Err(MorphismError::Overlap { element: 1 })
        ));
        assert!(matches!(
            Partition::new(vec![vec![0], vec![]], 1),
            Err(MorphismError::EmptyBlock { block: 1 })
        ));
        assert!(matches!(
            Partition::new(vec![vec![0, 5]], 2),
            Err(MorphismError::ElementOutOfRange { element: 5, n: 2 })
        ));
        assert!(matches!(Partition::new(vec![], 0), Err(MorphismError::EmptyPartition)));
    }

    #[test]
    fn stochastic_predicate() {
        let q = def5_matrix();
        assert!(is_partition_stochastic(&q.to_dense(), q.partition()));

        // identity with singleton partition
        let id = PartitionStochastic::uniform(Partition::singletons(3));
        assert!(is_partition_stochastic(&id.to_dense(), id.partition()));

        // a row scaled by 2 no longer sums to 1
        let scaled = q.scaled_row_unchecked(0, &ratio(2, 1));
        assert!(!is_partition_stochastic(&scaled.to_dense(), q.partition()));

        // support violation
        let mut dense = q.to_dense();
        dense[(0, 1)] = ratio(1, 10);
        assert!(!is_partition_stochastic(&dense, q.partition()));
    }

    #[test]
    fn uniformity_predicate() {
        let def6 = PartitionStochastic::new(
            Partition::new(vec![vec![0, 2], vec![1, 3], vec![4, 5]], 6).unwrap(),
            vec![
                vec![ratio(1, 2), ratio(1, 2)],
                vec![ratio(1, 2), ratio(1, 2)],
                vec![ratio(1, 2), ratio(1, 2)],
            ],
        )
        .unwrap();
        assert!(def6.is_uniform());
        assert!(!def5_matrix().is_uniform());
        assert!(PartitionStochastic::uniform(Partition::singletons(4)).is_uniform());
    }

    #[test]
    fn row_product_cases() {
        let m = array![[1.0, 2.0], [3.0, 4.0]];
        let id = Array2::eye(2);
        let out = row_product(&m, &[id.clone(), id]).unwrap();
        assert_eq!(out, m);

        // one-row model against the Def-5 style matrix
        let ones = array![[1.0, 1.0, 1.0]];
        let q = def5_matrix().to_dense_f64();
        let out = row_product(&ones, &[q]).unwrap();
        let expected = array![[1.0 / 3.0, 0.5, 2.0 / 3.0, 0.5, 1.0]];
        for (a, b) in out.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(out.iter().sum::<f64>(), 3.0, epsilon = 1e-14);

        // distinct Q per row must match the plain per-row matrix product
        let q0 = array![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]];
        let q1 = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let out = row_product(&m, &[q0.clone(), q1.clone()]).unwrap();
        let full0 = m.dot(&q0);
        let full1 = m.dot(&q1);
        for j in 0..3 {
            assert_abs_diff_eq!(out[(0, j)], full0[(0, j)]);
            assert_abs_diff_eq!(out[(1, j)], full1[(1, j)]);
        }

        assert!(matches!(
            row_product(&m, &[Array2::eye(3), Array2::eye(3)]),
            Err(MorphismError::InconsistentQ { .. })
        ));
    }

    #[test]
    fn identity_morphism_fixes_models_and_tangents() {
        let f = MarkovMorphism::identity(2, 3);
        let m = PositiveConditionalModel::from_rows(
            &[vec![0.2, 0.3, 0.5], vec![0.1, 0.6, 0.3]],
            true,
        )
        .unwrap();
        assert_eq!(f.apply(&m).unwrap(), m);

        let v = TangentVector::from_rows(&[vec![1.0, -1.0, 0.0], vec![0.5, 0.0, -0.5]], true)
            .unwrap();
        assert_eq!(f.push_forward(&v).unwrap(), v);
    }

    #[test]
    fn replication_spec_example() {
        let f = uniform_replication(1, 2, 2, 2).unwrap();
        assert_eq!(f.target_dims(), (2, 4));
        let m = PositiveConditionalModel::from_rows(&[vec![3.0, 5.0]], false).unwrap();
        let out = f.apply(&m).unwrap();
        for i in 0..2 {
            for (j, expected) in [0.75, 0.75, 1.25, 1.25].iter().enumerate() {
                assert_abs_diff_eq!(out.entry(i, j), expected, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(out.l1_norm(), m.l1_norm(), epsilon = 1e-12);

        // z = w = 1 is the identity
        assert_eq!(uniform_replication(3, 2, 1, 1).unwrap(), MarkovMorphism::identity(3, 2));
        assert!(matches!(uniform_replication(1, 2, 0, 1), Err(MorphismError::InvalidReplication)));
    }

    #[test]
    fn replication_keeps_constants_constant() {
        let f = uniform_replication(2, 3, 3, 2).unwrap();
        let u = PositiveConditionalModel::from_rows(
            &[vec![0.7; 3], vec![0.7; 3]],
            false,
        )
        .unwrap();
        let out = f.apply(&u).unwrap();
        let first = out.entry(0, 0);
        for &v in out.entries().iter() {
            assert_abs_diff_eq!(v, first, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(out.l1_norm(), u.l1_norm(), epsilon = 1e-12);
    }

    #[test]
    fn permutation_morphism_moves_entries() {
        // k = 2, swap rows, identity response permutations
        let f = permutation_morphism(&[1, 0], &[vec![0, 1], vec![0, 1]]).unwrap();
        let m = PositiveConditionalModel::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], false)
            .unwrap();
        let out = f.apply(&m).unwrap();
        assert_eq!(out.entries(), &array![[3.0, 4.0], [1.0, 2.0]]);

        // normalized inputs stay normalized under permutation R
        let p = PositiveConditionalModel::from_rows(&[vec![0.25, 0.75], vec![0.5, 0.5]], true)
            .unwrap();
        assert!(f.apply(&p).unwrap().is_normalized());

        assert!(matches!(
            permutation_morphism(&[0, 0], &[vec![0, 1], vec![0, 1]]),
            Err(MorphismError::NotAPermutation { .. })
        ));
    }

    #[test]
    fn push_forward_of_basis_through_permutation() {
        let sigma = vec![1, 2, 0];
        let pis = vec![vec![1, 0], vec![0, 1], vec![1, 0]];
        let f = permutation_morphism(&sigma, &pis).unwrap();
        for a in 0..3 {
            for b in 0..2 {
                let mut coeffs = Array2::zeros((3, 2));
                coeffs[(a, b)] = 1.0;
                let v = TangentVector::new(coeffs, false).unwrap();
                let out = f.push_forward(&v).unwrap();
                for i in 0..3 {
                    for j in 0..2 {
                        let expected =
                            if i == sigma[a] && j == pis[a][b] { 1.0 } else { 0.0 };
                        assert_eq!(out.coeff(i, j), expected);
                    }
                }
            }
        }
    }

    #[test]
    fn push_forward_replication_blocks() {
        let (z, w) = (2usize, 3usize);
        let f = uniform_replication(2, 2, z, w).unwrap();
        let mut coeffs = Array2::zeros((2, 2));
        coeffs[(1, 0)] = 1.0;
        let v = TangentVector::new(coeffs, false).unwrap();
        let out = f.push_forward(&v).unwrap();
        let coeff = 1.0 / (z * w) as f64;
        for i in 0..4 {
            for j in 0..6 {
                let inside = (2..4).contains(&i) && (0..3).contains(&j);
                assert_abs_diff_eq!(out.coeff(i, j), if inside { coeff } else { 0.0 });
            }
        }
    }

    #[test]
    fn push_forward_preserves_zero_row_sums() {
        let f = uniform_replication(2, 3, 2, 2).unwrap();
        let v = TangentVector::from_rows(&[vec![1.0, -0.25, -0.75], vec![0.5, 0.25, -0.75]], true)
            .unwrap();
        let out = f.push_forward(&v).unwrap();
        assert!(out.is_normalized_context());
        for row in out.coeffs().rows() {
            assert_abs_diff_eq!(row.sum(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniformizer_spec_examples() {
        // M̃ = [[1,1],[1,1]], z = 2: output 4x4, all entries 1/8
        let rat = RationalConditionalModel::from_rows(&[vec![1, 1], vec![1, 1]], 2).unwrap();
        let f = rational_uniformizer(&rat, DEFAULT_SIZE_CAP).unwrap();
        assert_eq!(f.target_dims(), (4, 4));
        let exact = f.apply_exact(&rat).unwrap();
        for v in exact.iter() {
            assert_eq!(*v, ratio(1, 8));
        }
        assert_eq!(uniformizer_constant(&rat), ratio(1, 8));

        // the float path agrees
        let m = rat.to_model().unwrap();
        let out = f.apply(&m).unwrap();
        for &v in out.entries().iter() {
            assert_abs_diff_eq!(v, 0.125, epsilon = 1e-15);
        }

        // M̃ = [[1,2]], z = 3: output 3x3, all entries 1/9
        let rat2 = RationalConditionalModel::from_rows(&[vec![1, 2]], 3).unwrap();
        let f2 = rational_uniformizer(&rat2, DEFAULT_SIZE_CAP).unwrap();
        assert_eq!(f2.target_dims(), (3, 3));
        for v in f2.apply_exact(&rat2).unwrap().iter() {
            assert_eq!(*v, ratio(1, 9));
        }
    }

    #[test]
    fn uniformizer_size_cap() {
        let rat = RationalConditionalModel::from_rows(&[vec![5, 5], vec![5, 5]], 1).unwrap();
        // |M̃| = 20, Π = 100, cells = 2000
        assert!(rational_uniformizer(&rat, 2000).is_ok());
        assert!(matches!(
            rational_uniformizer(&rat, 1999),
            Err(MorphismError::SizeCapExceeded { rows: 20, cols: 100, cells: 2000, cap: 1999 })
        ));
    }

    #[test]
    fn apply_is_norm_preserving_and_injective_on_an_example() {
        let rat = RationalConditionalModel::from_rows(&[vec![2, 1], vec![1, 3]], 2).unwrap();
        let f = rational_uniformizer(&rat, DEFAULT_SIZE_CAP).unwrap();
        let m1 = PositiveConditionalModel::from_rows(&[vec![0.4, 0.9], vec![1.1, 0.3]], false)
            .unwrap();
        let m2 = PositiveConditionalModel::from_rows(&[vec![0.4, 0.9], vec![1.1, 0.4]], false)
            .unwrap();
        assert_abs_diff_eq!(f.apply(&m1).unwrap().l1_norm(), m1.l1_norm(), epsilon = 1e-12);
        assert_ne!(f.apply(&m1).unwrap(), f.apply(&m2).unwrap());
    }

    #[test]
    fn every_output_entry_is_a_single_product() {
        // count the nonzero terms of the defining sum for each output cell
        let rat = RationalConditionalModel::from_rows(&[vec![1, 2], vec![2, 1]], 1).unwrap();
        let f = rational_uniformizer(&rat, DEFAULT_SIZE_CAP).unwrap();
        let (k, m) = f.source_dims();
        let (l, n) = f.target_dims();
        let r = f.r().to_dense_f64();
        let qs: Vec<Array2<f64>> = f.q().iter().map(|q| q.to_dense_f64()).collect();
        for i in 0..l {
            for j in 0..n {
                let mut nonzero_terms = 0;
                for s in 0..k {
                    for t in 0..m {
                        if r[(s, i)] != 0.0 && qs[s][(t, j)] != 0.0 {
                            nonzero_terms += 1;
                        }
                    }
                }
                assert_eq!(nonzero_terms, 1, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn solve_basis_transport_spec_example() {
        // carry (∂_{0,0}, ∂_{1,2}) to (∂_{1,1}, ∂_{0,0}) on 2x3 models
        let f = solve_basis_transport((0, 0), (1, 2), (1, 1), (0, 0), 2, 3).unwrap();
        let check = |src: (usize, usize), dst: (usize, usize)| {
            let mut coeffs = Array2::zeros((2, 3));
            coeffs[src] = 1.0;
            let v = TangentVector::new(coeffs, false).unwrap();
            let out = f.push_forward(&v).unwrap();
            for i in 0..2 {
                for j in 0..3 {
                    let expected = if (i, j) == dst { 1.0 } else { 0.0 };
                    assert_eq!(out.coeff(i, j), expected, "src {src:?} dst {dst:?} at ({i},{j})");
                }
            }
        };
        check((0, 0), (1, 1));
        check((1, 2), (0, 0));

        // identical source and target quadruples: identity-extended morphism works
        let id_like = solve_basis_transport((0, 1), (1, 0), (0, 1), (1, 0), 2, 2).unwrap();
        check_transport(&id_like, (0, 1), (0, 1), 2, 2);
        check_transport(&id_like, (1, 0), (1, 0), 2, 2);

        assert!(matches!(
            solve_basis_transport((0, 0), (0, 1), (1, 0), (0, 0), 2, 2),
            Err(MorphismError::PreconditionViolated(_))
        ));
        assert!(matches!(
            solve_basis_transport((5, 0), (0, 0), (1, 0), (0, 0), 2, 2),
            Err(MorphismError::IndexOutOfRange { .. })
        ));
    }

    fn check_transport(
        f: &MarkovMorphism,
        src: (usize, usize),
        dst: (usize, usize),
        k: usize,
        m: usize,
    ) {
        let mut coeffs = Array2::zeros((k, m));
        coeffs[src] = 1.0;
        let v = TangentVector::new(coeffs, false).unwrap();
        let out = f.push_forward(&v).unwrap();
        let mut expected = Array2::zeros((k, m));
        expected[dst] = 1.0;
        assert_eq!(out.coeffs(), &expected);
    }

    #[test]
    fn pull_back_identity_and_permutation() {
        let params = MetricParams::new(
            ScalarField::Constant(0.4),
            ScalarField::Reciprocal(1.5),
            ScalarField::Power { coeff: 0.9, exponent: -1.0 },
        )
        .unwrap();
        let m = PositiveConditionalModel::from_rows(&[vec![0.6, 1.2], vec![0.9, 0.3]], false)
            .unwrap();

        let id = MarkovMorphism::identity(2, 2);
        for pair in [((0, 0), (0, 0)), ((0, 1), (1, 0)), ((1, 1), (1, 1)), ((0, 0), (0, 1))] {
            let direct = metric_basis(&params, &m, pair.0, pair.1).unwrap();
            let pulled = pull_back_metric(&id, &params, &m, pair.0, pair.1).unwrap();
            assert_abs_diff_eq!(direct, pulled, epsilon = 1e-12 * (1.0 + direct.abs()));
        }

        // permutation morphisms satisfy the relabeling identity: the pull-back
        // equals the source metric evaluated at the permuted image point
        let sigma = vec![1, 0];
        let pis = vec![vec![1, 0], vec![0, 1]];
        let f = permutation_morphism(&sigma, &pis).unwrap();
        let fm = f.apply(&m).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        let pulled = pull_back_metric(&f, &params, &m, (a, b), (c, d)).unwrap();
                        let relabeled = metric_basis(
                            &params,
                            &fm,
                            (sigma[a], pis[a][b]),
                            (sigma[c], pis[c][d]),
                        )
                        .unwrap();
                        assert_abs_diff_eq!(
                            pulled,
                            relabeled,
                            epsilon = 1e-12 * (1.0 + relabeled.abs())
                        );
                    }
                }
            }
        }
    }

    /// Literal evaluation of the defining quadruple sum, kept as the reference
    /// oracle for the sparse pull-back path.
    fn naive_pull_back(
        f: &MarkovMorphism,
        params: &MetricParams,
        model: &PositiveConditionalModel,
        ab: (usize, usize),
        cd: (usize, usize),
    ) -> f64 {
        let fm = f.apply(model).unwrap();
        let (l, n) = f.target_dims();
        let r = f.r().to_dense_f64();
        let qs: Vec<Array2<f64>> = f.q().iter().map(|q| q.to_dense_f64()).collect();
        let mut acc = 0.0;
        for i in 0..l {
            for j in 0..n {
                for s in 0..l {
                    for t in 0..n {
                        let w = r[(ab.0, i)] * r[(cd.0, s)] * qs[ab.0][(ab.1, j)] * qs[cd.0][(cd.1, t)];
                        if w != 0.0 {
                            acc += w * metric_basis(params, &fm, (i, j), (s, t)).unwrap();
                        }
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn sparse_pull_back_matches_naive_oracle() {
        let params = MetricParams::new(
            ScalarField::Power { coeff: -0.6, exponent: 0.5 },
            ScalarField::Constant(0.8),
            ScalarField::Reciprocal(1.2),
        )
        .unwrap();
        let rat = RationalConditionalModel::from_rows(&[vec![2, 1], vec![1, 2]], 2).unwrap();
        let f = rational_uniformizer(&rat, DEFAULT_SIZE_CAP).unwrap();
        let m = PositiveConditionalModel::from_rows(&[vec![0.8, 0.7], vec![0.4, 1.6]], false)
            .unwrap();

        let pullback = PullbackMetric::new(&f, &params, &m).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        let sparse = pullback.basis((a, b), (c, d)).unwrap();
                        let naive = naive_pull_back(&f, &params, &m, (a, b), (c, d));
                        assert_abs_diff_eq!(sparse, naive, epsilon = 1e-10 * (1.0 + naive.abs()));
                    }
                }
            }
        }

        // the oracle also agrees on a corrupted morphism, whose support is intact
        let bad = f.with_scaled_q_row(0, 1, &ratio(101, 100));
        let pullback = PullbackMetric::new(&bad, &params, &m).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let sparse = pullback.basis((a, b), (a, b)).unwrap();
                let naive = naive_pull_back(&bad, &params, &m, (a, b), (a, b));
                assert_abs_diff_eq!(sparse, naive, epsilon = 1e-10 * (1.0 + naive.abs()));
            }
        }
    }

    #[test]
    fn sparse_pull_back_matches_naive_on_random_instances() {
        for trial in 0..20u64 {
            let mut rng = crate::sample::trial_rng(31, trial);
            let (k, m) = crate::sample::dims(&mut rng, 3, 3);
            let f = crate::sample::morphism(&mut rng, k, m, 6, 6);
            let model = crate::sample::model(&mut rng, k, m);
            let params = crate::sample::metric_params(&mut rng);
            let pullback = PullbackMetric::new(&f, &params, &model).unwrap();
            for a in 0..k {
                for b in 0..m {
                    for c in 0..k {
                        for d in 0..m {
                            let sparse = pullback.basis((a, b), (c, d)).unwrap();
                            let naive = naive_pull_back(&f, &params, &model, (a, b), (c, d));
                            assert_abs_diff_eq!(
                                sparse,
                                naive,
                                epsilon = 1e-9 * (1.0 + naive.abs())
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn compose_random_pairs_with_permutation_explanatory_statistic() {
        // singleton R blocks make the composite representable for any g
        for trial in 0..20u64 {
            let mut rng = crate::sample::trial_rng(37, trial);
            let (k, m) = crate::sample::dims(&mut rng, 3, 3);
            let n = m + (trial as usize % 3);
            let r = PartitionStochastic::uniform(Partition::singletons(k));
            let q = (0..k)
                .map(|_| {
                    let p = crate::sample::partition(&mut rng, n, m);
                    crate::sample::partition_stochastic(&mut rng, p)
                })
                .collect();
            let f = MarkovMorphism::new(r, q).unwrap();
            let g = crate::sample::morphism(&mut rng, k, n, k + 4, n + 4);
            let h = compose(&f, &g).unwrap();
            assert_eq!(h.source_dims(), f.source_dims());
            assert_eq!(h.target_dims(), g.target_dims());

            let model = crate::sample::model(&mut rng, k, m);
            let direct = h.apply(&model).unwrap();
            let chained = g.apply(&f.apply(&model).unwrap()).unwrap();
            for (a, b) in direct.entries().iter().zip(chained.entries().iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-14 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn isometry_check_identity_and_corruption() {
        let fisher = MetricParams::fisher();
        let m = PositiveConditionalModel::from_rows(&[vec![0.3, 0.7], vec![0.5, 0.5]], true)
            .unwrap();
        let id = MarkovMorphism::identity(2, 2);
        let report = check_isometry(&id, &fisher, &m, 1e-9).unwrap();
        assert!(report.pass);
        assert_eq!(report.max_abs_error, 0.0);

        let f = uniform_replication(2, 2, 2, 3).unwrap();
        let good = check_isometry(&f, &fisher, &m, 1e-9).unwrap();
        assert!(good.pass, "replication must certify: max err {}", good.max_abs_error);

        let bad = f.with_scaled_q_row(0, 0, &ratio(101, 100));
        let report = check_isometry(&bad, &fisher, &m, 1e-9).unwrap();
        assert!(!report.pass);
        assert!(report.max_abs_error > 1e-4);
    }

    #[test]
    fn compose_identity_and_permutations() {
        let f = permutation_morphism(&[1, 0], &[vec![1, 0], vec![0, 1]]).unwrap();
        let id = MarkovMorphism::identity(2, 2);
        assert_eq!(compose(&id, &f).unwrap(), f);
        assert_eq!(compose(&f, &id).unwrap(), f);

        // permutations compose to the permutation of composed maps
        let g = permutation_morphism(&[1, 0], &[vec![0, 1], vec![1, 0]]).unwrap();
        let h = compose(&f, &g).unwrap();
        let m = PositiveConditionalModel::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], false)
            .unwrap();
        assert_eq!(h.apply(&m).unwrap(), g.apply(&f.apply(&m).unwrap()).unwrap());

        // sigma_h = sigma_g ∘ sigma_f, pi_h^(a) = pi_g^(sigma_f(a)) ∘ pi_f^(a);
        // here both compositions collapse to identities
        let expected = permutation_morphism(&[0, 1], &[vec![0, 1], vec![0, 1]]).unwrap();
        assert_eq!(h, expected);
    }

    #[test]
    fn compose_replications() {
        let f = uniform_replication(1, 2, 2, 2).unwrap();
        let g = uniform_replication(2, 4, 3, 1).unwrap();
        let h = compose(&f, &g).unwrap();
        assert_eq!(h, uniform_replication(1, 2, 6, 2).unwrap());

        // the float images agree up to the rounding order of the two paths
        let m = PositiveConditionalModel::from_rows(&[vec![0.4, 1.1]], false).unwrap();
        let direct = h.apply(&m).unwrap();
        let chained = g.apply(&f.apply(&m).unwrap()).unwrap();
        for (a, b) in direct.entries().iter().zip(chained.entries().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn compose_detects_non_composable_pairs() {
        // f replicates one row into two; g then permutes the two target rows'
        // responses differently, which no single response statistic can express
        let f = uniform_replication(1, 2, 2, 1).unwrap();
        let g = permutation_morphism(&[0, 1], &[vec![0, 1], vec![1, 0]]).unwrap();
        let err = compose(&f, &g).unwrap_err();
        assert!(matches!(err, MorphismError::NotComposable { row: 0 }));

        assert!(matches!(
            compose(&f, &uniform_replication(3, 2, 1, 1).unwrap()),
            Err(MorphismError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let rat = RationalConditionalModel::from_rows(&[vec![1, 2], vec![2, 1]], 3).unwrap();
        let f = rational_uniformizer(&rat, DEFAULT_SIZE_CAP).unwrap();
        let text = f.to_json();
        let back = MarkovMorphism::from_json(&text).unwrap();
        assert_eq!(back, f);

        // rational literals like "1/3" survive exactly
        assert!(text.contains("1/3") || text.contains("1/6") || text.contains("1/2"));

        assert!(matches!(
            MarkovMorphism::from_json("{\"R\": 5}"),
            Err(MorphismError::BadJson(_))
        ));
    }
}
