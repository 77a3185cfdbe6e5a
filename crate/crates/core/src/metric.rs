//! The invariant metric family on positive conditional models.
//!
//! The family assigns to every k×m positive model M the basis inner products
//!
//! ```text
//! g_M(∂ab, ∂cd) = A(|M|) + δ_ac * ( |M|/|M_a| * B(|M|) + δ_bd * |M|/M_ab * C(|M|) )
//! ```
//!
//! for smooth scalar functions A, B, C on the positive reals. These are exactly
//! the metrics left invariant by every congruent embedding by a Markov morphism
//! (certified numerically by the `morphism` module). The Fisher choice
//! A = B = 0, C(t) = 1/(2t) recovers the product Fisher information metric on
//! normalized models, where the A and B contributions cancel against zero row
//! sums and the metric reduces to `k*C(k) * Σ u_ij v_ij / M_ij`.
//!
//! Positive definiteness of the general (A, B, C) form on the full cone is not
//! asserted; [`gram_matrix`] is provided as a diagnostic, and only the Fisher
//! choice is certified positive on zero-row-sum tangents.
//!
//! Closed-form geodesic distances are provided for the two cases with known
//! flat embeddings: the cone metric A = B = 0, C(t) = c/t (entrywise square
//! root maps it to a Euclidean orthant) and the scaled product Fisher metric on
//! normalized models (per-row sphere embedding, Bhattacharyya angles).

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use thiserror::Error;

use crate::model::{PositiveConditionalModel, TangentVector};
use crate::rational::kahan_sum;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("scalar field evaluated at non-positive argument {0}")]
    NonPositiveArgument(f64),
    #[error("index pair ({a},{b}) out of range for a {rows}x{cols} model")]
    IndexOutOfRange { a: usize, b: usize, rows: usize, cols: usize },
    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch { left_rows: usize, left_cols: usize, right_rows: usize, right_cols: usize },
    #[error("model must be normalized for this operation")]
    NotNormalized,
    #[error("tangents must carry the normalized (zero-row-sum) context for this operation")]
    TangentContextRequired,
    #[error("scale parameter must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("C must be positive on the positive reals; got coefficient {0}")]
    NonPositiveC(f64),
    #[error("scalar field parameter {0} is not finite")]
    NonFiniteParameter(f64),
    #[error("invalid metric spec `{spec}`: {message}")]
    BadSpec { spec: String, message: String },
}

/// One of the three analytic families used for the metric coefficients.
///
/// Restricting to these families keeps smoothness guaranteed by construction
/// and makes metric specs serializable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarField {
    /// t ↦ c
    Constant(f64),
    /// t ↦ c / t
    Reciprocal(f64),
    /// t ↦ c * t^p
    Power { coeff: f64, exponent: f64 },
}

impl ScalarField {
    pub fn eval(&self, t: f64) -> Result<f64, MetricError> {
        if t.is_nan() || t <= 0.0 {
            return Err(MetricError::NonPositiveArgument(t));
        }
        Ok(match *self {
            ScalarField::Constant(c) => c,
            ScalarField::Reciprocal(c) => c / t,
            ScalarField::Power { coeff, exponent } => coeff * t.powf(exponent),
        })
    }

    fn validate_finite(&self) -> Result<(), MetricError> {
        let params: &[f64] = match self {
            ScalarField::Constant(c) | ScalarField::Reciprocal(c) => std::slice::from_ref(c),
            ScalarField::Power { coeff, exponent } => {
                if !exponent.is_finite() {
                    return Err(MetricError::NonFiniteParameter(*exponent));
                }
                std::slice::from_ref(coeff)
            }
        };
        for &p in params {
            if !p.is_finite() {
                return Err(MetricError::NonFiniteParameter(p));
            }
        }
        Ok(())
    }

    fn positive_coefficient(&self) -> f64 {
        match *self {
            ScalarField::Constant(c) | ScalarField::Reciprocal(c) => c,
            ScalarField::Power { coeff, .. } => coeff,
        }
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScalarField::Constant(c) => write!(f, "const:{c}"),
            ScalarField::Reciprocal(c) => write!(f, "recip:{c}"),
            ScalarField::Power { coeff, exponent } => write!(f, "pow:{coeff},{exponent}"),
        }
    }
}

fn parse_field(spec: &str, text: &str) -> Result<ScalarField, MetricError> {
    let bad = |message: &str| MetricError::BadSpec { spec: spec.to_string(), message: message.to_string() };
    let (kind, args) = text
        .split_once(':')
        .ok_or_else(|| bad("expected <kind>:<params>"))?;
    match kind.trim() {
        "const" => Ok(ScalarField::Constant(
            args.trim().parse().map_err(|_| bad("bad const value"))?,
        )),
        "recip" => Ok(ScalarField::Reciprocal(
            args.trim().parse().map_err(|_| bad("bad recip value"))?,
        )),
        "pow" => {
            let (c, p) = args.split_once(',').ok_or_else(|| bad("pow needs <coeff>,<exponent>"))?;
            Ok(ScalarField::Power {
                coeff: c.trim().parse().map_err(|_| bad("bad pow coefficient"))?,
                exponent: p.trim().parse().map_err(|_| bad("bad pow exponent"))?,
            })
        }
        other => Err(bad(&format!("unknown field kind `{other}`"))),
    }
}

/// The (A, B, C) triple selecting one metric from the invariant family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    a: ScalarField,
    b: ScalarField,
    c: ScalarField,
}

impl MetricParams {
    /// Validates finiteness of all parameters and positivity of C's coefficient
    /// (which is equivalent to C(t) > 0 for all t > 0 on the builtin families).
    pub fn new(a: ScalarField, b: ScalarField, c: ScalarField) -> Result<Self, MetricError> {
        a.validate_finite()?;
        b.validate_finite()?;
        c.validate_finite()?;
        let coeff = c.positive_coefficient();
        if coeff.is_nan() || coeff <= 0.0 {
            return Err(MetricError::NonPositiveC(coeff));
        }
        Ok(Self { a, b, c })
    }

    /// The Fisher choice: A = 0, B = 0, C(t) = 1/(2t).
    pub fn fisher() -> Self {
        Self {
            a: ScalarField::Constant(0.0),
            b: ScalarField::Constant(0.0),
            c: ScalarField::Reciprocal(0.5),
        }
    }

    /// The cone family A = 0, B = 0, C(t) = c/t whose geodesics are known in
    /// closed form.
    pub fn cone(c: f64) -> Result<Self, MetricError> {
        Self::new(
            ScalarField::Constant(0.0),
            ScalarField::Constant(0.0),
            ScalarField::Reciprocal(c),
        )
    }

    pub fn a(&self) -> &ScalarField {
        &self.a
    }

    pub fn b(&self) -> &ScalarField {
        &self.b
    }

    pub fn c(&self) -> &ScalarField {
        &self.c
    }
}

impl fmt::Display for MetricParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == MetricParams::fisher() {
            write!(f, "fisher")
        } else {
            write!(f, "abc:A={};B={};C={}", self.a, self.b, self.c)
        }
    }
}

impl FromStr for MetricParams {
    type Err = MetricError;

    /// Grammar: `fisher` or `abc:A=<fn>;B=<fn>;C=<fn>` with
    /// `<fn> ∈ {const:<v>, recip:<v>, pow:<c>,<p>}`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        if trimmed == "fisher" {
            return Ok(Self::fisher());
        }
        let bad = |message: String| MetricError::BadSpec { spec: s.to_string(), message };
        let rest = trimmed
            .strip_prefix("abc:")
            .ok_or_else(|| bad("expected `fisher` or `abc:...`".to_string()))?;
        let mut a = None;
        let mut b = None;
        let mut c = None;
        for part in rest.split(';') {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected NAME=<fn> in `{part}`")))?;
            let field = parse_field(s, value.trim())?;
            match name.trim() {
                "A" => a = Some(field),
                "B" => b = Some(field),
                "C" => c = Some(field),
                other => return Err(bad(format!("unknown coefficient `{other}`"))),
            }
        }
        match (a, b, c) {
            (Some(a), Some(b), Some(c)) => Self::new(a, b, c),
            _ => Err(bad("spec must define A, B and C".to_string())),
        }
    }
}

fn check_index(
    model: &PositiveConditionalModel,
    (a, b): (usize, usize),
) -> Result<(), MetricError> {
    if a >= model.rows() || b >= model.cols() {
        return Err(MetricError::IndexOutOfRange { a, b, rows: model.rows(), cols: model.cols() });
    }
    Ok(())
}

fn check_tangent_shape(
    model: &PositiveConditionalModel,
    t: &TangentVector,
) -> Result<(), MetricError> {
    if t.rows() != model.rows() || t.cols() != model.cols() {
        return Err(MetricError::ShapeMismatch {
            left_rows: model.rows(),
            left_cols: model.cols(),
            right_rows: t.rows(),
            right_cols: t.cols(),
        });
    }
    Ok(())
}

/// Basis inner product `g_M(∂ab, ∂cd)`; symmetric in the two index pairs.
pub fn metric_basis(
    params: &MetricParams,
    model: &PositiveConditionalModel,
    ab: (usize, usize),
    cd: (usize, usize),
) -> Result<f64, MetricError> {
    check_index(model, ab)?;
    check_index(model, cd)?;
    let total = model.l1_norm();
    let mut g = params.a.eval(total)?;
    if ab.0 == cd.0 {
        let row = model.row_l1_norm(ab.0).expect("index checked");
        g += total / row * params.b.eval(total)?;
        if ab.1 == cd.1 {
            g += total / model.entry(ab.0, ab.1) * params.c.eval(total)?;
        }
    }
    Ok(g)
}

/// Bilinear extension `g_M(u, v) = Σ_ab Σ_cd u_ab v_cd g_M(∂ab, ∂cd)`, grouped as
///
/// ```text
/// A(|M|) (Σ u)(Σ v) + B(|M|) Σ_a |M|/|M_a| (Σ_b u_ab)(Σ_d v_ad)
///                   + C(|M|) |M| Σ_ab u_ab v_ab / M_ab
/// ```
pub fn inner_product(
    params: &MetricParams,
    model: &PositiveConditionalModel,
    u: &TangentVector,
    v: &TangentVector,
) -> Result<f64, MetricError> {
    check_tangent_shape(model, u)?;
    check_tangent_shape(model, v)?;
    let total = model.l1_norm();
    let a_val = params.a.eval(total)?;
    let b_val = params.b.eval(total)?;
    let c_val = params.c.eval(total)?;

    let sum_u = kahan_sum(u.coeffs().iter().copied());
    let sum_v = kahan_sum(v.coeffs().iter().copied());
    let mut result = a_val * sum_u * sum_v;

    let mut b_term = 0.0;
    let mut c_term = 0.0;
    for a in 0..model.rows() {
        let row_mass = model.row_l1_norm(a).expect("in range");
        let ru = kahan_sum(u.coeffs().row(a).iter().copied());
        let rv = kahan_sum(v.coeffs().row(a).iter().copied());
        b_term += total / row_mass * ru * rv;
        for b in 0..model.cols() {
            c_term += u.coeff(a, b) * v.coeff(a, b) / model.entry(a, b);
        }
    }
    result += b_val * b_term + c_val * total * c_term;
    Ok(result)
}

/// Scaled product Fisher information metric `scale * Σ u_ij v_ij / M_ij` on a
/// normalized model with zero-row-sum tangents. With `scale = k*C(k)` this is
/// what the full family reduces to on normalized models.
pub fn fisher_inner_product(
    model: &PositiveConditionalModel,
    u: &TangentVector,
    v: &TangentVector,
    scale: f64,
) -> Result<f64, MetricError> {
    if !model.is_normalized() {
        return Err(MetricError::NotNormalized);
    }
    if !u.is_normalized_context() || !v.is_normalized_context() {
        return Err(MetricError::TangentContextRequired);
    }
    if scale.is_nan() || scale <= 0.0 {
        return Err(MetricError::NonPositiveScale(scale));
    }
    check_tangent_shape(model, u)?;
    check_tangent_shape(model, v)?;
    let mut sum = 0.0;
    for ((i, j), &m) in model.entries().indexed_iter() {
        sum += u.coeff(i, j) * v.coeff(i, j) / m;
    }
    Ok(scale * sum)
}

/// Full km×km matrix of basis inner products, with pair (a, b) mapped to index
/// `a*m + b`. Diagnostic: the family is not positive-definite for every (A, B, C).
pub fn gram_matrix(params: &MetricParams, model: &PositiveConditionalModel) -> Array2<f64> {
    let (k, m) = (model.rows(), model.cols());
    let dim = k * m;
    let mut out = Array2::zeros((dim, dim));
    for a in 0..k {
        for b in 0..m {
            for c in 0..k {
                for d in 0..m {
                    out[(a * m + b, c * m + d)] =
                        metric_basis(params, model, (a, b), (c, d)).expect("indices in range");
                }
            }
        }
    }
    out
}

fn check_same_shape(
    p: &PositiveConditionalModel,
    q: &PositiveConditionalModel,
) -> Result<(), MetricError> {
    if p.rows() != q.rows() || p.cols() != q.cols() {
        return Err(MetricError::ShapeMismatch {
            left_rows: p.rows(),
            left_cols: p.cols(),
            right_rows: q.rows(),
            right_cols: q.cols(),
        });
    }
    Ok(())
}

/// Geodesic distance on the cone under A = B = 0, C(t) = c/t:
/// `2√c * sqrt(Σ (√M_ij − √N_ij)²)`. The entrywise square root embeds the cone
/// isometrically (up to the 2√c factor) into a Euclidean orthant, which is
/// convex, so straight lines realize the infimum.
///
/// ```
/// use condgeo::{geodesic_distance_cone, PositiveConditionalModel};
///
/// let m = PositiveConditionalModel::from_rows(&[vec![1.0, 4.0]], false).unwrap();
/// let n = PositiveConditionalModel::from_rows(&[vec![4.0, 1.0]], false).unwrap();
/// let d = geodesic_distance_cone(&m, &n, 0.5).unwrap();
/// assert!((d - 2.0).abs() < 1e-14);
/// ```
pub fn geodesic_distance_cone(
    m: &PositiveConditionalModel,
    n: &PositiveConditionalModel,
    c: f64,
) -> Result<f64, MetricError> {
    check_same_shape(m, n)?;
    if c.is_nan() || c <= 0.0 {
        return Err(MetricError::NonPositiveScale(c));
    }
    Ok(geodesic_distance_cone_raw(m.entries(), n.entries(), c))
}

/// Same closed form on raw non-negative matrices; used where models weighted by
/// an empirical distribution may carry zero rows (the closure of the cone).
pub fn geodesic_distance_cone_nonneg(
    m: &Array2<f64>,
    n: &Array2<f64>,
    c: f64,
) -> Result<f64, MetricError> {
    if m.dim() != n.dim() {
        return Err(MetricError::ShapeMismatch {
            left_rows: m.nrows(),
            left_cols: m.ncols(),
            right_rows: n.nrows(),
            right_cols: n.ncols(),
        });
    }
    if c.is_nan() || c <= 0.0 {
        return Err(MetricError::NonPositiveScale(c));
    }
    Ok(geodesic_distance_cone_raw(m, n, c))
}

fn geodesic_distance_cone_raw(m: &Array2<f64>, n: &Array2<f64>, c: f64) -> f64 {
    let sq = kahan_sum(
        m.iter()
            .zip(n.iter())
            .map(|(&a, &b)| (a.sqrt() - b.sqrt()).powi(2)),
    );
    2.0 * c.sqrt() * sq.sqrt()
}

/// Geodesic distance between normalized models under the product Fisher metric
/// scaled by λ: per row twice the arccosine of the Bhattacharyya coefficient,
/// combined across rows as a product manifold.
///
/// Arccos arguments are clamped to [-1, 1]; Bhattacharyya sums can exceed 1 by
/// about 1e-16 in floating point.
pub fn geodesic_distance_normalized(
    p: &PositiveConditionalModel,
    q: &PositiveConditionalModel,
    lambda: f64,
) -> Result<f64, MetricError> {
    check_same_shape(p, q)?;
    if !p.is_normalized() || !q.is_normalized() {
        return Err(MetricError::NotNormalized);
    }
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(MetricError::NonPositiveScale(lambda));
    }
    let mut total = 0.0;
    for (pr, qr) in p.entries().rows().into_iter().zip(q.entries().rows()) {
        let bc = kahan_sum(pr.iter().zip(qr.iter()).map(|(&a, &b)| (a * b).sqrt()));
        let angle = bc.clamp(-1.0, 1.0).acos();
        total += (2.0 * angle).powi(2);
    }
    Ok(lambda.sqrt() * total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn model(rows: &[Vec<f64>], normalized: bool) -> PositiveConditionalModel {
        PositiveConditionalModel::from_rows(rows, normalized).unwrap()
    }

    #[test]
    fn scalar_field_evaluation() {
        assert_abs_diff_eq!(ScalarField::Constant(3.0).eval(7.0).unwrap(), 3.0);
        assert_abs_diff_eq!(ScalarField::Reciprocal(0.5).eval(4.0).unwrap(), 0.125);
        assert_abs_diff_eq!(
            ScalarField::Power { coeff: 2.0, exponent: 1.0 }.eval(5.0).unwrap(),
            10.0
        );
        assert!(matches!(
            ScalarField::Constant(1.0).eval(0.0),
            Err(MetricError::NonPositiveArgument(_))
        ));
        assert!(matches!(
            ScalarField::Constant(1.0).eval(f64::NAN),
            Err(MetricError::NonPositiveArgument(_))
        ));
    }

    #[test]
    fn params_reject_non_positive_c() {
        assert!(matches!(
            MetricParams::new(
                ScalarField::Constant(0.0),
                ScalarField::Constant(0.0),
                ScalarField::Constant(0.0),
            ),
            Err(MetricError::NonPositiveC(_))
        ));
        assert!(MetricParams::fisher().c().eval(1.0).unwrap() > 0.0);
    }

    #[test]
    fn metric_basis_fisher_cases() {
        let m = model(&[vec![1.0, 1.0], vec![1.0, 1.0]], false);
        let fisher = MetricParams::fisher();
        // distinct rows: only A contributes, and A = 0
        assert_abs_diff_eq!(metric_basis(&fisher, &m, (0, 0), (1, 0)).unwrap(), 0.0);
        // same row, distinct columns: A = B = 0
        assert_abs_diff_eq!(metric_basis(&fisher, &m, (0, 0), (0, 1)).unwrap(), 0.0);
        // diagonal: |M|/M_ab * C(|M|) = (4/1) * (1/8)
        assert_abs_diff_eq!(metric_basis(&fisher, &m, (0, 0), (0, 0)).unwrap(), 0.5);
    }

    #[test]
    fn metric_basis_general_substitution() {
        let params = MetricParams::new(
            ScalarField::Constant(1.0),
            ScalarField::Constant(2.0),
            ScalarField::Constant(3.0),
        )
        .unwrap();
        let m = model(&[vec![1.0, 2.0], vec![3.0, 4.0]], false);
        // 1 + (10/3)*2 + (10/2)*3
        assert_abs_diff_eq!(
            metric_basis(&params, &m, (0, 1), (0, 1)).unwrap(),
            1.0 + 10.0 / 3.0 * 2.0 + 5.0 * 3.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            metric_basis(&params, &m, (2, 0), (0, 0)),
            Err(MetricError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn inner_product_matches_literal_double_sum() {
        let params = MetricParams::new(
            ScalarField::Power { coeff: 0.7, exponent: 1.0 },
            ScalarField::Reciprocal(-0.3),
            ScalarField::Power { coeff: 1.1, exponent: -0.5 },
        )
        .unwrap();
        let m = model(&[vec![0.4, 1.3, 0.8], vec![2.0, 0.6, 1.1]], false);
        let u = TangentVector::from_rows(&[vec![0.3, -1.0, 0.4], vec![1.2, 0.1, -0.6]], false)
            .unwrap();
        let v = TangentVector::from_rows(&[vec![-0.2, 0.5, 0.9], vec![0.4, -1.3, 0.7]], false)
            .unwrap();
        let mut expected = 0.0;
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..2 {
                    for d in 0..3 {
                        expected += u.coeff(a, b)
                            * v.coeff(c, d)
                            * metric_basis(&params, &m, (a, b), (c, d)).unwrap();
                    }
                }
            }
        }
        let got = inner_product(&params, &m, &u, &v).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-10 * (1.0 + expected.abs()));
    }

    #[test]
    fn inner_product_edge_cases() {
        let fisher = MetricParams::fisher();
        let m = model(&[vec![0.5, 0.5]], true);
        let zero = TangentVector::new(Array2::zeros((1, 2)), false).unwrap();
        let v = TangentVector::from_rows(&[vec![1.0, -1.0]], true).unwrap();
        assert_abs_diff_eq!(inner_product(&fisher, &m, &zero, &v).unwrap(), 0.0);
        // u = v = (1, -1) on (1/2, 1/2): 1/(2*0.5) + 1/(2*0.5) = 2
        assert_abs_diff_eq!(inner_product(&fisher, &m, &v, &v).unwrap(), 2.0, epsilon = 1e-14);

        // basis-vector case reduces to metric_basis
        let e11 = TangentVector::from_rows(&[vec![1.0, 0.0]], false).unwrap();
        assert_abs_diff_eq!(
            inner_product(&fisher, &m, &e11, &e11).unwrap(),
            metric_basis(&fisher, &m, (0, 0), (0, 0)).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn fisher_inner_product_cases() {
        let m = model(&[vec![0.5, 0.5]], true);
        let v = TangentVector::from_rows(&[vec![1.0, -1.0]], true).unwrap();
        // scale = k*C(k) = 1 * C(1) = 0.5 for the Fisher choice
        assert_abs_diff_eq!(fisher_inner_product(&m, &v, &v, 0.5).unwrap(), 2.0);
        assert_abs_diff_eq!(fisher_inner_product(&m, &v, &v, 1.0).unwrap(), 4.0);

        // disjoint row supports are orthogonal
        let m2 = model(&[vec![0.5, 0.5], vec![0.5, 0.5]], true);
        let u = TangentVector::from_rows(&[vec![1.0, -1.0], vec![0.0, 0.0]], true).unwrap();
        let w = TangentVector::from_rows(&[vec![0.0, 0.0], vec![-2.0, 2.0]], true).unwrap();
        assert_abs_diff_eq!(fisher_inner_product(&m2, &u, &w, 0.5).unwrap(), 0.0);

        let non_norm = model(&[vec![1.0, 2.0]], false);
        assert!(matches!(
            fisher_inner_product(&non_norm, &v, &v, 0.5),
            Err(MetricError::NotNormalized)
        ));

        let no_context = TangentVector::from_rows(&[vec![1.0, -1.0]], false).unwrap();
        assert!(matches!(
            fisher_inner_product(&m, &no_context, &v, 0.5),
            Err(MetricError::TangentContextRequired)
        ));
    }

    #[test]
    fn gram_matrix_cases() {
        let fisher = MetricParams::fisher();
        let m = model(&[vec![1.0, 1.0]], false);
        let g = gram_matrix(&fisher, &m);
        assert_eq!(g, array![[0.5, 0.0], [0.0, 0.5]]);

        // constant C with A = B = 0: diagonal |M| C(|M|) / M_ab
        let params = MetricParams::new(
            ScalarField::Constant(0.0),
            ScalarField::Constant(0.0),
            ScalarField::Constant(2.0),
        )
        .unwrap();
        let m2 = model(&[vec![1.0, 2.0], vec![3.0, 4.0]], false);
        let g2 = gram_matrix(&params, &m2);
        for a in 0..2 {
            for b in 0..2 {
                let idx = a * 2 + b;
                assert_abs_diff_eq!(
                    g2[(idx, idx)],
                    10.0 * 2.0 / m2.entry(a, b),
                    epsilon = 1e-12
                );
            }
        }
        // symmetry
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(g2[(i, j)], g2[(j, i)]);
            }
        }
    }

    #[test]
    fn cone_distance_cases() {
        let m = model(&[vec![1.0, 4.0]], false);
        let n = model(&[vec![4.0, 1.0]], false);
        assert_abs_diff_eq!(geodesic_distance_cone(&m, &m, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(geodesic_distance_cone(&m, &n, 0.5).unwrap(), 2.0, epsilon = 1e-14);

        let other = model(&[vec![1.0, 2.0], vec![3.0, 4.0]], false);
        assert!(matches!(
            geodesic_distance_cone(&m, &other, 0.5),
            Err(MetricError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            geodesic_distance_cone(&m, &n, 0.0),
            Err(MetricError::NonPositiveScale(_))
        ));
    }

    #[test]
    fn cone_distance_approximates_tangent_norm() {
        // d(M, M + t*eps)/t -> sqrt of the cone-family inner product as t -> 0
        let m = model(&[vec![0.7, 1.4], vec![0.5, 2.0]], false);
        let eps = array![[0.3, -0.2], [0.1, 0.4]];
        let c = 0.8;
        let tangent = TangentVector::new(eps.clone(), false).unwrap();
        let expected = inner_product(&MetricParams::cone(c).unwrap(), &m, &tangent, &tangent)
            .unwrap()
            .sqrt();
        let mut prev_err = f64::INFINITY;
        for &t in &[1e-2, 1e-3, 1e-4, 1e-5] {
            let shifted =
                PositiveConditionalModel::new(m.entries() + &(t * &eps), false).unwrap();
            let ratio = geodesic_distance_cone(&m, &shifted, c).unwrap() / t;
            let err = (ratio - expected).abs();
            // first-order convergence: each decade of t shrinks the error by
            // close to a decade
            assert!(err < prev_err * 0.3, "t={t}: error {err} vs previous {prev_err}");
            prev_err = err;
        }
        assert!(prev_err < 1e-5 * expected);
    }

    #[test]
    fn normalized_distance_cases() {
        let p = model(&[vec![0.5, 0.5]], true);
        let q = model(&[vec![0.1, 0.9]], true);
        assert_abs_diff_eq!(geodesic_distance_normalized(&p, &p, 1.0).unwrap(), 0.0);
        let bc: f64 = (0.05f64).sqrt() + (0.45f64).sqrt();
        let expected = 2.0 * bc.acos();
        let d1 = geodesic_distance_normalized(&p, &q, 1.0).unwrap();
        assert_abs_diff_eq!(d1, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(d1, 0.92730, epsilon = 1e-5);
        // sqrt(lambda) scaling
        assert_abs_diff_eq!(
            geodesic_distance_normalized(&p, &q, 4.0).unwrap(),
            2.0 * d1,
            epsilon = 1e-12
        );

        let non_norm = model(&[vec![1.0, 2.0]], false);
        assert!(matches!(
            geodesic_distance_normalized(&p, &non_norm, 1.0),
            Err(MetricError::NotNormalized)
        ));
    }

    #[test]
    fn arccos_clamp_absorbs_rounding() {
        // p = q makes the Bhattacharyya sum land within 1 ulp of 1; the clamp
        // keeps acos from returning NaN.
        let p = model(&[vec![1.0 / 3.0, 1.0 / 3.0 + 1e-16, 1.0 / 3.0 - 1e-16]], true);
        let d = geodesic_distance_normalized(&p, &p, 1.0).unwrap();
        assert!(d.is_finite());
        assert!(d.abs() < 1e-7);
    }

    #[test]
    fn metric_spec_grammar() {
        assert_eq!(MetricParams::from_str("fisher").unwrap(), MetricParams::fisher());
        let parsed: MetricParams = "abc:A=const:1;B=recip:2;C=pow:0.5,-1".parse().unwrap();
        assert_eq!(parsed.a(), &ScalarField::Constant(1.0));
        assert_eq!(parsed.b(), &ScalarField::Reciprocal(2.0));
        assert_eq!(parsed.c(), &ScalarField::Power { coeff: 0.5, exponent: -1.0 });

        // round trip through Display
        assert_eq!(parsed.to_string().parse::<MetricParams>().unwrap(), parsed);
        assert_eq!(MetricParams::fisher().to_string(), "fisher");

        assert!(matches!("abc:A=const:1".parse::<MetricParams>(), Err(MetricError::BadSpec { .. })));
        assert!(matches!("nope".parse::<MetricParams>(), Err(MetricError::BadSpec { .. })));
        assert!(matches!(
            "abc:A=const:1;B=const:0;C=const:-1".parse::<MetricParams>(),
            Err(MetricError::NonPositiveC(_))
        ));
    }
}
