//! Desk-scale fits casting logistic regression and AdaBoost as minimization of
//! the conditional I-divergence under moment-matching constraints.
//!
//! Conditional maximum likelihood over the exponential family
//! `p_θ(y|x) ∝ exp(Σ_f θ_f F(f,x,y))` maximizes
//! `(1/N) Σ_i log p_θ(y_i|x_i)`, whose gradient is the moment gap
//! `Ê[f] − Σ_x r(x) E_{p_θ(·|x)}[f]`; at the optimum the fitted model matches
//! the empirical feature moments — those are the linear constraints of the
//! primal problem, and the fit minimizes `D_r(p̂, p_θ)` over the family.
//! AdaBoost minimizes the exponential loss of the matching non-normalized
//! model by coordinate descent on weak-learner coordinates.
//!
//! Everything here is deterministic and sized for hand-checkable instances;
//! the optimizer is full-batch gradient ascent with backtracking line search.

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{
    comparison_ratio, i_divergence_closure, quadratic_form_closure, DivergenceError,
    DivergenceValue,
};
use crate::metric::geodesic_distance_cone_nonneg;
use crate::model::{EmpiricalDistribution, ModelError, PositiveConditionalModel};
use crate::rational::kahan_sum;

/// Largest |θ| coordinate the logistic fit will produce; beyond this the data
/// is treated as separable and the result flagged.
pub const THETA_CAP: f64 = 30.0;

/// Scores are rejected before exponentiation once |score| exceeds this.
pub const SCORE_OVERFLOW_LIMIT: f64 = 700.0;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("observation {index} = ({x},{y}) out of range for a {k}x{m} domain")]
    ObservationOutOfRange { index: usize, x: usize, y: usize, k: usize, m: usize },
    #[error("domain sizes must satisfy k >= 1, m >= 2; got {k}x{m}")]
    BadDomain { k: usize, m: usize },
    #[error("feature tensor value at ({f},{x},{y}) is not finite")]
    NonFiniteFeature { f: usize, x: usize, y: usize },
    #[error("feature tensor must contain at least one feature")]
    EmptyFeatures,
    #[error("feature tensor is {f}x{k}x{m}, dataset domain is {dk}x{dm}")]
    FeatureShapeMismatch { f: usize, k: usize, m: usize, dk: usize, dm: usize },
    #[error("theta has {got} coefficients, feature set has {expected}")]
    ThetaLengthMismatch { got: usize, expected: usize },
    #[error("score {value} at ({x},{y}) exceeds the overflow limit {SCORE_OVERFLOW_LIMIT}")]
    Overflow { x: usize, y: usize, value: f64 },
    #[error("gradient norm {grad_norm} still above tol {tol} after {iterations} iterations")]
    NotConverged { iterations: usize, grad_norm: f64, tol: f64 },
    #[error("boosting requires a binary response (m = 2), got m = {0}")]
    NotBinary(usize),
    #[error("boost feature {f} at x = {x} is not a ±1 weak-learner column")]
    BadBoostFeature { f: usize, x: usize },
    #[error("bad features JSON: {0}")]
    BadJson(String),
    #[error("dataset csv line {line}: {message}")]
    BadCsvLine { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
}

/// A training set of (x, y) index pairs over a k×m domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<(usize, usize)>,
    k: usize,
    m: usize,
}

impl Dataset {
    pub fn new(observations: Vec<(usize, usize)>, k: usize, m: usize) -> Result<Self, FitError> {
        if k < 1 || m < 2 {
            return Err(FitError::BadDomain { k, m });
        }
        if observations.is_empty() {
            return Err(FitError::EmptyDataset);
        }
        for (index, &(x, y)) in observations.iter().enumerate() {
            if x >= k || y >= m {
                return Err(FitError::ObservationOutOfRange { index, x, y, k, m });
            }
        }
        Ok(Self { observations, k, m })
    }

    /// Parses lines of `x_index,y_index` (0-based). Domain sizes may be given
    /// explicitly; otherwise they are inferred as max index + 1 (with m at
    /// least 2).
    pub fn parse_csv(text: &str, k: Option<usize>, m: Option<usize>) -> Result<Self, FitError> {
        let mut observations = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (xs, ys) = line.split_once(',').ok_or_else(|| FitError::BadCsvLine {
                line: line_no,
                message: "expected `x,y`".to_string(),
            })?;
            let parse = |s: &str| {
                s.trim().parse::<usize>().map_err(|e| FitError::BadCsvLine {
                    line: line_no,
                    message: e.to_string(),
                })
            };
            observations.push((parse(xs)?, parse(ys)?));
        }
        if observations.is_empty() {
            return Err(FitError::EmptyDataset);
        }
        let k = k.unwrap_or_else(|| observations.iter().map(|&(x, _)| x + 1).max().unwrap_or(1));
        let m = m
            .unwrap_or_else(|| observations.iter().map(|&(_, y)| y + 1).max().unwrap_or(2))
            .max(2);
        Self::new(observations, k, m)
    }

    pub fn observations(&self) -> &[(usize, usize)] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

/// An F×k×m tensor of feature values: entry (f, x, y) is feature f evaluated at
/// the pair (x, y).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    values: Array3<f64>,
}

impl FeatureSet {
    pub fn new(values: Array3<f64>) -> Result<Self, FitError> {
        let (f, _, _) = values.dim();
        if f == 0 {
            return Err(FitError::EmptyFeatures);
        }
        for ((fi, x, y), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(FitError::NonFiniteFeature { f: fi, x, y });
            }
        }
        Ok(Self { values })
    }

    /// Parses the JSON format `{"F": n, "values": [[[...]]]}` with values
    /// indexed `[feature][x][y]`.
    pub fn from_json(text: &str) -> Result<Self, FitError> {
        #[derive(Deserialize)]
        struct FeaturesJson {
            #[serde(rename = "F")]
            f: usize,
            values: Vec<Vec<Vec<f64>>>,
        }
        let doc: FeaturesJson =
            serde_json::from_str(text).map_err(|e| FitError::BadJson(e.to_string()))?;
        if doc.values.len() != doc.f {
            return Err(FitError::BadJson(format!(
                "declared F = {} but values has {} features",
                doc.f,
                doc.values.len()
            )));
        }
        let k = doc.values.first().map(|v| v.len()).unwrap_or(0);
        let m = doc
            .values
            .first()
            .and_then(|v| v.first())
            .map(|v| v.len())
            .unwrap_or(0);
        let mut flat = Vec::with_capacity(doc.f * k * m);
        for (fi, per_x) in doc.values.iter().enumerate() {
            if per_x.len() != k {
                return Err(FitError::BadJson(format!("feature {fi} has ragged x dimension")));
            }
            for per_y in per_x {
                if per_y.len() != m {
                    return Err(FitError::BadJson(format!("feature {fi} has ragged y dimension")));
                }
                flat.extend_from_slice(per_y);
            }
        }
        let values = Array3::from_shape_vec((doc.f, k, m), flat)
            .map_err(|e| FitError::BadJson(e.to_string()))?;
        Self::new(values)
    }

    pub fn to_json(&self) -> String {
        let (f, k, m) = self.values.dim();
        let values: Vec<Vec<Vec<f64>>> = (0..f)
            .map(|fi| {
                (0..k)
                    .map(|x| (0..m).map(|y| self.values[(fi, x, y)]).collect())
                    .collect()
            })
            .collect();
        serde_json::json!({ "F": f, "values": values }).to_string()
    }

    pub fn count(&self) -> usize {
        self.values.dim().0
    }

    pub fn k(&self) -> usize {
        self.values.dim().1
    }

    pub fn m(&self) -> usize {
        self.values.dim().2
    }

    pub fn value(&self, f: usize, x: usize, y: usize) -> f64 {
        self.values[(f, x, y)]
    }

    fn check_domain(&self, dataset: &Dataset) -> Result<(), FitError> {
        if self.k() != dataset.k() || self.m() != dataset.m() {
            return Err(FitError::FeatureShapeMismatch {
                f: self.count(),
                k: self.k(),
                m: self.m(),
                dk: dataset.k(),
                dm: dataset.m(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Row-normalized exponential model (softmax over responses).
    Logistic,
    /// Non-normalized exponential model (exponential loss geometry).
    Boost,
}

/// A fitted exponential model: coefficients plus the realized conditional
/// model matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub theta: Vec<f64>,
    pub kind: ModelKind,
    pub model: PositiveConditionalModel,
}

/// Empirical distribution r(x) = count(x)/N and conditional frequency matrix
/// p̂(y|x) = count(x,y)/count(x); rows for unobserved x are uniform. p̂ may
/// contain zeros, so it is returned as a raw matrix on the closure of the cone.
pub fn empirical(dataset: &Dataset) -> (EmpiricalDistribution, Array2<f64>) {
    let (k, m) = (dataset.k(), dataset.m());
    let mut x_counts = vec![0usize; k];
    let mut counts = Array2::<f64>::zeros((k, m));
    for &(x, y) in dataset.observations() {
        x_counts[x] += 1;
        counts[(x, y)] += 1.0;
    }
    let n = dataset.len() as f64;
    let weights = Array1::from_iter(x_counts.iter().map(|&c| c as f64 / n));
    let mut p_hat = Array2::zeros((k, m));
    for x in 0..k {
        if x_counts[x] == 0 {
            for y in 0..m {
                p_hat[(x, y)] = 1.0 / m as f64;
            }
        } else {
            for y in 0..m {
                p_hat[(x, y)] = counts[(x, y)] / x_counts[x] as f64;
            }
        }
    }
    let r = EmpiricalDistribution::new(weights).expect("counts normalize by construction");
    (r, p_hat)
}

fn scores(theta: &[f64], features: &FeatureSet) -> Result<Array2<f64>, FitError> {
    if theta.len() != features.count() {
        return Err(FitError::ThetaLengthMismatch { got: theta.len(), expected: features.count() });
    }
    let (_, k, m) = features.values.dim();
    let mut s = Array2::zeros((k, m));
    for x in 0..k {
        for y in 0..m {
            let acc: f64 = theta
                .iter()
                .enumerate()
                .map(|(f, &t)| t * features.values[(f, x, y)])
                .sum();
            if acc.abs() > SCORE_OVERFLOW_LIMIT {
                return Err(FitError::Overflow { x, y, value: acc });
            }
            s[(x, y)] = acc;
        }
    }
    Ok(s)
}

/// Realizes the exponential model for the given coefficients: softmax rows for
/// the logistic kind, plain exponentials for the boost kind. Softmax uses
/// max-shift stabilization; raw scores beyond ±700 are rejected as overflow.
pub fn model_from_theta(
    theta: &[f64],
    features: &FeatureSet,
    kind: ModelKind,
) -> Result<PositiveConditionalModel, FitError> {
    let s = scores(theta, features)?;
    let (k, m) = s.dim();
    let mut out = Array2::zeros((k, m));
    match kind {
        ModelKind::Logistic => {
            for x in 0..k {
                let row_max = s.row(x).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for y in 0..m {
                    z += (s[(x, y)] - row_max).exp();
                }
                for y in 0..m {
                    out[(x, y)] = (s[(x, y)] - row_max).exp() / z;
                }
            }
            Ok(PositiveConditionalModel::new(out, true)?)
        }
        ModelKind::Boost => {
            for x in 0..k {
                for y in 0..m {
                    out[(x, y)] = s[(x, y)].exp();
                }
            }
            Ok(PositiveConditionalModel::new(out, false)?)
        }
    }
}

/// Average log-likelihood `(1/N) Σ_i log p_θ(y_i|x_i)` and its gradient, the
/// moment gap `Ê[f] − Σ_x r(x) E_{p_θ(·|x)}[f]`.
pub fn loglik_and_grad(
    theta: &[f64],
    features: &FeatureSet,
    dataset: &Dataset,
) -> Result<(f64, Vec<f64>), FitError> {
    features.check_domain(dataset)?;
    let model = model_from_theta(theta, features, ModelKind::Logistic)?;
    let (r, _) = empirical(dataset);
    let n = dataset.len() as f64;
    let nf = features.count();

    let mut loglik_terms = Vec::with_capacity(dataset.len());
    for &(x, y) in dataset.observations() {
        loglik_terms.push(model.entry(x, y).ln());
    }
    let loglik = kahan_sum(loglik_terms) / n;

    let mut grad = vec![0.0; nf];
    for (f, slot) in grad.iter_mut().enumerate() {
        let mut empirical_moment = 0.0;
        for &(x, y) in dataset.observations() {
            empirical_moment += features.value(f, x, y);
        }
        empirical_moment /= n;

        let mut model_moment = 0.0;
        for x in 0..dataset.k() {
            let w = r.weight(x);
            if w == 0.0 {
                continue;
            }
            let mut expect = 0.0;
            for y in 0..dataset.m() {
                expect += model.entry(x, y) * features.value(f, x, y);
            }
            model_moment += w * expect;
        }
        *slot = empirical_moment - model_moment;
    }
    Ok((loglik, grad))
}

/// Empirical and fitted feature moments with the largest gap; the gap vector is
/// exactly the log-likelihood gradient.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub empirical: Vec<f64>,
    pub model: Vec<f64>,
    pub max_abs_gap: f64,
}

pub fn moment_report(
    theta: &[f64],
    features: &FeatureSet,
    dataset: &Dataset,
) -> Result<MomentReport, FitError> {
    let (_, grad) = loglik_and_grad(theta, features, dataset)?;
    let n = dataset.len() as f64;
    let empirical: Vec<f64> = (0..features.count())
        .map(|f| {
            dataset
                .observations()
                .iter()
                .map(|&(x, y)| features.value(f, x, y))
                .sum::<f64>()
                / n
        })
        .collect();
    let model: Vec<f64> = empirical.iter().zip(&grad).map(|(e, g)| e - g).collect();
    let max_abs_gap = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
    Ok(MomentReport { empirical, model, max_abs_gap })
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Convergence threshold on the sup-norm of the moment gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Backtracking line search: initial step, shrink factor, and the Armijo
    /// sufficient-increase constant.
    pub initial_step: f64,
    pub backtrack: f64,
    pub armijo: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 5_000, initial_step: 1.0, backtrack: 0.5, armijo: 1e-4 }
    }
}

/// Result of a logistic fit. `separable` marks runs that hit the θ cap with the
/// gradient still pushing outward (the unconstrained maximizer diverges); the
/// capped coefficients are returned and flagged rather than treated as an
/// error.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub fitted: FittedModel,
    pub loglik: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub separable: bool,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Maximizes the average log-likelihood (equivalently minimizes `D_r(p̂, p_θ)`
/// over the exponential family) by projected gradient ascent with backtracking
/// line search, the coefficients clamped to `[-THETA_CAP, THETA_CAP]`.
pub fn fit_logistic(
    dataset: &Dataset,
    features: &FeatureSet,
    opts: &FitOptions,
) -> Result<LogisticFit, FitError> {
    features.check_domain(dataset)?;
    let nf = features.count();
    let mut theta = vec![0.0; nf];
    let (mut loglik, mut grad) = loglik_and_grad(&theta, features, dataset)?;
    let mut iterations = 0;
    // warm-started step: grows geometrically while accepted, so separable data
    // reaches the θ cap in O(log) iterations instead of crawling as the
    // gradient decays
    let mut warm_step = opts.initial_step;

    while iterations < opts.max_iter && sup_norm(&grad) > opts.tol {
        iterations += 1;
        let mut step = (warm_step * 2.0).min(1e30);
        let mut advanced = false;
        while step >= 1e-14 {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(t, g)| (t + step * g).clamp(-THETA_CAP, THETA_CAP))
                .collect();
            // projected-ascent Armijo condition on the realized direction
            let direction_dot: f64 = candidate
                .iter()
                .zip(&theta)
                .zip(&grad)
                .map(|((c, t), g)| (c - t) * g)
                .sum();
            let (cand_ll, cand_grad) = loglik_and_grad(&candidate, features, dataset)?;
            if direction_dot > 0.0 && cand_ll >= loglik + opts.armijo * direction_dot {
                theta = candidate;
                loglik = cand_ll;
                grad = cand_grad;
                warm_step = step;
                advanced = true;
                break;
            }
            step *= opts.backtrack;
        }
        if !advanced {
            break;
        }
    }

    let mut grad_norm = sup_norm(&grad);
    let mut separable = false;
    if grad_norm > opts.tol {
        // Saturation probe: on separable data the likelihood keeps increasing
        // along the stalled gradient all the way to the θ cap (the float
        // likelihood flattens long before). If jumping the unconverged
        // coordinates to the cap does not lose likelihood, the maximizer
        // diverges; return the capped coefficients and flag it.
        let capped: Vec<f64> = theta
            .iter()
            .zip(&grad)
            .map(|(t, g)| if g.abs() > opts.tol { THETA_CAP * g.signum() } else { *t })
            .collect();
        // a probe overflow just means the capped point is unusable, not that
        // the data is separable
        match loglik_and_grad(&capped, features, dataset) {
            Ok((capped_ll, capped_grad)) if capped_ll >= loglik - 1e-9 => {
                theta = capped;
                loglik = capped_ll;
                grad = capped_grad;
                grad_norm = sup_norm(&grad);
                separable = true;
            }
            Ok(_) | Err(FitError::Overflow { .. }) => {
                return Err(FitError::NotConverged { iterations, grad_norm, tol: opts.tol });
            }
            Err(e) => return Err(e),
        }
    }
    let model = model_from_theta(&theta, features, ModelKind::Logistic)?;
    Ok(LogisticFit {
        fitted: FittedModel { theta, kind: ModelKind::Logistic, model },
        loglik,
        grad_norm,
        iterations,
        separable,
    })
}

/// Binary-response label convention for boosting: y-index 0 encodes +1,
/// y-index 1 encodes −1.
pub fn boost_label_sign(y: usize) -> f64 {
    if y == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Checks the boost feature structure: m = 2 and each feature column satisfies
/// `F(f,x,y) = sign(y) * h_f(x)` with `h_f(x) ∈ {−1, +1}`.
fn check_boost_features(features: &FeatureSet, dataset: &Dataset) -> Result<(), FitError> {
    features.check_domain(dataset)?;
    if dataset.m() != 2 {
        return Err(FitError::NotBinary(dataset.m()));
    }
    for f in 0..features.count() {
        for x in 0..features.k() {
            let plus = features.value(f, x, 0);
            let minus = features.value(f, x, 1);
            if (plus != 1.0 && plus != -1.0) || minus != -plus {
                return Err(FitError::BadBoostFeature { f, x });
            }
        }
    }
    Ok(())
}

/// Exponential loss `(1/N) Σ_i exp(−Σ_f θ_f F(f, x_i, y_i))`; with the ±1
/// feature convention the inner sum is the margin `Σ_f θ_f h_f(x_i) sign(y_i)`.
pub fn exp_loss(
    theta: &[f64],
    features: &FeatureSet,
    dataset: &Dataset,
) -> Result<f64, FitError> {
    features.check_domain(dataset)?;
    let s = scores(theta, features)?;
    let n = dataset.len() as f64;
    let mut terms = Vec::with_capacity(dataset.len());
    for &(x, y) in dataset.observations() {
        terms.push((-s[(x, y)]).exp());
    }
    Ok(kahan_sum(terms) / n)
}

#[derive(Debug, Clone, Copy)]
pub struct BoostOptions {
    pub rounds: usize,
    /// Cap on |α| per round; engaged when a weak learner is degenerate
    /// (weighted error 0 or 1) or nearly so.
    pub alpha_max: f64,
}

impl Default for BoostOptions {
    fn default() -> Self {
        Self { rounds: 20, alpha_max: 10.0 }
    }
}

/// One coordinate-descent round of the boost fit.
#[derive(Debug, Clone, Serialize)]
pub struct BoostRound {
    pub round: usize,
    pub feature: usize,
    pub weighted_error: f64,
    pub alpha: f64,
    pub degenerate: bool,
    pub exp_loss: f64,
}

#[derive(Debug, Clone)]
pub struct BoostFit {
    pub fitted: FittedModel,
    /// Losses per round, starting with the θ = 0 loss of 1.
    pub losses: Vec<f64>,
    pub rounds: Vec<BoostRound>,
}

/// Coordinate descent on the exponential loss: each round picks the feature
/// with the largest edge |1 − 2ε| under the current example weights and steps
/// its coefficient by `α = ½ log((1−ε)/ε)`, capped at ±alpha_max (degenerate
/// learners with ε ∈ {0, 1} take the capped step and are flagged). The loss is
/// non-increasing round over round; rounds stop early once every edge vanishes.
pub fn fit_adaboost(
    dataset: &Dataset,
    features: &FeatureSet,
    opts: &BoostOptions,
) -> Result<BoostFit, FitError> {
    check_boost_features(features, dataset)?;
    let nf = features.count();
    let mut theta = vec![0.0; nf];
    let mut losses = vec![exp_loss(&theta, features, dataset)?];
    let mut rounds = Vec::with_capacity(opts.rounds);

    for round in 0..opts.rounds {
        // example weights w_i ∝ exp(−margin_i), max-shift normalized
        let s = scores(&theta, features)?;
        let margins: Vec<f64> =
            dataset.observations().iter().map(|&(x, y)| s[(x, y)]).collect();
        let shift = margins.iter().cloned().fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = margins.iter().map(|&mg| (-(mg - shift)).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

        // weighted error of each weak learner: mass where it disagrees with the label
        let mut best: Option<(usize, f64, f64)> = None; // (feature, epsilon, edge)
        for f in 0..nf {
            let mut eps = 0.0;
            for (i, &(x, y)) in dataset.observations().iter().enumerate() {
                if features.value(f, x, y) < 0.0 {
                    eps += weights[i];
                }
            }
            let edge = (1.0 - 2.0 * eps).abs();
            if best.map(|(_, _, e)| edge > e).unwrap_or(true) {
                best = Some((f, eps, edge));
            }
        }
        let (feature, eps, edge) = best.expect("at least one feature");
        if edge == 0.0 {
            break; // every learner is at chance; no step can reduce the loss
        }
        let degenerate = eps <= 0.0 || eps >= 1.0;
        let alpha = if eps <= 0.0 {
            opts.alpha_max
        } else if eps >= 1.0 {
            -opts.alpha_max
        } else {
            (0.5 * ((1.0 - eps) / eps).ln()).clamp(-opts.alpha_max, opts.alpha_max)
        };
        theta[feature] += alpha;
        let loss = exp_loss(&theta, features, dataset)?;
        rounds.push(BoostRound {
            round,
            feature,
            weighted_error: eps,
            alpha,
            degenerate: degenerate || alpha.abs() >= opts.alpha_max,
            exp_loss: loss,
        });
        losses.push(loss);
    }

    let model = model_from_theta(&theta, features, ModelKind::Boost)?;
    Ok(BoostFit {
        fitted: FittedModel { theta, kind: ModelKind::Boost, model },
        losses,
        rounds,
    })
}

/// Geometric diagnostics of a fitted model against the empirical distribution:
/// the I-divergence `D_r(p̂, model)`, the quadratic form at p̂ with
/// ε = model − p̂, and half the squared cone geodesic distance between the
/// weighted models. Both ratios tend to 1 in the small-divergence regime;
/// `taylor_regime_violated` flags fits too far from p̂ for the quadratic
/// picture to hold (ratios outside [0.5, 2] or non-finite). Values may be
/// infinite when p̂ has zeros against the model's support.
#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    pub divergence: f64,
    pub quadratic: f64,
    pub geodesic_half_sq: f64,
    pub ratio_quadratic: f64,
    pub ratio_geodesic: f64,
    pub taylor_regime_violated: bool,
}

pub fn fit_diagnostics(dataset: &Dataset, fitted: &FittedModel) -> Result<FitDiagnostics, FitError> {
    let (r, p_hat) = empirical(dataset);
    let model = fitted.model.entries();
    if model.dim() != p_hat.dim() {
        return Err(FitError::FeatureShapeMismatch {
            f: 0,
            k: model.nrows(),
            m: model.ncols(),
            dk: p_hat.nrows(),
            dm: p_hat.ncols(),
        });
    }
    let divergence = i_divergence_closure(&r, &p_hat, model)?.as_f64();
    let eps = model - &p_hat;
    let quadratic = match quadratic_form_closure(&r, &p_hat, &eps)? {
        DivergenceValue::Finite(v) => v,
        DivergenceValue::Infinite => f64::INFINITY,
    };
    let weigh = |m: &Array2<f64>| {
        let mut out = m.clone();
        for (x, mut row) in out.rows_mut().into_iter().enumerate() {
            let w = r.weight(x);
            row.mapv_inplace(|v| v * w);
        }
        out
    };
    let distance = geodesic_distance_cone_nonneg(&weigh(&p_hat), &weigh(model), 1.0)
        .expect("shapes checked");
    let geodesic_half_sq = 0.5 * distance * distance;
    let ratio_quadratic = comparison_ratio(divergence, quadratic);
    let ratio_geodesic = comparison_ratio(divergence, geodesic_half_sq);
    let in_band = |ratio: f64| ratio.is_finite() && (0.5..=2.0).contains(&ratio);
    Ok(FitDiagnostics {
        divergence,
        quadratic,
        geodesic_half_sq,
        ratio_quadratic,
        ratio_geodesic,
        taylor_regime_violated: !(in_band(ratio_quadratic) && in_band(ratio_geodesic)),
    })
}
