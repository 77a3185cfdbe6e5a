//! Property-certification suites, runnable from tests or the CLI.
//!
//! Each suite draws reproducible random instances (see [`crate::sample`]) and
//! verifies one of the library's structural identities:
//!
//! - `isometry` — pull-backs through random congruent embeddings reproduce the
//!   source metric on every basis pair, for random metrics from the family;
//! - `norm` — embeddings preserve the L1 norm of models;
//! - `prop3` — the rational uniformizer maps its defining model to the exact
//!   constant matrix, bit-exact in rational arithmetic, for every integer
//!   numerator matrix up to a norm bound;
//! - `corollary1` — on normalized models with zero-row-sum tangents the metric
//!   reduces to the scaled product Fisher metric, independently of A and B;
//! - `taylor` — the divergence quadratic form is exactly the weighted Fisher
//!   squared length, and the Taylor remainder of the divergence is cubic;
//! - `geodesic` — embeddings preserve the closed-form cone geodesic distance.
//!
//! Reports are deterministic given the seed; trials are seeded independently
//! of evaluation order.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

use crate::divergence::{quadratic_form, taylor_report, DEFAULT_TAYLOR_SCALES};
use crate::metric::{
    fisher_inner_product, geodesic_distance_cone, inner_product, MetricParams, ScalarField,
};
use crate::model::{EmpiricalDistribution, PositiveConditionalModel, RationalConditionalModel, TangentVector};
use crate::morphism::{check_isometry, rational_uniformizer, uniformizer_constant, MorphismError};
use crate::rational::kahan_sum;
use crate::sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    Isometry,
    Norm,
    Prop3,
    Corollary1,
    Taylor,
    Geodesic,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 6] = [
        SuiteKind::Isometry,
        SuiteKind::Norm,
        SuiteKind::Prop3,
        SuiteKind::Corollary1,
        SuiteKind::Taylor,
        SuiteKind::Geodesic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SuiteKind::Isometry => "isometry",
            SuiteKind::Norm => "norm",
            SuiteKind::Prop3 => "prop3",
            SuiteKind::Corollary1 => "corollary1",
            SuiteKind::Taylor => "taylor",
            SuiteKind::Geodesic => "geodesic",
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownSuite(pub String);

impl fmt::Display for UnknownSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown suite `{}`", self.0)
    }
}

impl std::error::Error for UnknownSuite {}

impl FromStr for SuiteKind {
    type Err = UnknownSuite;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SuiteKind::ALL
            .iter()
            .find(|k| k.name() == s.trim())
            .copied()
            .ok_or_else(|| UnknownSuite(s.to_string()))
    }
}

/// Suite parameters. `tol` is interpreted per suite (absolute for `norm`,
/// scale-aware `tol * (1 + |reference|)` for `isometry` and `taylor`,
/// relative for `corollary1` and `geodesic`, unused by the exact `prop3`).
#[derive(Debug, Clone, Copy)]
pub struct SuiteConfig {
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub kmax: usize,
    pub mmax: usize,
    pub lmax: usize,
    pub nmax: usize,
    /// Output-cell cap for uniformizer constructions (prop3 guard path).
    pub size_cap: u64,
    /// Enumeration bound on the total numerator mass |M̃| for prop3.
    pub norm_bound: u64,
}

impl SuiteConfig {
    pub fn defaults_for(kind: SuiteKind) -> Self {
        let (trials, tol) = match kind {
            SuiteKind::Isometry => (200, 1e-9),
            SuiteKind::Norm => (1000, 1e-12),
            SuiteKind::Prop3 => (0, 0.0),
            SuiteKind::Corollary1 => (100, 1e-10),
            SuiteKind::Taylor => (100, 1e-12),
            SuiteKind::Geodesic => (200, 1e-10),
        };
        Self {
            trials,
            seed: 42,
            tol,
            kmax: 4,
            mmax: 4,
            lmax: 12,
            nmax: 12,
            size_cap: crate::morphism::DEFAULT_SIZE_CAP,
            norm_bound: 12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteFailure {
    pub trial: usize,
    pub description: String,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub trials: usize,
    pub seed: u64,
    pub max_error: f64,
    pub failures: Vec<SuiteFailure>,
    pub pass: bool,
}

impl SuiteReport {
    fn new(kind: SuiteKind, config: &SuiteConfig) -> Self {
        Self {
            suite: kind.name().to_string(),
            trials: config.trials,
            seed: config.seed,
            max_error: 0.0,
            failures: Vec::new(),
            pass: true,
        }
    }

    fn record(&mut self, error: f64) {
        if error > self.max_error {
            self.max_error = error;
        }
    }

    fn fail(&mut self, trial: usize, description: String, error: f64) {
        self.failures.push(SuiteFailure { trial, description, error });
        self.pass = false;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Runs one certification suite with the given configuration.
pub fn run_check_suite(kind: SuiteKind, config: &SuiteConfig) -> SuiteReport {
    match kind {
        SuiteKind::Isometry => run_isometry(config),
        SuiteKind::Norm => run_norm(config),
        SuiteKind::Prop3 => run_prop3(config),
        SuiteKind::Corollary1 => run_corollary1(config),
        SuiteKind::Taylor => run_taylor(config),
        SuiteKind::Geodesic => run_geodesic(config),
    }
}

fn sampled_metric_specs(seed: u64, count: u64) -> Vec<MetricParams> {
    (0..count)
        .map(|i| sample::metric_params(&mut sample::trial_rng(seed, u64::MAX - i)))
        .collect()
}

fn run_isometry(config: &SuiteConfig) -> SuiteReport {
    let mut report = SuiteReport::new(SuiteKind::Isometry, config);
    let specs = sampled_metric_specs(config.seed, 5);
    for trial in 0..config.trials {
        let mut rng = sample::trial_rng(config.seed, trial as u64);
        let (k, m) = sample::dims(&mut rng, config.kmax, config.mmax);
        let f = sample::morphism(&mut rng, k, m, config.lmax, config.nmax);
        let model = sample::model(&mut rng, k, m);
        let params = &specs[trial % specs.len()];
        match check_isometry(&f, params, &model, config.tol) {
            Ok(result) => {
                report.record(result.max_abs_error);
                if !result.pass {
                    report.fail(
                        trial,
                        format!(
                            "pull-back deviates from the source metric at basis pair {:?}",
                            result.worst_pair
                        ),
                        result.max_abs_error,
                    );
                }
            }
            Err(e) => report.fail(trial, e.to_string(), f64::NAN),
        }
    }
    report
}

fn run_norm(config: &SuiteConfig) -> SuiteReport {
    let mut report = SuiteReport::new(SuiteKind::Norm, config);
    for trial in 0..config.trials {
        let mut rng = sample::trial_rng(config.seed, trial as u64);
        let (k, m) = sample::dims(&mut rng, config.kmax, config.mmax);
        let f = sample::morphism(&mut rng, k, m, config.lmax, config.nmax);
        let model = sample::model(&mut rng, k, m);
        match f.apply(&model) {
            Ok(image) => {
                let err = (image.l1_norm() - model.l1_norm()).abs();
                report.record(err);
                if err > config.tol {
                    report.fail(trial, format!("|f(M)| deviates from |M| by {err:e}"), err);
                }
            }
            Err(e) => report.fail(trial, e.to_string(), f64::NAN),
        }
    }
    report
}

/// All numerator matrices with k >= 1 rows, m >= 2 columns, entries >= 1, and
/// total mass at most `bound`.
fn enumerate_numerator_matrices(bound: u64) -> Vec<Array2<u64>> {
    let mut out = Vec::new();
    let bound_usize = bound as usize;
    for k in 1..=bound_usize / 2 {
        for m in 2..=bound_usize / k {
            let cells = k * m;
            let mut current = vec![1u64; cells];
            fill(&mut out, &mut current, 0, bound - cells as u64, k, m);
        }
    }
    return out;

    fn fill(
        out: &mut Vec<Array2<u64>>,
        current: &mut Vec<u64>,
        index: usize,
        slack: u64,
        k: usize,
        m: usize,
    ) {
        if index == current.len() {
            let arr = Array2::from_shape_vec((k, m), current.clone()).expect("shape agrees");
            out.push(arr);
            return;
        }
        for extra in 0..=slack {
            current[index] = 1 + extra;
            fill(out, current, index + 1, slack - extra, k, m);
        }
        current[index] = 1;
    }
}

fn run_prop3(config: &SuiteConfig) -> SuiteReport {
    let mut report = SuiteReport::new(SuiteKind::Prop3, config);
    let mut checked = 0usize;
    for numerators in enumerate_numerator_matrices(config.norm_bound) {
        // the uniformizer depends only on the numerator matrix, not on z
        let base = RationalConditionalModel::new(numerators.clone(), 1)
            .expect("entries are at least 1");
        let f = match rational_uniformizer(&base, config.size_cap) {
            Ok(f) => Some(f),
            Err(e @ MorphismError::SizeCapExceeded { .. }) => {
                report.fail(checked, e.to_string(), f64::NAN);
                None
            }
            Err(e) => {
                report.fail(checked, e.to_string(), f64::NAN);
                None
            }
        };
        for z in [1u64, 3] {
            let trial = checked;
            checked += 1;
            let Some(f) = f.as_ref() else { continue };
            let model = RationalConditionalModel::new(numerators.clone(), z)
                .expect("entries are at least 1");
            let expected = uniformizer_constant(&model);
            let image = match f.apply_exact(&model) {
                Ok(image) => image,
                Err(e) => {
                    report.fail(trial, e.to_string(), f64::NAN);
                    continue;
                }
            };
            let mismatches = image.iter().filter(|v| **v != expected).count();
            if mismatches > 0 {
                report.fail(
                    trial,
                    format!(
                        "uniformizer image of M̃ (mass {}) has {mismatches} entries differing from the exact constant",
                        model.total_numerator()
                    ),
                    mismatches as f64,
                );
            }
        }
    }
    report.trials = checked;
    report
}

fn run_corollary1(config: &SuiteConfig) -> SuiteReport {
    let mut report = SuiteReport::new(SuiteKind::Corollary1, config);
    // fixed C(t) = 1/(2t); on normalized models the reduction scale k*C(k) = 1/2
    let fixed_c = ScalarField::Reciprocal(0.5);
    let ab_specs: Vec<MetricParams> = (0..5)
        .map(|i| {
            sample::metric_params_with_c(&mut sample::trial_rng(config.seed, u64::MAX - i), fixed_c)
        })
        .collect();
    for trial in 0..config.trials {
        let mut rng = sample::trial_rng(config.seed, trial as u64);
        let (k, m) = sample::dims(&mut rng, config.kmax, config.mmax);
        let model = sample::normalized_model(&mut rng, k, m);
        let u = sample::zero_row_sum_tangent(&mut rng, k, m);
        let v = sample::zero_row_sum_tangent(&mut rng, k, m);
        let params = &ab_specs[trial % ab_specs.len()];
        let scale = k as f64 * fixed_c.eval(k as f64).expect("k > 0");
        let full = match inner_product(params, &model, &u, &v) {
            Ok(v) => v,
            Err(e) => {
                report.fail(trial, e.to_string(), f64::NAN);
                continue;
            }
        };
        let reduced = match fisher_inner_product(&model, &u, &v, scale) {
            Ok(v) => v,
            Err(e) => {
                report.fail(trial, e.to_string(), f64::NAN);
                continue;
            }
        };
        let rel = (full - reduced).abs() / full.abs().max(reduced.abs()).max(1.0);
        report.record(rel);
        if rel > config.tol {
            report.fail(
                trial,
                format!("A/B contributions did not cancel: full {full}, reduced {reduced}"),
                rel,
            );
        }
    }
    report
}

fn run_taylor(config: &SuiteConfig) -> SuiteReport {
    let mut report = SuiteReport::new(SuiteKind::Taylor, config);
    for trial in 0..config.trials {
        let mut rng = sample::trial_rng(config.seed, trial as u64);
        let (k, m) = sample::dims(&mut rng, config.kmax, config.mmax);
        let p = sample::normalized_model(&mut rng, k, m);
        let eps = sample::zero_row_sum_tangent(&mut rng, k, m);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total = kahan_sum(raw.iter().copied());
        let r = EmpiricalDistribution::new(Array1::from_iter(raw.iter().map(|w| w / total)))
            .expect("normalized weights");

        // the quadratic form is exactly the weighted Fisher squared length
        let qf = match quadratic_form(&r, &p, &eps) {
            Ok(v) => v,
            Err(e) => {
                report.fail(trial, e.to_string(), f64::NAN);
                continue;
            }
        };
        let weighted_model = {
            let mut w = p.entries().clone();
            for (x, mut row) in w.rows_mut().into_iter().enumerate() {
                let weight = r.weight(x);
                row.mapv_inplace(|v| v * weight);
            }
            PositiveConditionalModel::new(w, false).expect("weights are positive")
        };
        let weighted_tangent = {
            let mut w = eps.coeffs().clone();
            for (x, mut row) in w.rows_mut().into_iter().enumerate() {
                let weight = r.weight(x);
                row.mapv_inplace(|v| v * weight);
            }
            TangentVector::new(w, false).expect("finite coefficients")
        };
        let ip = inner_product(
            &MetricParams::fisher(),
            &weighted_model,
            &weighted_tangent,
            &weighted_tangent,
        )
        .expect("shapes agree");
        let err = (qf - ip).abs();
        report.record(err);
        if err > config.tol * (1.0 + qf.abs()) {
            report.fail(
                trial,
                format!("quadratic form {qf} differs from weighted Fisher length {ip}"),
                err,
            );
        }
    }

    // deterministic sweep with a nonvanishing cubic term: the remainder
    // |D - quadratic| scales as t³ across the default scales
    let p = PositiveConditionalModel::from_rows(
        &[vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
        true,
    )
    .expect("valid model");
    let eps = TangentVector::from_rows(&[vec![1.0, -0.5, -0.5]], true).expect("zero row sum");
    let r = EmpiricalDistribution::from_slice(&[1.0]).expect("point mass");
    match taylor_report(&r, &p, &eps, &DEFAULT_TAYLOR_SCALES) {
        Ok(reports) => {
            let ratios: Vec<f64> =
                reports.iter().map(|rep| rep.abs_error / rep.scale.powi(3)).collect();
            let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
            let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
            let spread = max / min;
            report.record(0.0);
            if !(min > 0.0 && spread < 4.0) {
                report.fail(
                    config.trials,
                    format!("third-order remainder ratios spread by {spread} across the sweep"),
                    spread,
                );
            }
            let quad_ratios: Vec<f64> =
                reports.iter().map(|rep| rep.abs_error / rep.scale.powi(2)).collect();
            if !quad_ratios.windows(2).all(|w| w[1] < w[0]) {
                report.fail(
                    config.trials,
                    format!("remainder/t² did not decrease: {quad_ratios:?}"),
                    f64::NAN,
                );
            }
        }
        Err(e) => report.fail(config.trials, e.to_string(), f64::NAN),
    }
    report
}

fn run_geodesic(config: &SuiteConfig) -> SuiteReport {
    let mut report = SuiteReport::new(SuiteKind::Geodesic, config);
    for trial in 0..config.trials {
        let mut rng = sample::trial_rng(config.seed, trial as u64);
        let (k, m) = sample::dims(&mut rng, config.kmax, config.mmax);
        let f = sample::morphism(&mut rng, k, m, config.lmax, config.nmax);
        let a = sample::model(&mut rng, k, m);
        let b = sample::model(&mut rng, k, m);
        let result = (|| -> Result<(f64, f64), MorphismError> {
            let source = geodesic_distance_cone(&a, &b, 0.5)?;
            let image = geodesic_distance_cone(&f.apply(&a)?, &f.apply(&b)?, 0.5)?;
            Ok((source, image))
        })();
        match result {
            Ok((source, image)) => {
                let rel = (source - image).abs() / source.abs().max(image.abs()).max(1.0);
                report.record(rel);
                if rel > config.tol {
                    report.fail(
                        trial,
                        format!("cone distance not preserved: source {source}, image {image}"),
                        rel,
                    );
                }
            }
            Err(e) => report.fail(trial, e.to_string(), f64::NAN),
        }
    }
    report
}
