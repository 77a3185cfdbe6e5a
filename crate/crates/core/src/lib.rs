//! Geometry of positive conditional models.
//!
//! A conditional model over finite spaces is a k×m matrix of positive weights,
//! row-normalized when it represents conditional probabilities. This crate
//! implements the family of Riemannian metrics on these models that is
//! invariant under congruent embeddings by Markov morphisms, the embeddings
//! themselves with push-forward/pull-back machinery and numerical isometry
//! certification, the conditional I-divergence with its quadratic
//! (Fisher-length) approximation, and desk-scale logistic-regression and
//! AdaBoost fits cast as divergence minimization under moment constraints.
//!
//! Modules:
//! - [`model`] — validated value types: positive models, tangent vectors,
//!   exact-rational models, empirical distributions; matrix CSV.
//! - [`metric`] — the (A, B, C) metric family, inner products, Gram matrices,
//!   closed-form geodesic distances, and the metric-spec string grammar.
//! - [`morphism`] — partitions, partition-stochastic matrices, Markov
//!   morphisms, the three canonical transformations, composition, pull-backs,
//!   and isometry checks.
//! - [`divergence`] — the conditional I-divergence, closure conventions,
//!   quadratic forms, Taylor sweeps, and geodesic comparisons.
//! - [`fitting`] — conditional MLE (logistic) and exponential-loss coordinate
//!   descent (AdaBoost) with moment and geometry diagnostics.
//! - [`sample`] / [`suite`] — seeded random instances and the certification
//!   suites exposed by the CLI `check` command.

pub mod divergence;
pub mod fitting;
pub mod metric;
pub mod model;
pub mod morphism;
pub mod rational;
pub mod sample;
pub mod suite;

pub use divergence::{
    divergence_vs_geodesic, i_divergence, i_divergence_closure, quadratic_form, taylor_report,
    DivergenceError, DivergenceReport, DivergenceValue, GeodesicComparison,
};
pub use fitting::{
    empirical, exp_loss, fit_adaboost, fit_diagnostics, fit_logistic, loglik_and_grad,
    model_from_theta, moment_report, BoostFit, BoostOptions, Dataset, FeatureSet, FitDiagnostics,
    FitError, FitOptions, FittedModel, LogisticFit, ModelKind,
};
pub use metric::{
    fisher_inner_product, geodesic_distance_cone, geodesic_distance_normalized, gram_matrix,
    inner_product, metric_basis, MetricError, MetricParams, ScalarField,
};
pub use model::{
    parse_matrix_csv, write_matrix_csv, EmpiricalDistribution, ModelError,
    PositiveConditionalModel, RationalConditionalModel, TangentVector, CONSTRAINT_TOL,
};
pub use morphism::{
    check_isometry, compose, is_partition_stochastic, is_uniform_partition_stochastic,
    permutation_morphism, pull_back_metric, rational_uniformizer, row_product,
    solve_basis_transport, uniform_replication, uniformizer_constant, IsometryReport,
    MarkovMorphism, MorphismError, Partition, PartitionStochastic, PullbackMetric,
    DEFAULT_SIZE_CAP,
};
pub use suite::{run_check_suite, SuiteConfig, SuiteFailure, SuiteKind, SuiteReport, UnknownSuite};
