//! Command-line harness for the conditional-model geometry library:
//! certification suites, metric and divergence calculators, morphism
//! construction and application, and divergence-minimizing fits.
//!
//! All matrix files use the CSV format of the library (one row per line, no
//! header); morphisms and feature sets use their JSON formats; indices are
//! 0-based everywhere. Output is deterministic given the subcommand, flags and
//! seed. Exit codes: 0 on success (and passing suites), 1 on failures and
//! operational errors, 2 on usage errors.

use std::fs;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use condgeo::{
    divergence_vs_geodesic, fit_adaboost, fit_diagnostics, fit_logistic, geodesic_distance_cone,
    geodesic_distance_normalized, gram_matrix, i_divergence, inner_product, metric_basis,
    moment_report, parse_matrix_csv, rational_uniformizer, run_check_suite, uniform_replication,
    write_matrix_csv, BoostOptions, Dataset, EmpiricalDistribution, FeatureSet, FitOptions,
    MarkovMorphism, MetricParams, PositiveConditionalModel, RationalConditionalModel, SuiteConfig,
    SuiteKind, TangentVector, DEFAULT_SIZE_CAP,
};
use ndarray::Array2;

#[derive(Parser)]
#[command(
    name = "condgeo",
    version,
    about = "Geometry of positive conditional models: invariance suites, metrics, Markov morphisms, divergences, fits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a certification suite and print its JSON report (exit 1 on failure)
    Check(CheckArgs),
    /// Evaluate the metric at a model: basis pairs, tangent inner products, or
    /// the full Gram matrix
    Metric(MetricArgs),
    /// Build, apply and push tangents through Markov morphisms
    Morph {
        #[command(subcommand)]
        action: MorphAction,
    },
    /// Conditional I-divergence between two models, weighted by r
    Div(DivArgs),
    /// Closed-form geodesic distances (cone or normalized sphere form)
    Geodesic(GeodesicArgs),
    /// Fit a conditional model by divergence minimization and report
    /// moments and geometry diagnostics
    Fit(FitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteName {
    Isometry,
    Norm,
    Prop3,
    Corollary1,
    Taylor,
    Geodesic,
}

impl From<SuiteName> for SuiteKind {
    fn from(name: SuiteName) -> Self {
        match name {
            SuiteName::Isometry => SuiteKind::Isometry,
            SuiteName::Norm => SuiteKind::Norm,
            SuiteName::Prop3 => SuiteKind::Prop3,
            SuiteName::Corollary1 => SuiteKind::Corollary1,
            SuiteName::Taylor => SuiteKind::Taylor,
            SuiteName::Geodesic => SuiteKind::Geodesic,
        }
    }
}

#[derive(Args)]
struct CheckArgs {
    /// Which suite to run
    #[arg(long, value_enum)]
    suite: SuiteName,
    /// Number of random trials (suite default when omitted)
    #[arg(long)]
    trials: Option<usize>,
    /// Seed for all randomness in the suite
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Tolerance (interpretation is per suite; suite default when omitted)
    #[arg(long)]
    tol: Option<f64>,
    /// Largest explanatory dimension for sampled models
    #[arg(long)]
    kmax: Option<usize>,
    /// Largest response dimension for sampled models
    #[arg(long)]
    mmax: Option<usize>,
    /// Largest explanatory dimension for embedding targets
    #[arg(long)]
    lmax: Option<usize>,
    /// Largest response dimension for embedding targets
    #[arg(long)]
    nmax: Option<usize>,
    /// Cell cap for uniformizer outputs (prop3 guard)
    #[arg(long)]
    size_cap: Option<u64>,
    /// Numerator-mass bound for the prop3 enumeration
    #[arg(long)]
    norm_bound: Option<u64>,
    /// Output path, `-` for stdout
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct MetricArgs {
    /// Metric spec: `fisher` or `abc:A=<fn>;B=<fn>;C=<fn>` with
    /// `<fn>` one of `const:<v>`, `recip:<v>`, `pow:<c>,<p>`
    #[arg(long, default_value = "fisher")]
    metric: String,
    /// Model CSV file
    #[arg(long)]
    model: String,
    /// Treat the model as row-normalized (validated)
    #[arg(long)]
    normalized: bool,
    /// First basis index pair `a,b` (0-based)
    #[arg(long)]
    ab: Option<String>,
    /// Second basis index pair `c,d` (0-based)
    #[arg(long)]
    cd: Option<String>,
    /// Tangent CSV for the first argument of an inner product
    #[arg(long)]
    u: Option<String>,
    /// Tangent CSV for the second argument of an inner product
    #[arg(long)]
    v: Option<String>,
    /// Print the full Gram matrix as CSV (row-major pair indexing)
    #[arg(long)]
    gram: bool,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Subcommand)]
enum MorphAction {
    /// Construct a morphism and print its JSON
    Build(BuildArgs),
    /// Apply a morphism to a model; prints the image model CSV
    Apply(ApplyArgs),
    /// Push a tangent vector forward; prints the image tangent CSV
    Pushforward(PushforwardArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[command(subcommand)]
    kind: BuildKind,
}

#[derive(Subcommand)]
enum BuildKind {
    /// Relabeling morphism from explanatory and per-row response permutations
    Permutation {
        /// Explanatory permutation, e.g. `1,0,2` (image of each index)
        #[arg(long)]
        sigma: String,
        /// Response permutations per explanatory value, `;`-separated,
        /// e.g. `1,0;0,1`
        #[arg(long)]
        pi: String,
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Uniform replication of rows by z and columns by w
    Replication {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        z: usize,
        #[arg(long)]
        w: usize,
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Uniformizer of a rational model (CSV of integer numerators plus a
    /// common denominator); maps the model to an exactly constant matrix
    Uniformizer {
        /// CSV of positive integer numerators
        #[arg(long)]
        numerators: String,
        #[arg(long)]
        denominator: u64,
        #[arg(long, default_value_t = DEFAULT_SIZE_CAP)]
        size_cap: u64,
        #[arg(long, default_value = "-")]
        out: String,
    },
}

#[derive(Args)]
struct ApplyArgs {
    /// Morphism JSON file
    #[arg(long)]
    morphism: String,
    /// Model CSV file
    #[arg(long)]
    model: String,
    #[arg(long)]
    normalized: bool,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct PushforwardArgs {
    #[arg(long)]
    morphism: String,
    /// Tangent CSV file
    #[arg(long)]
    tangent: String,
    /// Enforce and propagate zero row sums
    #[arg(long)]
    normalized_context: bool,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct DivArgs {
    /// Explanatory weighting CSV (single row or single column)
    #[arg(long)]
    r: String,
    #[arg(long)]
    p: String,
    #[arg(long)]
    q: String,
    /// Validate both models as row-normalized and also report the geodesic
    /// comparison
    #[arg(long)]
    normalized: bool,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct GeodesicArgs {
    /// Cone metric scale c (distance under A = B = 0, C(t) = c/t)
    #[arg(long, conflicts_with = "sphere")]
    cone: Option<f64>,
    /// Normalized-model distance with product-Fisher scale λ
    #[arg(long)]
    sphere: Option<f64>,
    #[arg(long)]
    p: String,
    #[arg(long)]
    q: String,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    Logistic,
    Boost,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    kind: FitKind,
    /// Dataset CSV: one `x,y` observation per line (0-based indices)
    #[arg(long)]
    data: String,
    /// Feature tensor JSON: {"F": n, "values": [[[...]]]}
    #[arg(long)]
    features: String,
    /// Moment-gap tolerance (logistic)
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Boosting rounds
    #[arg(long, default_value_t = 20)]
    rounds: usize,
    /// Per-round step cap for degenerate weak learners
    #[arg(long, default_value_t = 10.0)]
    alpha_max: f64,
    #[arg(long, default_value = "-")]
    out: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check(args) => check(args),
        Command::Metric(args) => metric(args).map(|()| ExitCode::SUCCESS),
        Command::Morph { action } => morph(action).map(|()| ExitCode::SUCCESS),
        Command::Div(args) => div(args).map(|()| ExitCode::SUCCESS),
        Command::Geodesic(args) => geodesic(args).map(|()| ExitCode::SUCCESS),
        Command::Fit(args) => fit(args).map(|()| ExitCode::SUCCESS),
    }
}

fn write_output(out: &str, content: &str) -> Result<()> {
    if out == "-" {
        print!("{content}");
        if !content.ends_with('\n') {
            println!();
        }
        Ok(())
    } else {
        fs::write(out, content).with_context(|| format!("writing {out}"))
    }
}

fn load_matrix(path: &str) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    parse_matrix_csv(&text).with_context(|| format!("parsing matrix CSV {path}"))
}

fn load_model(path: &str, normalized: bool) -> Result<PositiveConditionalModel> {
    Ok(PositiveConditionalModel::new(load_matrix(path)?, normalized)?)
}

fn load_tangent(path: &str, normalized_context: bool) -> Result<TangentVector> {
    Ok(TangentVector::new(load_matrix(path)?, normalized_context)?)
}

fn load_weights(path: &str) -> Result<EmpiricalDistribution> {
    let matrix = load_matrix(path)?;
    if matrix.nrows() != 1 && matrix.ncols() != 1 {
        bail!("{path}: weight vector must be a single row or a single column");
    }
    let flat: Vec<f64> = matrix.iter().copied().collect();
    Ok(EmpiricalDistribution::from_slice(&flat)?)
}

fn parse_index_pair(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("expected `a,b`, got `{text}`"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_permutation(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(Into::into))
        .collect()
}

fn json_number(value: f64) -> String {
    serde_json::to_string(&value).expect("finite float serializes")
}

fn check(args: CheckArgs) -> Result<ExitCode> {
    let kind: SuiteKind = args.suite.into();
    let mut config = SuiteConfig::defaults_for(kind);
    config.seed = args.seed;
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(tol) = args.tol {
        config.tol = tol;
    }
    if let Some(kmax) = args.kmax {
        config.kmax = kmax;
    }
    if let Some(mmax) = args.mmax {
        config.mmax = mmax;
    }
    if let Some(lmax) = args.lmax {
        config.lmax = lmax;
    }
    if let Some(nmax) = args.nmax {
        config.nmax = nmax;
    }
    if let Some(size_cap) = args.size_cap {
        config.size_cap = size_cap;
    }
    if let Some(norm_bound) = args.norm_bound {
        config.norm_bound = norm_bound;
    }
    let report = run_check_suite(kind, &config);
    write_output(&args.out, &report.to_json())?;
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn metric(args: MetricArgs) -> Result<()> {
    let params = MetricParams::from_str(&args.metric)?;
    let model = load_model(&args.model, args.normalized)?;
    if args.gram {
        let gram = gram_matrix(&params, &model);
        return write_output(&args.out, &write_matrix_csv(&gram));
    }
    match (&args.ab, &args.cd, &args.u, &args.v) {
        (Some(ab), Some(cd), None, None) => {
            let value =
                metric_basis(&params, &model, parse_index_pair(ab)?, parse_index_pair(cd)?)?;
            write_output(&args.out, &json_number(value))
        }
        (None, None, Some(u), Some(v)) => {
            let u = load_tangent(u, false)?;
            let v = load_tangent(v, false)?;
            let value = inner_product(&params, &model, &u, &v)?;
            write_output(&args.out, &json_number(value))
        }
        _ => bail!("pass either --ab and --cd, or --u and --v, or --gram"),
    }
}

fn morph(action: MorphAction) -> Result<()> {
    match action {
        MorphAction::Build(BuildArgs { kind }) => match kind {
            BuildKind::Permutation { sigma, pi, out } => {
                let sigma = parse_permutation(&sigma)?;
                let pis = pi
                    .split(';')
                    .map(parse_permutation)
                    .collect::<Result<Vec<_>>>()?;
                let f = condgeo::permutation_morphism(&sigma, &pis)?;
                write_output(&out, &f.to_json())
            }
            BuildKind::Replication { k, m, z, w, out } => {
                let f = uniform_replication(k, m, z, w)?;
                write_output(&out, &f.to_json())
            }
            BuildKind::Uniformizer { numerators, denominator, size_cap, out } => {
                let raw = load_matrix(&numerators)?;
                let mut ints = Array2::zeros(raw.dim());
                for ((i, j), &v) in raw.indexed_iter() {
                    if v.fract() != 0.0 || v < 1.0 {
                        bail!("numerator at ({i},{j}) must be a positive integer, got {v}");
                    }
                    ints[(i, j)] = v as u64;
                }
                let model = RationalConditionalModel::new(ints, denominator)?;
                let f = rational_uniformizer(&model, size_cap)?;
                write_output(&out, &f.to_json())
            }
        },
        MorphAction::Apply(args) => {
            let f = MarkovMorphism::from_json(
                &fs::read_to_string(&args.morphism)
                    .with_context(|| format!("reading {}", args.morphism))?,
            )?;
            let model = load_model(&args.model, args.normalized)?;
            let image = f.apply(&model)?;
            write_output(&args.out, &write_matrix_csv(image.entries()))
        }
        MorphAction::Pushforward(args) => {
            let f = MarkovMorphism::from_json(
                &fs::read_to_string(&args.morphism)
                    .with_context(|| format!("reading {}", args.morphism))?,
            )?;
            let tangent = load_tangent(&args.tangent, args.normalized_context)?;
            let image = f.push_forward(&tangent)?;
            write_output(&args.out, &write_matrix_csv(image.coeffs()))
        }
    }
}

fn div(args: DivArgs) -> Result<()> {
    let r = load_weights(&args.r)?;
    let p = load_model(&args.p, args.normalized)?;
    let q = load_model(&args.q, args.normalized)?;
    if args.normalized {
        let cmp = divergence_vs_geodesic(&r, &p, &q)?;
        write_output(&args.out, &serde_json::to_string_pretty(&cmp)?)
    } else {
        let value = i_divergence(&r, &p, &q)?;
        write_output(&args.out, &json_number(value))
    }
}

fn geodesic(args: GeodesicArgs) -> Result<()> {
    let value = match (args.cone, args.sphere) {
        (Some(c), None) => {
            let p = load_model(&args.p, false)?;
            let q = load_model(&args.q, false)?;
            geodesic_distance_cone(&p, &q, c)?
        }
        (None, Some(lambda)) => {
            let p = load_model(&args.p, true)?;
            let q = load_model(&args.q, true)?;
            geodesic_distance_normalized(&p, &q, lambda)?
        }
        _ => bail!("pass exactly one of --cone <c> or --sphere <lambda>"),
    };
    write_output(&args.out, &json_number(value))
}

fn fit(args: FitArgs) -> Result<()> {
    let data =
        fs::read_to_string(&args.data).with_context(|| format!("reading {}", args.data))?;
    let features_text = fs::read_to_string(&args.features)
        .with_context(|| format!("reading {}", args.features))?;
    let features = FeatureSet::from_json(&features_text)?;
    let dataset = Dataset::parse_csv(&data, Some(features.k()), Some(features.m()))?;
    match args.kind {
        FitKind::Logistic => {
            let opts =
                FitOptions { tol: args.tol, max_iter: args.max_iter, ..FitOptions::default() };
            let fit = fit_logistic(&dataset, &features, &opts)?;
            let moments = moment_report(&fit.fitted.theta, &features, &dataset)?;
            let diagnostics = fit_diagnostics(&dataset, &fit.fitted)?;
            let doc = serde_json::json!({
                "kind": "logistic",
                "theta": fit.fitted.theta,
                "loglik": fit.loglik,
                "grad_norm": fit.grad_norm,
                "iterations": fit.iterations,
                "separable": fit.separable,
                "moments": moments,
                "model": rows_of(fit.fitted.model.entries()),
                "diagnostics": diagnostics,
            });
            write_output(&args.out, &serde_json::to_string_pretty(&doc)?)
        }
        FitKind::Boost => {
            let opts = BoostOptions { rounds: args.rounds, alpha_max: args.alpha_max };
            let fit = fit_adaboost(&dataset, &features, &opts)?;
            let diagnostics = fit_diagnostics(&dataset, &fit.fitted)?;
            let doc = serde_json::json!({
                "kind": "boost",
                "theta": fit.fitted.theta,
                "exp_loss": fit.losses.last(),
                "losses": fit.losses,
                "rounds": fit.rounds,
                "model": rows_of(fit.fitted.model.entries()),
                "diagnostics": diagnostics,
            });
            write_output(&args.out, &serde_json::to_string_pretty(&doc)?)
        }
    }
}

fn rows_of(matrix: &Array2<f64>) -> Vec<Vec<f64>> {
    matrix.rows().into_iter().map(|r| r.to_vec()).collect()
}
