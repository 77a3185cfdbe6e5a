//! Seeded random generation of models, tangents, partitions, morphisms and
//! metric specs for the certification suites.
//!
//! Every generator draws from a caller-supplied RNG; suites derive one RNG per
//! trial from `(seed, trial)` via a splitmix step, so results are independent
//! of trial evaluation order and reproducible from the single seed.
//!
//! Stochastic-matrix weights are sampled as random positive integers normalized
//! per row, which keeps them exact rationals with rows summing to exactly 1.

use ndarray::Array2;
use num::rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::metric::{MetricParams, ScalarField};
use crate::model::{PositiveConditionalModel, TangentVector};
use crate::morphism::{MarkovMorphism, Partition, PartitionStochastic};

/// Splitmix64 step; decorrelates per-trial seeds derived from one suite seed.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-trial RNG.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(trial)))
}

/// Random dimensions with k in `1..=kmax`, m in `2..=mmax`.
pub fn dims<R: Rng>(rng: &mut R, kmax: usize, mmax: usize) -> (usize, usize) {
    let k = rng.gen_range(1..=kmax.max(1));
    let m = rng.gen_range(2..=mmax.max(2));
    (k, m)
}

/// Positive model with entries uniform in [0.2, 3.0].
pub fn model<R: Rng>(rng: &mut R, k: usize, m: usize) -> PositiveConditionalModel {
    let entries = Array2::from_shape_fn((k, m), |_| rng.gen_range(0.2..3.0));
    PositiveConditionalModel::new(entries, false).expect("sampled entries are positive")
}

/// Row-normalized model.
pub fn normalized_model<R: Rng>(rng: &mut R, k: usize, m: usize) -> PositiveConditionalModel {
    model(rng, k, m).normalize_rows()
}

/// Unconstrained tangent with coefficients uniform in [-1, 1].
pub fn tangent<R: Rng>(rng: &mut R, k: usize, m: usize) -> TangentVector {
    let coeffs = Array2::from_shape_fn((k, m), |_| rng.gen_range(-1.0..1.0));
    TangentVector::new(coeffs, false).expect("sampled coefficients are finite")
}

/// Tangent in the normalized context: random coefficients with row means
/// subtracted.
pub fn zero_row_sum_tangent<R: Rng>(rng: &mut R, k: usize, m: usize) -> TangentVector {
    let coeffs = Array2::from_shape_fn((k, m), |_| rng.gen_range(-1.0..1.0));
    TangentVector::project_zero_row_sums(&coeffs).expect("projection yields zero row sums")
}

/// Random partition of `{0, …, n-1}` into exactly `blocks` nonempty blocks:
/// a shuffled seed element per block, the remainder assigned uniformly.
pub fn partition<R: Rng>(rng: &mut R, n: usize, blocks: usize) -> Partition {
    assert!(blocks >= 1 && blocks <= n, "need 1 <= blocks <= n");
    let mut elements: Vec<usize> = (0..n).collect();
    elements.shuffle(rng);
    let mut out: Vec<Vec<usize>> = (0..blocks).map(|i| vec![elements[i]]).collect();
    for &e in &elements[blocks..] {
        let target = rng.gen_range(0..blocks);
        out[target].push(e);
    }
    Partition::new(out, n).expect("constructed blocks cover the ground set")
}

/// Random partition-stochastic matrix: integer weights in 1..=1000 per support
/// cell, normalized per row into exact rationals.
pub fn partition_stochastic<R: Rng>(rng: &mut R, partition: Partition) -> PartitionStochastic {
    let weights = partition
        .blocks()
        .iter()
        .map(|block| {
            let raw: Vec<u64> = block.iter().map(|_| rng.gen_range(1..=1000u64)).collect();
            let total: u64 = raw.iter().sum();
            raw.into_iter()
                .map(|w| BigRational::new(w.into(), total.into()))
                .collect()
        })
        .collect();
    PartitionStochastic::new(partition, weights).expect("rows sum to 1 by construction")
}

/// Random congruent embedding from k×m models, with target dimensions drawn
/// from `k..=lmax` and `m..=nmax`.
pub fn morphism<R: Rng>(
    rng: &mut R,
    k: usize,
    m: usize,
    lmax: usize,
    nmax: usize,
) -> MarkovMorphism {
    let l = rng.gen_range(k..=lmax.max(k));
    let n = rng.gen_range(m..=nmax.max(m));
    let r_partition = partition(rng, l, k);
    let r = partition_stochastic(rng, r_partition);
    let q = (0..k)
        .map(|_| {
            let q_partition = partition(rng, n, m);
            partition_stochastic(rng, q_partition)
        })
        .collect();
    MarkovMorphism::new(r, q).expect("sampled dimensions agree")
}

fn scalar_field<R: Rng>(rng: &mut R, positive: bool) -> ScalarField {
    let coeff = if positive {
        rng.gen_range(0.1..2.0)
    } else {
        rng.gen_range(-1.0..1.0)
    };
    match rng.gen_range(0..3) {
        0 => ScalarField::Constant(coeff),
        1 => ScalarField::Reciprocal(coeff),
        _ => ScalarField::Power { coeff, exponent: rng.gen_range(-1.5..1.5) },
    }
}

/// Random metric spec from the invariant family; A and B unrestricted, C kept
/// positive.
pub fn metric_params<R: Rng>(rng: &mut R) -> MetricParams {
    MetricParams::new(
        scalar_field(rng, false),
        scalar_field(rng, false),
        scalar_field(rng, true),
    )
    .expect("sampled C coefficient is positive")
}

/// Random (A, B) pair around a fixed C; used by the normalized-reduction suite
/// where the A and B choices must be immaterial.
pub fn metric_params_with_c<R: Rng>(rng: &mut R, c: ScalarField) -> MetricParams {
    MetricParams::new(scalar_field(rng, false), scalar_field(rng, false), c)
        .expect("fixed C is positive")
}

/// Random binary-response dataset and ±1 weak-learner features for boosting
/// tests: `learners` feature columns over `k` explanatory values, `n`
/// observations.
pub fn boost_instance<R: Rng>(
    rng: &mut R,
    k: usize,
    learners: usize,
    n: usize,
) -> (crate::fitting::Dataset, crate::fitting::FeatureSet) {
    use ndarray::Array3;
    let observations: Vec<(usize, usize)> = (0..n)
        .map(|_| (rng.gen_range(0..k), rng.gen_range(0..2usize)))
        .collect();
    let dataset = crate::fitting::Dataset::new(observations, k, 2).expect("indices in range");
    let mut values = Array3::zeros((learners, k, 2));
    for f in 0..learners {
        for x in 0..k {
            let h: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            values[(f, x, 0)] = h;
            values[(f, x, 1)] = -h;
        }
    }
    let features = crate::fitting::FeatureSet::new(values).expect("values are ±1");
    (dataset, features)
}
