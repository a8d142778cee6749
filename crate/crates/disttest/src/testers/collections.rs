//! Testing whether a collection of `m` distributions on `[n]` are all
//! identical.
//!
//! Samples arrive as pairs `(x, i)` where the collection index `i` is
//! uniform on `[m]` and `x` is drawn from the `i`-th distribution. The joint
//! of such pairs is a product distribution exactly when all members agree,
//! so the machinery mirrors the independence tester with two changes:
//! reference-side draws reuse a single sample and rerandomize its index
//! coordinate (the index marginal is uniform by construction), and only the
//! value axis gets flattened. The index axis keeps its raw coordinate, and
//! the parameters are not sorted: `n` is the domain size even when `m > n`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Error;
use crate::flattening::{FlattenedElement, SplitMap};
use crate::prob::draw_poisson;
use crate::rng::RngStream;
use crate::Result;

use super::{
    gate_and_score, run_with_retries, samples_per_basic_run, BasicOutcome, Branch, FullOutcome,
    TesterConfig,
};

/// One attempt of the basic collections tester on a fixed multiset of
/// exactly `100k` pairs `(x, i)` in `[n] x [m]`.
pub fn basic_test_collections(
    samples: &[(usize, usize)],
    n: usize,
    m: usize,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<BasicOutcome> {
    cfg.validate()?;
    let k = crate::prob::sample_size_collections(n, m, eps, delta, cfg.budget_constant)?;
    let required = samples_per_basic_run(k)?;
    if samples.len() != required {
        return Err(Error::invalid(format!(
            "basic_test_collections needs exactly 100k = {required} samples, got {}",
            samples.len()
        )));
    }

    let k_f = k as f64;
    let value_rate = (n as f64 / (100.0 * k_f)).min(0.01);

    let mut value_flatten: Vec<usize> = Vec::new();
    let mut pool: Vec<(usize, usize)> = Vec::with_capacity(samples.len());
    for &(x, i) in samples {
        if x >= n || i >= m {
            return Err(Error::invalid(format!(
                "sample ({x}, {i}) outside [{n}] x [{m}]"
            )));
        }
        if rng.random_bool(value_rate) {
            value_flatten.push(x);
        } else {
            pool.push((x, i));
        }
    }

    let mut outcome = BasicOutcome {
        branch: Branch::AbortFlattening,
        flatten_x: value_flatten.len(),
        flatten_y: 0,
        q_draws: 0,
        p_draws: 0,
        collisions: None,
        z: None,
    };
    if value_flatten.len() > 10 * n {
        return Ok(outcome);
    }

    pool.shuffle(rng);
    let q_draws = draw_poisson(2.0 * k_f, rng)?;
    let p_draws = draw_poisson(2.0 * k_f, rng)?;
    outcome.q_draws = q_draws;
    outcome.p_draws = p_draws;
    if q_draws + p_draws > pool.len() as u64 {
        outcome.branch = Branch::AbortSampleBudget;
        return Ok(outcome);
    }
    let (q_draws, p_draws) = (q_draws as usize, p_draws as usize);

    let q_raw = rerandomize_indices(&pool[..q_draws], m, rng);
    let p_raw = &pool[q_draws..q_draws + p_draws];

    let value_map = SplitMap::from_multiset(&value_flatten, n)?;
    let p_flat: Vec<(FlattenedElement, usize)> = p_raw
        .iter()
        .map(|&(x, i)| (value_map.split_sample(x, rng), i))
        .collect();
    let q_flat: Vec<(FlattenedElement, usize)> = q_raw
        .iter()
        .map(|&(x, i)| (value_map.split_sample(x, rng), i))
        .collect();

    let log_term = (1.0 / delta).ln();
    let nm = (n as f64) * (m as f64);
    let q_cap = cfg.abort_constant * (k_f / m as f64).max(k_f * k_f / nm);
    let slack = cfg.threshold_constant * log_term;
    let z_threshold = cfg.threshold_constant
        * (k_f.min(k_f * k_f / nm + k_f / m as f64) * log_term).sqrt();

    let (branch, counts, z) = gate_and_score(p_flat, q_flat, q_cap, slack, z_threshold, rng);
    outcome.branch = branch;
    outcome.collisions = Some(counts);
    outcome.z = z;
    Ok(outcome)
}

/// Reference-side draws reuse one sample each and replace its index with a
/// fresh uniform draw, emulating the product of the value marginal with the
/// uniform index distribution.
fn rerandomize_indices(
    pairs: &[(usize, usize)],
    m: usize,
    rng: &mut RngStream,
) -> Vec<(usize, usize)> {
    pairs
        .iter()
        .map(|&(x, _)| (x, rng.random_range(0..m)))
        .collect()
}

/// Full collections tester: draws `100k` pairs once, then reruns the basic
/// tester until it commits.
pub fn full_test_collections(
    sample: &mut dyn FnMut(&mut RngStream) -> (usize, usize),
    n: usize,
    m: usize,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<FullOutcome> {
    cfg.validate()?;
    let k = crate::prob::sample_size_collections(n, m, eps, delta, cfg.budget_constant)?;
    let total = samples_per_basic_run(k)?;
    let samples: Vec<(usize, usize)> = (0..total).map(|_| sample(rng)).collect();
    full_test_collections_on(&samples, n, m, eps, delta, cfg, rng)
}

/// The retrying driver over a caller-provided multiset of exactly `100k`
/// pairs.
pub fn full_test_collections_on(
    samples: &[(usize, usize)],
    n: usize,
    m: usize,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<FullOutcome> {
    cfg.validate()?;
    run_with_retries(
        cfg.max_retries,
        |r| basic_test_collections(samples, n, m, eps, delta, cfg, r),
        rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{Categorical, CategoricalSampler};
    use crate::testers::TestVerdict;

    fn cfg() -> TesterConfig {
        TesterConfig::new(1.0, 4.0, 8.0, 64).unwrap()
    }

    /// Sampler for the pair distribution of a collection: uniform index,
    /// value from that member.
    fn collection_sampler(
        members: Vec<Categorical>,
    ) -> impl FnMut(&mut RngStream) -> (usize, usize) {
        let samplers: Vec<CategoricalSampler> =
            members.iter().map(CategoricalSampler::new).collect();
        move |rng: &mut RngStream| {
            let i = rng.random_range(0..samplers.len());
            (samplers[i].draw(rng), i)
        }
    }

    #[test]
    fn rejects_wrong_sample_count() {
        let mut rng = RngStream::new(2, 0);
        assert!(basic_test_collections(&[(0, 0); 3], 4, 2, 0.5, 0.1, &cfg(), &mut rng).is_err());
    }

    #[test]
    fn identical_members_accepted_fixed_seed() {
        let members = vec![Categorical::uniform(12); 3];
        let mut sample = collection_sampler(members);
        let mut rng = RngStream::new(21, 0);
        let out =
            full_test_collections(&mut sample, 12, 3, 0.4, 0.2, &cfg(), &mut rng).unwrap();
        assert_eq!(out.verdict, TestVerdict::Yes);
    }

    #[test]
    fn disjoint_members_rejected_fixed_seed() {
        // Two members on disjoint halves of [10]: average distance from any
        // common distribution is at least 1/2.
        let a = Categorical::new(vec![0.2, 0.2, 0.2, 0.2, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Categorical::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.2, 0.2, 0.2, 0.2]).unwrap();
        let mut sample = collection_sampler(vec![a, b]);
        let mut rng = RngStream::new(22, 0);
        let out =
            full_test_collections(&mut sample, 10, 2, 0.3, 0.2, &cfg(), &mut rng).unwrap();
        assert_eq!(out.verdict, TestVerdict::No);
    }

    #[test]
    fn reference_side_indices_uniform_regardless_of_pairing() {
        // Degenerate pairing: every input pair carries index 3. The
        // rerandomized reference set must still have uniform indices.
        let m = 5usize;
        let pairs: Vec<(usize, usize)> = (0..10_000).map(|i| (i % 7, 3)).collect();
        let mut rng = RngStream::new(23, 0);
        let q_raw = rerandomize_indices(&pairs, m, &mut rng);
        assert!(q_raw.iter().all(|&(x, _)| x < 7));
        let mut counts = vec![0u64; m];
        for &(_, i) in &q_raw {
            counts[i] += 1;
        }
        let expect = pairs.len() as f64 / m as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        // Chi-square with 4 degrees of freedom: mean 4, sd sqrt(8).
        assert!(chi2 < 4.0 + 4.0 * 8f64.sqrt(), "chi2={chi2}");
    }
}
