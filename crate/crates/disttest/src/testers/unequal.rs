//! Closeness testing with unequal sample budgets: roughly `100(K + k)`
//! samples from `q` against `100k` from `p`, with `K >= k`.
//!
//! The plentiful side supplies the flattening multiset, both sides are split
//! through the same map, and the usual collision gates and statistic
//! threshold follow. Extra samples buy a strictly smaller `k` than the
//! equal-sample closeness bound once `K` reaches `n`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Error;
use crate::flattening::{FlattenedElement, SplitMap};
use crate::prob::{draw_poisson, sample_size_unequal, SampleBudget};
use crate::rng::RngStream;
use crate::Result;

use super::{
    gate_and_score, run_with_retries, samples_per_basic_run, BasicOutcome, Branch, FullOutcome,
    TesterConfig,
};

/// One attempt of the basic unequal-sample tester on fixed pools of exactly
/// `100(K + k)` q-samples and `100k` p-samples.
pub fn basic_test_unequal(
    pool_q: &[usize],
    pool_p: &[usize],
    n: usize,
    big_k: u64,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<BasicOutcome> {
    cfg.validate()?;
    let k = sample_size_unequal(n, big_k, eps, delta, cfg.budget_constant)?;
    let budget = SampleBudget::unequal(k, big_k)?;
    let need_q = samples_per_basic_run(budget.k() + big_k)?;
    let need_p = samples_per_basic_run(budget.k())?;
    if pool_q.len() != need_q || pool_p.len() != need_p {
        return Err(Error::invalid(format!(
            "basic_test_unequal needs exactly {need_q} q-samples and {need_p} p-samples, \
             got {} and {}",
            pool_q.len(),
            pool_p.len()
        )));
    }
    if let Some(&bad) = pool_q.iter().chain(pool_p).find(|&&x| x >= n) {
        return Err(Error::invalid(format!("sample {bad} outside [{n}]")));
    }

    let k_f = k as f64;
    let flatten_rate = (n as f64 / (100.0 * pool_q.len() as f64)).min(0.01);

    let mut flatten: Vec<usize> = Vec::new();
    let mut q_remaining: Vec<usize> = Vec::with_capacity(pool_q.len());
    for &x in pool_q {
        if rng.random_bool(flatten_rate) {
            flatten.push(x);
        } else {
            q_remaining.push(x);
        }
    }

    let mut outcome = BasicOutcome {
        branch: Branch::AbortFlattening,
        flatten_x: flatten.len(),
        flatten_y: 0,
        q_draws: 0,
        p_draws: 0,
        collisions: None,
        z: None,
    };
    if flatten.len() as u64 > n as u64 || flatten.len() as u64 > 50 * big_k {
        return Ok(outcome);
    }

    let q_draws = draw_poisson(2.0 * k_f, rng)?;
    let p_draws = draw_poisson(2.0 * k_f, rng)?;
    outcome.q_draws = q_draws;
    outcome.p_draws = p_draws;
    if q_draws > (q_remaining.len() as u64).min(100 * k) || p_draws > pool_p.len() as u64 {
        outcome.branch = Branch::AbortSampleBudget;
        return Ok(outcome);
    }

    // Draws without replacement via partial shuffle of each pool.
    let (q_raw, _) = q_remaining.partial_shuffle(rng, q_draws as usize);
    let mut p_pool = pool_p.to_vec();
    let (p_raw, _) = p_pool.partial_shuffle(rng, p_draws as usize);

    let map = SplitMap::from_multiset(&flatten, n)?;
    let p_flat: Vec<FlattenedElement> = p_raw.iter().map(|&x| map.split_sample(x, rng)).collect();
    let q_flat: Vec<FlattenedElement> = q_raw.iter().map(|&x| map.split_sample(x, rng)).collect();

    let log_term = (1.0 / delta).ln();
    let variance_scale = (k_f * k_f / big_k as f64).max(k_f * k_f / n as f64);
    let q_cap = cfg.abort_constant * variance_scale;
    let slack = cfg.threshold_constant * log_term;
    let z_threshold = cfg.threshold_constant
        * ((k_f.min(k_f * k_f / big_k as f64 + k_f * k_f / n as f64) + log_term) * log_term)
            .sqrt();

    let (branch, counts, z) = gate_and_score(p_flat, q_flat, q_cap, slack, z_threshold, rng);
    outcome.branch = branch;
    outcome.collisions = Some(counts);
    outcome.z = z;
    Ok(outcome)
}

/// Full unequal-sample tester: fills both pools once, then reruns the basic
/// tester until it commits.
pub fn full_test_unequal(
    sample_q: &mut dyn FnMut(&mut RngStream) -> usize,
    sample_p: &mut dyn FnMut(&mut RngStream) -> usize,
    n: usize,
    big_k: u64,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<FullOutcome> {
    cfg.validate()?;
    let k = sample_size_unequal(n, big_k, eps, delta, cfg.budget_constant)?;
    let budget = SampleBudget::unequal(k, big_k)?;
    let need_q = samples_per_basic_run(budget.k() + big_k)?;
    let need_p = samples_per_basic_run(budget.k())?;
    let pool_q: Vec<usize> = (0..need_q).map(|_| sample_q(rng)).collect();
    let pool_p: Vec<usize> = (0..need_p).map(|_| sample_p(rng)).collect();
    full_test_unequal_on(&pool_q, &pool_p, n, big_k, eps, delta, cfg, rng)
}

/// The retrying driver over caller-provided pools of exactly `100(K + k)`
/// q-samples and `100k` p-samples.
pub fn full_test_unequal_on(
    pool_q: &[usize],
    pool_p: &[usize],
    n: usize,
    big_k: u64,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<FullOutcome> {
    cfg.validate()?;
    run_with_retries(
        cfg.max_retries,
        |r| basic_test_unequal(pool_q, pool_p, n, big_k, eps, delta, cfg, r),
        rng,
    )
}
