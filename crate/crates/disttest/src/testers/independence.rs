//! Independence testing for joint distributions on `[n] x [m]` with
//! `n >= m`.
//!
//! The basic tester works on a fixed multiset of `100k` samples. It selects
//! flattening multisets for the rows and columns, withdraws differently
//! paired samples to emulate draws from the marginal product, splits both
//! sample sets into sub-bins, and thresholds the four-way statistic after
//! gating on collision counts. A full run retries the basic tester with
//! fresh randomness whenever it aborts.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Error;
use crate::flattening::{row_col_split_sample, FlattenedElement, SplitMap};
use crate::prob::{draw_poisson, sample_size_independence};
use crate::rng::RngStream;
use crate::Result;

use super::{
    gate_and_score, run_with_retries, samples_per_basic_run, BasicOutcome, Branch, FullOutcome,
    TesterConfig,
};

/// One attempt of the basic independence tester on a fixed multiset of
/// exactly `100k` samples (with `k` computed from `(n, m, eps, delta, C)`).
///
/// Requires `n >= m`; callers with `n < m` swap the axes first (the
/// full-test wrapper does this automatically).
pub fn basic_test_independence(
    samples: &[(usize, usize)],
    n: usize,
    m: usize,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<BasicOutcome> {
    cfg.validate()?;
    let k = sample_size_independence(n, m, eps, delta, cfg.budget_constant)?;
    let required = samples_per_basic_run(k)?;
    if samples.len() != required {
        return Err(Error::invalid(format!(
            "basic_test_independence needs exactly 100k = {required} samples, got {}",
            samples.len()
        )));
    }

    let k_f = k as f64;
    let row_rate = (n as f64 / (100.0 * k_f)).min(0.01);
    // k > m in every valid regime; the clamp only matters for degenerate
    // parameters the harness probes deliberately.
    let col_rate = (m as f64 / (100.0 * k_f)).min(1.0);

    // Select flattening multisets. A sample picked for both sets contributes
    // to both, but leaves the pool once.
    let mut row_flatten: Vec<usize> = Vec::new();
    let mut col_flatten: Vec<usize> = Vec::new();
    let mut pool: Vec<(usize, usize)> = Vec::with_capacity(samples.len());
    for &(x, y) in samples {
        if x >= n || y >= m {
            return Err(Error::invalid(format!(
                "sample ({x}, {y}) outside [{n}] x [{m}]"
            )));
        }
        let take_row = rng.random_bool(row_rate);
        let take_col = rng.random_bool(col_rate);
        if take_row {
            row_flatten.push(x);
        }
        if take_col {
            col_flatten.push(y);
        }
        if !take_row && !take_col {
            pool.push((x, y));
        }
    }

    let mut outcome = BasicOutcome {
        branch: Branch::AbortFlattening,
        flatten_x: row_flatten.len(),
        flatten_y: col_flatten.len(),
        q_draws: 0,
        p_draws: 0,
        collisions: None,
        z: None,
    };
    if row_flatten.len() > 10 * n || col_flatten.len() > 10 * m {
        return Ok(outcome);
    }

    pool.shuffle(rng);
    let q_draws = draw_poisson(2.0 * k_f, rng)?;
    let p_draws = draw_poisson(2.0 * k_f, rng)?;
    outcome.q_draws = q_draws;
    outcome.p_draws = p_draws;
    if 2 * q_draws + p_draws > pool.len() as u64 {
        outcome.branch = Branch::AbortSampleBudget;
        return Ok(outcome);
    }
    let (q_draws, p_draws) = (q_draws as usize, p_draws as usize);

    // Emulated product draws: cross-pair consecutive pool entries. The
    // tested-side set takes the next p_draws entries intact.
    let q_raw: Vec<(usize, usize)> = (0..q_draws)
        .map(|j| (pool[2 * j].0, pool[2 * j + 1].1))
        .collect();
    let p_raw = &pool[2 * q_draws..2 * q_draws + p_draws];

    let row_map = SplitMap::from_multiset(&row_flatten, n)?;
    let col_map = SplitMap::from_multiset(&col_flatten, m)?;
    let p_flat: Vec<(FlattenedElement, FlattenedElement)> = p_raw
        .iter()
        .map(|&s| row_col_split_sample(s, &row_map, &col_map, rng))
        .collect();
    let q_flat: Vec<(FlattenedElement, FlattenedElement)> = q_raw
        .iter()
        .map(|&s| row_col_split_sample(s, &row_map, &col_map, rng))
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

/// Full independence tester: draws `100k` samples once, then reruns the
/// basic tester until it commits to a verdict.
///
/// Accepts any axis order; when `n < m` the axes (and sample coordinates)
/// are swapped before testing, which does not change the property.
pub fn full_test_independence(
    sample: &mut dyn FnMut(&mut RngStream) -> (usize, usize),
    n: usize,
    m: usize,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<FullOutcome> {
    if n < m {
        let mut swapped = |r: &mut RngStream| {
            let (x, y) = sample(r);
            (y, x)
        };
        return full_sorted(&mut swapped, m, n, eps, delta, cfg, rng);
    }
    full_sorted(sample, n, m, eps, delta, cfg, rng)
}

fn full_sorted(
    sample: &mut dyn FnMut(&mut RngStream) -> (usize, usize),
    n: usize,
    m: usize,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<FullOutcome> {
    cfg.validate()?;
    let k = sample_size_independence(n, m, eps, delta, cfg.budget_constant)?;
    let total = samples_per_basic_run(k)?;
    let samples: Vec<(usize, usize)> = (0..total).map(|_| sample(rng)).collect();
    full_test_independence_on(&samples, n, m, eps, delta, cfg, rng)
}

/// The retrying driver over a caller-provided multiset of exactly `100k`
/// samples (requires `n >= m`).
pub fn full_test_independence_on(
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
        |r| basic_test_independence(samples, n, m, eps, delta, cfg, r),
        rng,
    )
}
