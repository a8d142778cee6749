//! Equal-sample closeness testing.
//!
//! Draws `4k` samples total, divides them multinomially into two histograms
//! per distribution, and thresholds the four-way statistic at
//! `C_thresh * sqrt(k ln(1/delta))`.

use crate::prob::{draw_multinomial, sample_size_closeness, Categorical};
use crate::rng::RngStream;
use crate::statistics::{FourWayHistogram, Slot};
use crate::Result;

use super::{samples_per_basic_run, TestVerdict, TesterConfig};

/// Verdict plus the observations behind it.
#[derive(Debug, Clone)]
pub struct ClosenessOutcome {
    pub verdict: TestVerdict,
    /// The per-distribution budget computed from `(n, eps, delta, C)`.
    pub k: u64,
    pub z: i64,
    pub threshold: f64,
}

/// Tests `p = q` versus `d_TV(p, q) >= eps` for distributions on `[n]`,
/// given sampling access to both.
///
/// Draws `Multinom(4k, (1/4, 1/4, 1/4, 1/4))` many samples into the four
/// histograms and answers YES when the statistic is at most
/// `C_thresh * sqrt(k ln(1/delta))`. At calibrated constants the verdict is
/// wrong with probability at most `delta` whenever `p = q` or
/// `d_TV(p, q) >= eps`.
pub fn test_closeness(
    sample_p: &mut dyn FnMut(&mut RngStream) -> usize,
    sample_q: &mut dyn FnMut(&mut RngStream) -> usize,
    n: usize,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<ClosenessOutcome> {
    cfg.validate()?;
    let k = sample_size_closeness(n, eps, delta, cfg.budget_constant)?;
    // Fails early if 4k cannot be materialized.
    let _ = samples_per_basic_run(4 * k)?;

    let shares = draw_multinomial(4 * k, &Categorical::uniform(4), rng);
    let mut histogram: FourWayHistogram<usize> = FourWayHistogram::new();
    for _ in 0..shares[0] {
        let x = sample_p(rng);
        histogram.add(x, Slot::P0);
    }
    for _ in 0..shares[1] {
        let x = sample_p(rng);
        histogram.add(x, Slot::P1);
    }
    for _ in 0..shares[2] {
        let y = sample_q(rng);
        histogram.add(y, Slot::Q0);
    }
    for _ in 0..shares[3] {
        let y = sample_q(rng);
        histogram.add(y, Slot::Q1);
    }

    Ok(score(histogram, k, delta, cfg))
}

/// [`test_closeness`] over pre-drawn sample pools instead of live samplers.
///
/// The multinomial split decides how many samples each histogram takes from
/// the front of each pool; pools too short for the drawn split are an
/// invalid-argument error.
pub fn test_closeness_on(
    samples_p: &[usize],
    samples_q: &[usize],
    n: usize,
    eps: f64,
    delta: f64,
    cfg: &TesterConfig,
    rng: &mut RngStream,
) -> Result<ClosenessOutcome> {
    cfg.validate()?;
    let k = sample_size_closeness(n, eps, delta, cfg.budget_constant)?;
    let _ = samples_per_basic_run(4 * k)?;

    let shares = draw_multinomial(4 * k, &Categorical::uniform(4), rng);
    let need_p = (shares[0] + shares[1]) as usize;
    let need_q = (shares[2] + shares[3]) as usize;
    if samples_p.len() < need_p || samples_q.len() < need_q {
        return Err(crate::error::Error::invalid(format!(
            "closeness run drew a split needing {need_p} p-samples and {need_q} q-samples, \
             but pools hold {} and {}",
            samples_p.len(),
            samples_q.len()
        )));
    }

    let mut histogram: FourWayHistogram<usize> = FourWayHistogram::new();
    histogram.add_all(samples_p[..shares[0] as usize].iter().copied(), Slot::P0);
    histogram.add_all(
        samples_p[shares[0] as usize..need_p].iter().copied(),
        Slot::P1,
    );
    histogram.add_all(samples_q[..shares[2] as usize].iter().copied(), Slot::Q0);
    histogram.add_all(
        samples_q[shares[2] as usize..need_q].iter().copied(),
        Slot::Q1,
    );

    Ok(score(histogram, k, delta, cfg))
}

fn score(
    histogram: FourWayHistogram<usize>,
    k: u64,
    delta: f64,
    cfg: &TesterConfig,
) -> ClosenessOutcome {
    let z = histogram.z_statistic();
    let threshold = cfg.threshold_constant * (k as f64 * (1.0 / delta).ln()).sqrt();
    let verdict = if z as f64 <= threshold {
        TestVerdict::Yes
    } else {
        TestVerdict::No
    };
    ClosenessOutcome {
        verdict,
        k,
        z,
        threshold,
    }
}
