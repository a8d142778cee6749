//! Exact samplers. All of them are deterministic functions of their inputs
//! and the state of the provided [`RngStream`].

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::{Categorical, JointDistribution, SampleHistogram};
use crate::error::Error;
use crate::math::ln_factorial;
use crate::rng::RngStream;
use crate::Result;

/// Inversion sampler for a fixed categorical distribution.
///
/// Precomputes the cumulative mass function once; each draw costs one uniform
/// variate plus a binary search. Zero-probability bins are never produced.
#[derive(Debug, Clone)]
pub struct CategoricalSampler {
    cumulative: Vec<f64>,
}

impl CategoricalSampler {
    pub fn new(dist: &Categorical) -> Self {
        Self::from_masses(dist.probs())
    }

    /// Builds a sampler from any nonnegative mass vector with positive total
    /// (masses are normalized implicitly).
    pub fn from_masses(masses: &[f64]) -> Self {
        let total: f64 = masses.iter().sum();
        let mut cumulative = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for &m in masses {
            acc += m / total;
            cumulative.push(acc);
        }
        // Pin the last entry so a uniform draw in [0,1) always lands.
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        CategoricalSampler { cumulative }
    }

    pub fn draw(&self, rng: &mut RngStream) -> usize {
        let u: f64 = rng.random();
        self.cumulative.partition_point(|&c| c <= u)
    }
}

/// Sampler for a joint distribution, producing `(row, col)` pairs.
#[derive(Debug, Clone)]
pub struct JointSampler {
    flat: CategoricalSampler,
    m: usize,
}

impl JointSampler {
    pub fn new(dist: &JointDistribution) -> Self {
        JointSampler {
            flat: CategoricalSampler::from_masses(dist.probs()),
            m: dist.m(),
        }
    }

    pub fn draw(&self, rng: &mut RngStream) -> (usize, usize) {
        let idx = self.flat.draw(rng);
        (idx / self.m, idx % self.m)
    }
}

/// Draws a Poisson(lambda) variate.
///
/// Uses CDF inversion for small rates and Hormann's transformed rejection
/// with squeeze (PTRS) for large ones; both produce the exact distribution.
pub fn draw_poisson(lambda: f64, rng: &mut RngStream) -> Result<u64> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid(format!(
            "poisson rate must be finite and nonnegative, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    if lambda < 10.0 {
        Ok(poisson_inversion(lambda, rng))
    } else {
        Ok(poisson_ptrs(lambda, rng))
    }
}

fn poisson_inversion(lambda: f64, rng: &mut RngStream) -> u64 {
    let u: f64 = rng.random();
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    let mut k = 0u64;
    // For lambda < 10 the loop terminates within a few dozen iterations; the
    // cap guards against u falling into the last ulp of the tail.
    while u > cdf && k < 1100 {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
    }
    k
}

fn poisson_ptrs(lambda: f64, rng: &mut RngStream) -> u64 {
    let log_lambda = lambda.ln();
    let b = 0.931 + 2.53 * lambda.sqrt();
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let u_shifted = 0.5 - u.abs();
        let k = ((2.0 * a / u_shifted + b) * u + lambda + 0.43).floor();
        if u_shifted >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (u_shifted < 0.013 && v > u_shifted) {
            continue;
        }
        let accept = (v * inv_alpha / (a / (u_shifted * u_shifted) + b)).ln();
        if accept <= k * log_lambda - lambda - ln_factorial(k as u64) {
            return k as u64;
        }
    }
}

/// Draws jointly multinomial counts by the conditional-binomial
/// decomposition: bin by bin, `Binom(remaining, p_i / remaining mass)`.
pub fn draw_multinomial(total: u64, weights: &Categorical, rng: &mut RngStream) -> Vec<u64> {
    let probs = weights.probs();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = total;
    let mut mass_left = 1.0;
    for i in 0..probs.len() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let p = (probs[i] / mass_left).clamp(0.0, 1.0);
        let c = if p >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, p)
                .expect("probability clamped to [0,1]")
                .sample(rng)
        };
        counts[i] = c;
        remaining -= c;
        mass_left -= probs[i];
    }
    counts
}

/// Poissonized sampling from a nonnegative measure: bin `i` receives an
/// independent `Poi(k * mass_i)` count.
///
/// Accepts a raw mass slice so distributions and unnormalized
/// pseudo-distributions share the same entry point.
pub fn poissonized_histogram(masses: &[f64], k: f64, rng: &mut RngStream) -> Result<SampleHistogram> {
    let mut counts = Vec::with_capacity(masses.len());
    for &mass in masses {
        counts.push(draw_poisson(k * mass, rng)?);
    }
    Ok(SampleHistogram::new(counts))
}
