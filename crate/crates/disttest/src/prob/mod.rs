//! Probability primitives: distribution types, distances, samplers, and the
//! sample-size formulas used by the testers.

mod budget;
mod fileio;
mod sample;

pub use budget::{
    sample_size_closeness, sample_size_collections, sample_size_independence, sample_size_unequal,
};
pub use fileio::{
    categorical_from_json, categorical_to_json, joint_from_json, joint_to_json, MASS_FILE_TOLERANCE,
};
pub use sample::{
    draw_multinomial, draw_poisson, poissonized_histogram, CategoricalSampler, JointSampler,
};

use crate::error::Error;
use crate::Result;

/// Tolerance on total mass when validating an in-memory probability vector.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A probability distribution on `{0, ..., n-1}` given by an explicit mass
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    /// Validates nonnegativity and that the total mass is within
    /// [`MASS_TOLERANCE`] of one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_mass_vector(&probs, MASS_TOLERANCE)?;
        Ok(Categorical { probs })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "domain must be nonempty");
        Categorical {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        assert!(at < n, "point mass outside domain");
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Categorical { probs }
    }

    /// Normalizes an arbitrary nonnegative vector to a distribution.
    pub fn normalized(mut masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::invalid("cannot normalize: total mass not positive"));
        }
        if masses.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::invalid("cannot normalize: negative or non-finite entry"));
        }
        for x in &mut masses {
            *x /= total;
        }
        Ok(Categorical { probs: masses })
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// A joint distribution on `{0,...,n-1} x {0,...,m-1}`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    n: usize,
    m: usize,
    probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(n: usize, m: usize, probs: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::invalid("joint domain must be nonempty"));
        }
        if probs.len() != n * m {
            return Err(Error::invalid(format!(
                "joint mass vector has {} entries, expected {}x{}",
                probs.len(),
                n,
                m
            )));
        }
        validate_mass_vector(&probs, MASS_TOLERANCE)?;
        Ok(JointDistribution { n, m, probs })
    }

    pub fn uniform(n: usize, m: usize) -> Self {
        JointDistribution {
            n,
            m,
            probs: vec![1.0 / (n * m) as f64; n * m],
        }
    }

    /// Builds the product distribution `u x v`.
    pub fn product(u: &Categorical, v: &Categorical) -> Self {
        let mut probs = Vec::with_capacity(u.n() * v.n());
        for &a in u.probs() {
            for &b in v.probs() {
                probs.push(a * b);
            }
        }
        JointDistribution {
            n: u.n(),
            m: v.n(),
            probs,
        }
    }

    pub fn normalized(n: usize, m: usize, masses: Vec<f64>) -> Result<Self> {
        let flat = Categorical::normalized(masses)?;
        JointDistribution::new(n, m, flat.probs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.m + j]
    }

    /// Row-major flat view of the grid.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Row and column marginals.
    pub fn marginals(&self) -> (Categorical, Categorical) {
        let mut rows = vec![0.0; self.n];
        let mut cols = vec![0.0; self.m];
        for i in 0..self.n {
            for j in 0..self.m {
                let p = self.prob(i, j);
                rows[i] += p;
                cols[j] += p;
            }
        }
        // Marginal sums inherit the joint's mass tolerance.
        (Categorical { probs: rows }, Categorical { probs: cols })
    }

    /// The product of the two marginals, as a joint distribution.
    pub fn product_of_marginals(&self) -> JointDistribution {
        let (rows, cols) = self.marginals();
        JointDistribution::product(&rows, &cols)
    }
}

/// Total variation distance `(1/2) sum |p_i - q_i|` between two distributions
/// on the same domain.
pub fn tv_distance(p: &Categorical, q: &Categorical) -> Result<f64> {
    if p.n() != q.n() {
        return Err(Error::invalid(format!(
            "tv_distance: domain sizes differ ({} vs {})",
            p.n(),
            q.n()
        )));
    }
    Ok(l1_half(p.probs(), q.probs()))
}

/// Total variation distance between joints of identical shape.
pub fn tv_distance_joint(p: &JointDistribution, q: &JointDistribution) -> Result<f64> {
    if p.n() != q.n() || p.m() != q.m() {
        return Err(Error::invalid(format!(
            "tv_distance: grid shapes differ ({}x{} vs {}x{})",
            p.n(),
            p.m(),
            q.n(),
            q.m()
        )));
    }
    Ok(l1_half(p.probs(), q.probs()))
}

fn l1_half(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p
        .iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// KL divergence `sum_{p_i > 0} p_i ln(p_i / q_i)`, or `+inf` when `p` puts
/// mass where `q` does not.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64> {
    if p.n() != q.n() {
        return Err(Error::invalid(format!(
            "kl_divergence: domain sizes differ ({} vs {})",
            p.n(),
            q.n()
        )));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
        if pi > 0.0 {
            if qi == 0.0 {
                return Ok(f64::INFINITY);
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total)
}

/// A histogram of sample counts over a fixed domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleHistogram {
    counts: Vec<u64>,
}

impl SampleHistogram {
    pub fn new(counts: Vec<u64>) -> Self {
        SampleHistogram { counts }
    }

    pub fn zeros(domain: usize) -> Self {
        SampleHistogram {
            counts: vec![0; domain],
        }
    }

    /// Tallies domain elements into a histogram.
    pub fn from_samples(domain: usize, samples: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = vec![0u64; domain];
        for s in samples {
            counts[s] += 1;
        }
        SampleHistogram { counts }
    }

    pub fn domain_size(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// The per-side sample budget of a tester.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleBudget {
    k: u64,
    big_k: Option<u64>,
}

impl SampleBudget {
    pub fn equal(k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("sample budget must be positive"));
        }
        Ok(SampleBudget { k, big_k: None })
    }

    /// Budget with a larger side `big_k >= k`.
    pub fn unequal(k: u64, big_k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("sample budget must be positive"));
        }
        if big_k < k {
            return Err(Error::invalid(format!(
                "larger-side budget K={big_k} below k={k}"
            )));
        }
        Ok(SampleBudget {
            k,
            big_k: Some(big_k),
        })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn big_k(&self) -> Option<u64> {
        self.big_k
    }
}

fn validate_mass_vector(probs: &[f64], tolerance: f64) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::invalid("mass vector must be nonempty"));
    }
    let mut total = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::invalid(format!("entry {i} is not finite")));
        }
        if p < 0.0 {
            return Err(Error::invalid(format!("entry {i} is negative ({p})")));
        }
        total += p;
    }
    if (total - 1.0).abs() > tolerance {
        return Err(Error::invalid(format!(
            "total mass {total} outside 1 +/- {tolerance:e}"
        )));
    }
    Ok(())
}
