//! Generators for the information-theoretic hard instances.
//!
//! The lower-bound constructions randomize *measures* rather than
//! distributions: each draw is a [`PseudoDistribution`], a nonnegative
//! measure with total mass within a factor of 100 of one. Poissonized
//! sampling from a pseudo-distribution is the same as sampling a rescaled
//! number of Poissonized draws from its normalization, so testers can
//! consume these instances after [`PseudoDistribution::normalize_joint`] /
//! [`PseudoDistribution::normalize_categorical`].
//!
//! Two ensembles target independence testing. The first-term ensemble mixes
//! rare heavy rows (all cells `1/(km)`) into a light background; the
//! second-term ensemble conditions on no heavy row appearing, which by row
//! independence is realized exactly by never drawing the heavy branch. In
//! the completeness case the light background is flat; in the soundness case
//! every light cell flips a fair coin between `(1 -+ eps)/(nm)`. A separate
//! ensemble plays the same game on a line domain for the unequal-sample
//! problem.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::prob::{poissonized_histogram, Categorical, JointDistribution, SampleHistogram};
use crate::rng::RngStream;
use crate::Result;

/// Bounds on the total mass of a valid pseudo-distribution.
pub const PSEUDO_MASS_MIN: f64 = 0.01;
pub const PSEUDO_MASS_MAX: f64 = 100.0;

/// Domain shape of a pseudo-distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Line { n: usize },
    Grid { n: usize, m: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Line { n } => n,
            Shape::Grid { n, m } => n * m,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A nonnegative measure over a line or grid domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDistribution {
    shape: Shape,
    masses: Vec<f64>,
}

impl PseudoDistribution {
    pub fn new(shape: Shape, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != shape.len() {
            return Err(Error::invalid(format!(
                "mass vector has {} entries for a domain of {}",
                masses.len(),
                shape.len()
            )));
        }
        if masses.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::invalid("masses must be nonnegative and finite"));
        }
        Ok(PseudoDistribution { shape, masses })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Whether this measure qualifies as a pseudo-distribution: total mass
    /// within a factor of 100 of one (entries are nonnegative by
    /// construction).
    pub fn is_valid(&self) -> bool {
        let total = self.total_mass();
        (PSEUDO_MASS_MIN..=PSEUDO_MASS_MAX).contains(&total)
    }

    pub fn normalize_categorical(&self) -> Result<Categorical> {
        match self.shape {
            Shape::Line { .. } => Categorical::normalized(self.masses.clone()),
            Shape::Grid { .. } => Err(Error::invalid("grid measure; use normalize_joint")),
        }
    }

    pub fn normalize_joint(&self) -> Result<JointDistribution> {
        match self.shape {
            Shape::Grid { n, m } => JointDistribution::normalized(n, m, self.masses.clone()),
            Shape::Line { .. } => Err(Error::invalid("line measure; use normalize_categorical")),
        }
    }
}

/// Free-function form of [`PseudoDistribution::is_valid`].
pub fn is_pseudo_distribution(pd: &PseudoDistribution) -> bool {
    pd.is_valid()
}

/// Which side of the testing promise an ensemble draw realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Completeness,
    Soundness,
}

/// Which lower-bound term the ensemble targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Heavy rows appear with probability `k/n`.
    FirstTerm,
    /// Conditioned on no heavy rows: the light branch always fires.
    SecondTerm,
}

/// Parameters of an independence hard-instance ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub case: Case,
    pub variant: Variant,
    pub n: usize,
    pub m: usize,
    pub k: u64,
    pub eps: f64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.k == 0 {
            return Err(Error::invalid("ensemble parameters must be positive"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::invalid(format!(
                "ensemble eps must be in (0,1), got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// How to handle draws whose total mass falls outside the valid range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutOfRangePolicy {
    /// Redraw up to the given number of times; exceeding it is an error.
    Resample { max_tries: u32 },
    /// Fail immediately on an out-of-range draw.
    Strict,
}

impl Default for OutOfRangePolicy {
    fn default() -> Self {
        OutOfRangePolicy::Resample { max_tries: 1000 }
    }
}

/// A validated ensemble draw plus how many redraws it took.
#[derive(Debug, Clone)]
pub struct EnsembleDraw<T> {
    pub value: T,
    pub resamples: u32,
}

/// One raw draw of the independence hard ensemble; may fail
/// [`is_pseudo_distribution`].
pub fn gen_independence_hard_raw(spec: &EnsembleSpec, rng: &mut RngStream) -> PseudoDistribution {
    debug_assert!(spec.validate().is_ok());
    let EnsembleSpec {
        case,
        variant,
        n,
        m,
        k,
        eps,
    } = *spec;
    let heavy_rate = match variant {
        Variant::FirstTerm => (k as f64 / n as f64).min(1.0),
        Variant::SecondTerm => 0.0,
    };
    let heavy_mass = 1.0 / (k as f64 * m as f64);
    let light_mass = 1.0 / (n as f64 * m as f64);

    let mut masses = Vec::with_capacity(n * m);
    for _ in 0..n {
        // The heavy decision is coupled across a whole row.
        if heavy_rate > 0.0 && rng.random_bool(heavy_rate) {
            masses.extend(std::iter::repeat(heavy_mass).take(m));
            continue;
        }
        match case {
            Case::Completeness => masses.extend(std::iter::repeat(light_mass).take(m)),
            Case::Soundness => {
                for _ in 0..m {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    masses.push((1.0 + sign * eps) * light_mass);
                }
            }
        }
    }
    PseudoDistribution {
        shape: Shape::Grid { n, m },
        masses,
    }
}

/// Draws from the independence hard ensemble until the result is a valid
/// pseudo-distribution (or the policy gives up).
pub fn gen_independence_hard(
    spec: &EnsembleSpec,
    policy: OutOfRangePolicy,
    rng: &mut RngStream,
) -> Result<EnsembleDraw<PseudoDistribution>> {
    spec.validate()?;
    draw_with_policy(policy, |r| gen_independence_hard_raw(spec, r), |pd| pd.is_valid(), rng)
}

/// One raw draw of the unequal-sample hard ensemble: a `(p, q)` pair over
/// `[n]`.
///
/// Per bin, with probability `K/n` both measures place `1/K`; otherwise `p`
/// places `eps/n` and `q` places `eps/n` (completeness) or `0` / `2 eps / n`
/// by fair coin (soundness).
pub fn gen_unequal_hard_raw(
    n: usize,
    k: u64,
    big_k: u64,
    eps: f64,
    case: Case,
    rng: &mut RngStream,
) -> (PseudoDistribution, PseudoDistribution) {
    debug_assert!(big_k >= k && k >= 1);
    let heavy_rate = (big_k as f64 / n as f64).min(1.0);
    let heavy_mass = 1.0 / big_k as f64;
    let light_mass = eps / n as f64;

    let mut p = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.random_bool(heavy_rate) {
            p.push(heavy_mass);
            q.push(heavy_mass);
            continue;
        }
        p.push(light_mass);
        match case {
            Case::Completeness => q.push(light_mass),
            Case::Soundness => {
                if rng.random::<bool>() {
                    q.push(2.0 * light_mass);
                } else {
                    q.push(0.0);
                }
            }
        }
    }
    let shape = Shape::Line { n };
    (
        PseudoDistribution { shape, masses: p },
        PseudoDistribution { shape, masses: q },
    )
}

/// Draws `(p, q)` from the unequal-sample hard ensemble until both measures
/// are valid pseudo-distributions (or the policy gives up).
pub fn gen_unequal_hard(
    n: usize,
    k: u64,
    big_k: u64,
    eps: f64,
    case: Case,
    policy: OutOfRangePolicy,
    rng: &mut RngStream,
) -> Result<EnsembleDraw<(PseudoDistribution, PseudoDistribution)>> {
    if n == 0 || k == 0 {
        return Err(Error::invalid("ensemble parameters must be positive"));
    }
    if big_k < k {
        return Err(Error::invalid(format!("need K >= k, got K={big_k}, k={k}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("ensemble eps must be in (0,1), got {eps}")));
    }
    draw_with_policy(
        policy,
        |r| gen_unequal_hard_raw(n, k, big_k, eps, case, r),
        |(p, q)| p.is_valid() && q.is_valid(),
        rng,
    )
}

fn draw_with_policy<T>(
    policy: OutOfRangePolicy,
    mut draw: impl FnMut(&mut RngStream) -> T,
    valid: impl Fn(&T) -> bool,
    rng: &mut RngStream,
) -> Result<EnsembleDraw<T>> {
    let max_tries = match policy {
        OutOfRangePolicy::Strict => 1,
        OutOfRangePolicy::Resample { max_tries } => max_tries.max(1),
    };
    for attempt in 0..max_tries {
        let value = draw(rng);
        if valid(&value) {
            return Ok(EnsembleDraw {
                value,
                resamples: attempt,
            });
        }
        if matches!(policy, OutOfRangePolicy::Strict) {
            return Err(Error::invalid(
                "draw is not a pseudo-distribution (strict mode)",
            ));
        }
    }
    Err(Error::GeneratorExhausted {
        attempts: max_tries,
    })
}

/// Simulates sampling from the pair distribution
/// `r = 1/2 (p x {0}) + 1/2 (q x {1})` on `[n] x {0, 1}` using one source
/// sample per emitted sample: a fair coin picks the side, then the
/// corresponding distribution supplies the value.
///
/// `p = q` makes `r` exactly the product of its marginals, and
/// `d_TV(p, q) = d` puts `r` at distance `d/2` from that product, so a
/// closeness instance becomes an independence instance.
pub fn reduce_closeness_to_independence<'a>(
    sample_p: &'a mut dyn FnMut(&mut RngStream) -> usize,
    sample_q: &'a mut dyn FnMut(&mut RngStream) -> usize,
) -> impl FnMut(&mut RngStream) -> (usize, usize) + 'a {
    move |rng: &mut RngStream| {
        if rng.random::<bool>() {
            (sample_p(rng), 0)
        } else {
            (sample_q(rng), 1)
        }
    }
}

/// Poissonized samples from a pseudo-distribution: bin `i` receives an
/// independent `Poi(k * mass_i)` count.
pub fn sample_pseudo_poissonized(
    pd: &PseudoDistribution,
    k: f64,
    rng: &mut RngStream,
) -> Result<SampleHistogram> {
    poissonized_histogram(pd.masses(), k, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(stream: u64) -> RngStream {
        RngStream::new(0x4a6d, stream)
    }

    fn spec(case: Case, variant: Variant) -> EnsembleSpec {
        EnsembleSpec {
            case,
            variant,
            n: 100,
            m: 10,
            k: 20,
            eps: 0.5,
        }
    }

    #[test]
    fn pseudo_distribution_validity_ranges() {
        let shape = Shape::Line { n: 4 };
        let valid = PseudoDistribution::new(shape, vec![0.25; 4]).unwrap();
        assert!(is_pseudo_distribution(&valid));

        let zero = PseudoDistribution::new(shape, vec![0.0; 4]).unwrap();
        assert!(!is_pseudo_distribution(&zero));

        let heavy = PseudoDistribution::new(shape, vec![150.0 / 4.0; 4]).unwrap();
        assert!(!is_pseudo_distribution(&heavy));

        assert!(PseudoDistribution::new(shape, vec![-0.1, 0.5, 0.3, 0.3]).is_err());
    }

    #[test]
    fn second_term_completeness_is_uniform() {
        let s = spec(Case::Completeness, Variant::SecondTerm);
        let pd = gen_independence_hard_raw(&s, &mut rng(0));
        let expect = 1.0 / (s.n * s.m) as f64;
        assert!(pd.masses().iter().all(|&x| x == expect));
    }

    #[test]
    fn second_term_soundness_cells_balanced() {
        let s = spec(Case::Soundness, Variant::SecondTerm);
        let pd = gen_independence_hard_raw(&s, &mut rng(1));
        let light = 1.0 / (s.n * s.m) as f64;
        let hi = (1.0 + s.eps) * light;
        let lo = (1.0 - s.eps) * light;
        let mut heavy_cells = 0usize;
        for &x in pd.masses() {
            assert!(
                (x - hi).abs() < 1e-18 || (x - lo).abs() < 1e-18,
                "unexpected cell {x}"
            );
            if (x - hi).abs() < 1e-18 {
                heavy_cells += 1;
            }
        }
        let total = (s.n * s.m) as f64;
        let sigma = (total * 0.25).sqrt();
        assert!(
            (heavy_cells as f64 - total / 2.0).abs() <= 4.0 * sigma,
            "heavy cells {heavy_cells}"
        );
    }

    #[test]
    fn first_term_heavy_row_rate() {
        let s = EnsembleSpec {
            n: 10_000,
            m: 2,
            k: 500,
            eps: 0.5,
            case: Case::Completeness,
            variant: Variant::FirstTerm,
        };
        let pd = gen_independence_hard_raw(&s, &mut rng(2));
        let heavy_mass = 1.0 / (s.k as f64 * s.m as f64);
        let heavy_rows = (0..s.n)
            .filter(|i| pd.masses()[i * s.m] == heavy_mass)
            .count();
        // Rows are heavy independently with rate k/n = 0.05.
        let expect = s.n as f64 * 0.05;
        let sigma = (s.n as f64 * 0.05 * 0.95).sqrt();
        assert!(
            (heavy_rows as f64 - expect).abs() <= 4.0 * sigma,
            "heavy rows {heavy_rows}"
        );
        // Heavy rows are uniform across the whole row.
        for i in 0..s.n {
            let row = &pd.masses()[i * s.m..(i + 1) * s.m];
            if row[0] == heavy_mass {
                assert!(row.iter().all(|&x| x == heavy_mass));
            }
        }
    }

    #[test]
    fn unequal_completeness_sides_identical() {
        let (p, q) = gen_unequal_hard_raw(500, 20, 100, 0.4, Case::Completeness, &mut rng(3));
        assert_eq!(p.masses(), q.masses());
    }

    #[test]
    fn unequal_soundness_light_bins_balanced() {
        let n = 40_000usize;
        let big_k = 100u64;
        let eps = 0.4;
        let (p, q) = gen_unequal_hard_raw(n, 20, big_k, eps, Case::Soundness, &mut rng(4));
        let light = eps / n as f64;
        let mut zeros = 0usize;
        let mut doubles = 0usize;
        let mut heavies = 0usize;
        for (&pi, &qi) in p.masses().iter().zip(q.masses()) {
            if pi == 1.0 / big_k as f64 {
                assert_eq!(qi, pi);
                heavies += 1;
            } else {
                assert_eq!(pi, light);
                if qi == 0.0 {
                    zeros += 1;
                } else {
                    assert!((qi - 2.0 * light).abs() < 1e-18);
                    doubles += 1;
                }
            }
        }
        let lights = zeros + doubles;
        let sigma_half = (lights as f64 * 0.25).sqrt();
        assert!(
            (zeros as f64 - lights as f64 / 2.0).abs() <= 4.0 * sigma_half,
            "zeros={zeros} doubles={doubles}"
        );
        let heavy_rate = big_k as f64 / n as f64;
        let sigma_heavy = (n as f64 * heavy_rate * (1.0 - heavy_rate)).sqrt();
        assert!(
            (heavies as f64 - n as f64 * heavy_rate).abs() <= 4.0 * sigma_heavy,
            "heavies={heavies}"
        );
    }

    #[test]
    fn resample_policy_counts_redraws() {
        // An ensemble whose draws are usually invalid: tiny mass. eps/n with
        // n large and no heavy bins gives total eps << 1/100... but heavy
        // bins with rate K/n rescue most draws. Use strict mode on a spec
        // that is always valid to check resamples == 0.
        let s = spec(Case::Completeness, Variant::SecondTerm);
        let draw = gen_independence_hard(&s, OutOfRangePolicy::Strict, &mut rng(5)).unwrap();
        assert_eq!(draw.resamples, 0);
        assert!(draw.value.is_valid());
    }

    #[test]
    fn strict_policy_errors_on_invalid_draw() {
        // k = 200 n forces every row heavy with total mass n/k = 0.005,
        // below the validity floor on every draw.
        let s = EnsembleSpec {
            n: 10,
            m: 2,
            k: 2000,
            eps: 0.5,
            case: Case::Completeness,
            variant: Variant::FirstTerm,
        };
        assert!(gen_independence_hard(&s, OutOfRangePolicy::Strict, &mut rng(6)).is_err());
        let exhausted =
            gen_independence_hard(&s, OutOfRangePolicy::Resample { max_tries: 3 }, &mut rng(6));
        match exhausted {
            Err(Error::GeneratorExhausted { attempts }) => assert_eq!(attempts, 3),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn reduction_product_structure() {
        use crate::prob::{tv_distance_joint, CategoricalSampler};

        // p = q: the reduced pair distribution is the product p x uniform(2).
        let p = CategoricalSampler::new(&Categorical::new(vec![0.25, 0.75]).unwrap());
        let mut sp = |r: &mut RngStream| p.draw(r);
        let mut sq = |r: &mut RngStream| p.draw(r);
        let mut reduced = reduce_closeness_to_independence(&mut sp, &mut sq);
        let mut r = rng(7);
        let reps = 40_000usize;
        let mut counts = vec![0u64; 4];
        let mut side_one = 0u64;
        for _ in 0..reps {
            let (x, side) = reduced(&mut r);
            counts[x * 2 + side] += 1;
            side_one += side as u64;
        }
        // Side frequencies within 4 sigma of 1/2.
        let sigma = (reps as f64 * 0.25).sqrt();
        assert!((side_one as f64 - reps as f64 / 2.0).abs() <= 4.0 * sigma);
        // Cell frequencies near the product masses (0.125, 0.125, 0.375, 0.375).
        let empirical = JointDistribution::normalized(
            2,
            2,
            counts.iter().map(|&c| c as f64).collect(),
        )
        .unwrap();
        let target = JointDistribution::new(2, 2, vec![0.125, 0.125, 0.375, 0.375]).unwrap();
        assert!(tv_distance_joint(&empirical, &target).unwrap() < 0.02);
    }

    #[test]
    fn poissonized_sampling_from_pseudo() {
        let pd = PseudoDistribution::new(Shape::Line { n: 3 }, vec![0.0, 2.0, 0.5]).unwrap();
        let mut r = rng(8);
        let reps = 5_000u64;
        let mut sums = [0u64; 3];
        for _ in 0..reps {
            let h = sample_pseudo_poissonized(&pd, 4.0, &mut r).unwrap();
            assert_eq!(h.counts()[0], 0);
            for (s, &c) in sums.iter_mut().zip(h.counts()) {
                *s += c;
            }
        }
        let mean1 = sums[1] as f64 / reps as f64;
        let mean2 = sums[2] as f64 / reps as f64;
        assert!((mean1 - 8.0).abs() <= 4.0 * (8.0 / reps as f64).sqrt());
        assert!((mean2 - 2.0).abs() <= 4.0 * (2.0 / reps as f64).sqrt());
        // k = 0 gives the empty histogram.
        let h = sample_pseudo_poissonized(&pd, 0.0, &mut r).unwrap();
        assert_eq!(h.total(), 0);
    }
}
