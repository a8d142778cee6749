//! Independent reference computations.
//!
//! Everything here exists to check the rest of the crate from the outside:
//! exact expectations by truncated summation, Monte Carlo estimates with
//! standard errors, and brute-force distances. The statistic is deliberately
//! recomputed from scratch in this module -- sharing the tester's own Z code
//! would make the cross-checks circular.

use crate::error::Error;
use crate::math::KahanSum;
use crate::prob::{
    draw_poisson, kl_divergence, tv_distance, tv_distance_joint, Categorical, JointDistribution,
};
use crate::rng::RngStream;
use crate::testers::TestVerdict;
use crate::Result;

/// Tail mass below which a Poisson truncation point is considered exact.
pub const POISSON_TAIL_LIMIT: f64 = 1e-12;

/// A Monte Carlo point estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub std_error: f64,
    pub replications: u64,
}

impl EstimateWithCI {
    /// Whether `value` lies within `sigmas` standard errors of the estimate.
    pub fn covers(&self, value: f64, sigmas: f64) -> bool {
        (self.estimate - value).abs() <= sigmas * self.std_error
    }
}

/// Exact total variation distance between a joint distribution and the
/// product of its own marginals.
pub fn distance_to_marginal_product(p: &JointDistribution) -> f64 {
    tv_distance_joint(p, &p.product_of_marginals())
        .expect("product of marginals always shares the shape")
}

/// Smallest truncation point whose Poisson tail mass is below
/// [`POISSON_TAIL_LIMIT`], found by direct pmf accumulation.
pub fn poisson_truncation_point(lambda: f64) -> Result<usize> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid(format!(
            "poisson rate must be finite and nonnegative, got {lambda}"
        )));
    }
    let pmf = poisson_pmf_table(lambda, usize::MAX)?;
    Ok(pmf.len() - 1)
}

/// Poisson pmf values `0..=cap`, stopping early once the remaining tail is
/// below [`POISSON_TAIL_LIMIT`]. Errors if `cap` truncates a heavier tail.
fn poisson_pmf_table(lambda: f64, cap: usize) -> Result<Vec<f64>> {
    let mut pmf = (-lambda).exp();
    if pmf == 0.0 {
        return Err(Error::invalid(format!(
            "poisson rate {lambda} too large for direct pmf accumulation"
        )));
    }
    let mut table = vec![pmf];
    let mut cum = KahanSum::new();
    cum.add(pmf);
    let mut i = 0usize;
    while 1.0 - cum.value() >= POISSON_TAIL_LIMIT {
        if i >= cap {
            return Err(Error::TruncationTooSmall {
                truncation: cap,
                tail: 1.0 - cum.value(),
                limit: POISSON_TAIL_LIMIT,
            });
        }
        i += 1;
        pmf *= lambda / i as f64;
        cum.add(pmf);
        table.push(pmf);
    }
    Ok(table)
}

/// Exact per-element expectation of the statistic for one bin:
/// `E[Z_i] = 2 E|X - Y| - E|X - X'| - E|Y - Y'|` with `X, X' ~ Poi(a)` and
/// `Y, Y' ~ Poi(b)`, evaluated by truncated double summation over the pmfs.
///
/// The caller supplies the truncation point; it must cover the tail of the
/// larger rate to below [`POISSON_TAIL_LIMIT`] or the call fails with a
/// tail-bound error ([`poisson_truncation_point`] computes a safe value).
pub fn exact_expected_zi(a: f64, b: f64, truncation: usize) -> Result<f64> {
    if a < 0.0 || b < 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid("rates must be nonnegative and finite"));
    }
    let pmf_a = poisson_pmf_table(a, truncation)?;
    let pmf_b = poisson_pmf_table(b, truncation)?;
    let cross = expected_abs_difference(&pmf_a, &pmf_b);
    let within_a = expected_abs_difference(&pmf_a, &pmf_a);
    let within_b = expected_abs_difference(&pmf_b, &pmf_b);
    Ok(2.0 * cross - within_a - within_b)
}

/// `E|A - B|` for independent variables with the given pmf tables.
fn expected_abs_difference(pmf_a: &[f64], pmf_b: &[f64]) -> f64 {
    let mut sum = KahanSum::new();
    for (x, &pa) in pmf_a.iter().enumerate() {
        for (y, &pb) in pmf_b.iter().enumerate() {
            sum.add(pa * pb * x.abs_diff(y) as f64);
        }
    }
    sum.value()
}

/// Monte Carlo estimate of `E[Z]` for the Poissonized statistic: all four
/// histograms have independent `Poi(k p_i)` / `Poi(k q_i)` bins, and the
/// statistic is recomputed locally per replication.
pub fn monte_carlo_mean_z(
    p: &Categorical,
    q: &Categorical,
    k: f64,
    reps: u64,
    rng: &mut RngStream,
) -> Result<EstimateWithCI> {
    if p.n() != q.n() {
        return Err(Error::invalid("monte_carlo_mean_z: domain sizes differ"));
    }
    if reps < 2 {
        return Err(Error::invalid("need at least 2 replications"));
    }
    // Per-replication values land in a fixed-order buffer so the reduction
    // is independent of evaluation order.
    let mut values = Vec::with_capacity(reps as usize);
    for rep in 0..reps {
        let mut r = rng.substream(rep);
        let mut z = 0i64;
        for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
            let x = draw_poisson(k * pi, &mut r)? as i64;
            let x2 = draw_poisson(k * pi, &mut r)? as i64;
            let y = draw_poisson(k * qi, &mut r)? as i64;
            let y2 = draw_poisson(k * qi, &mut r)? as i64;
            z += (x - y).abs() + (x2 - y2).abs() - (x - x2).abs() - (y - y2).abs();
        }
        values.push(z as f64);
    }
    Ok(mean_with_stderr(&values))
}

fn mean_with_stderr(values: &[f64]) -> EstimateWithCI {
    let n = values.len() as f64;
    let mut sum = KahanSum::new();
    for &v in values {
        sum.add(v);
    }
    let mean = sum.value() / n;
    let mut sq = KahanSum::new();
    for &v in values {
        sq.add((v - mean) * (v - mean));
    }
    let variance = sq.value() / (n - 1.0);
    EstimateWithCI {
        estimate: mean,
        std_error: (variance / n).sqrt(),
        replications: values.len() as u64,
    }
}

/// Ground-truth label for an error-rate measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    ShouldYes,
    ShouldNo,
}

impl Truth {
    pub fn expected(self) -> TestVerdict {
        match self {
            Truth::ShouldYes => TestVerdict::Yes,
            Truth::ShouldNo => TestVerdict::No,
        }
    }
}

/// Error-rate measurement over completed trials, with tester failures
/// tallied separately.
#[derive(Debug, Clone)]
pub struct ErrorRateReport {
    pub rate: EstimateWithCI,
    pub errors: u64,
    pub completed: u64,
    pub failures: u64,
}

/// Runs a tester thunk `reps` times on independent substreams of `rng` and
/// reports the fraction of completed verdicts contradicting `truth` with its
/// binomial standard error. Trials that return an error are excluded from
/// the rate and counted in `failures`.
pub fn empirical_error_rate(
    mut tester: impl FnMut(&mut RngStream) -> Result<TestVerdict>,
    truth: Truth,
    reps: u64,
    rng: &mut RngStream,
) -> Result<ErrorRateReport> {
    if reps < 2 {
        return Err(Error::invalid("need at least 2 replications"));
    }
    let mut errors = 0u64;
    let mut completed = 0u64;
    let mut failures = 0u64;
    for rep in 0..reps {
        let mut r = rng.substream(rep);
        match tester(&mut r) {
            Ok(verdict) => {
                completed += 1;
                if verdict != truth.expected() {
                    errors += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let rate = if completed > 0 {
        let p = errors as f64 / completed as f64;
        EstimateWithCI {
            estimate: p,
            std_error: (p * (1.0 - p) / completed as f64).sqrt(),
            replications: completed,
        }
    } else {
        EstimateWithCI {
            estimate: 0.0,
            std_error: 0.0,
            replications: 0,
        }
    };
    Ok(ErrorRateReport {
        rate,
        errors,
        completed,
        failures,
    })
}

/// Lower bound on the average distance from a collection to its best common
/// distribution: `min_q (1/m) sum_i d_TV(p_i, q)`.
///
/// The coordinate-wise (lower) median minimizes `sum_i |p_i(x) - q(x)|`
/// over all real vectors, a superset of the distributions, so the average
/// half-l1 distance to the median vector is a valid lower bound on the
/// constrained optimum.
pub fn collection_median_lower_bound(members: &[Categorical]) -> Result<f64> {
    let m = members.len();
    if m == 0 {
        return Err(Error::invalid("collection must be nonempty"));
    }
    let n = members[0].n();
    if members.iter().any(|p| p.n() != n) {
        return Err(Error::invalid("collection members have mixed domains"));
    }
    let mut total = KahanSum::new();
    let mut column = vec![0.0f64; m];
    for x in 0..n {
        for (slot, p) in column.iter_mut().zip(members) {
            *slot = p.probs()[x];
        }
        column.sort_by(|a, b| a.partial_cmp(b).expect("probabilities are finite"));
        let median = column[(m - 1) / 2];
        for &v in &column {
            total.add((v - median).abs());
        }
    }
    Ok(0.5 * total.value() / m as f64)
}

/// Checks the distance/divergence consistency bound
/// `d_TV(p, q) <= 1 - exp(-D(p||q)) / 2` (with slack 1e-12). An infinite
/// divergence makes the bound vacuous, hence true.
pub fn kl_tv_consistency_check(p: &Categorical, q: &Categorical) -> Result<bool> {
    let tv = tv_distance(p, q)?;
    let kl = kl_divergence(p, q)?;
    if kl.is_infinite() {
        return Ok(true);
    }
    Ok(tv <= 1.0 - 0.5 * (-kl).exp() + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rng(stream: u64) -> RngStream {
        RngStream::new(0x0eac1e, stream)
    }

    #[test]
    fn truncation_point_covers_tail() {
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let t = poisson_truncation_point(lambda).unwrap();
            // The reported point must make exact_expected_zi accept.
            assert!(exact_expected_zi(lambda, lambda, t).is_ok());
            // One bin fewer must fail the tail check for these rates.
            assert!(exact_expected_zi(lambda, lambda, t.saturating_sub(1)).is_err());
        }
    }

    #[test]
    fn equal_rates_have_zero_gap() {
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let t = poisson_truncation_point(lambda).unwrap();
            let z = exact_expected_zi(lambda, lambda, t).unwrap();
            assert!(z.abs() < 1e-10, "lambda={lambda}: {z}");
        }
    }

    #[test]
    fn zero_against_positive_rate() {
        // b = 0 collapses the cross term to 2 E[Poi(a)] = 2a and the
        // within-b term to zero: E[Z_i] = 2a - E|X - X'|.
        let t = poisson_truncation_point(2.0).unwrap();
        let z = exact_expected_zi(2.0, 0.0, t).unwrap();
        let within = 4.0 - z; // E|X - X'| for X, X' ~ Poi(2)
        assert!(within > 0.0 && within < 4.0);
        // Regression pin from the truncated-sum evaluation (tail < 1e-12).
        assert!((z - 2.456_988_957_116_478).abs() < 1e-9, "z={z}");
    }

    #[test]
    fn gap_nonnegative_on_grid() {
        for &a in &[0.0f64, 0.3, 1.0, 3.0, 10.0] {
            for &b in &[0.0f64, 0.3, 1.0, 3.0, 10.0] {
                let t = poisson_truncation_point(a.max(b)).unwrap();
                let z = exact_expected_zi(a, b, t).unwrap();
                assert!(z >= -1e-10, "a={a} b={b}: {z}");
            }
        }
    }

    #[test]
    fn monte_carlo_matches_exact_on_small_instance() {
        let p = Categorical::new(vec![0.5, 0.3, 0.2]).unwrap();
        let q = Categorical::new(vec![0.2, 0.3, 0.5]).unwrap();
        let k = 40.0;
        let mc = monte_carlo_mean_z(&p, &q, k, 4000, &mut rng(0)).unwrap();
        let mut exact = 0.0;
        for (&pi, &qi) in p.probs().iter().zip(q.probs()) {
            let t = poisson_truncation_point(k * pi.max(qi)).unwrap();
            exact += exact_expected_zi(k * pi, k * qi, t).unwrap();
        }
        assert!(
            mc.covers(exact, 4.0),
            "mc={} +/- {}, exact={exact}",
            mc.estimate,
            mc.std_error
        );
    }

    #[test]
    fn monte_carlo_equal_case_covers_zero() {
        let p = Categorical::uniform(10);
        let mc = monte_carlo_mean_z(&p, &p, 50.0, 2000, &mut rng(1)).unwrap();
        assert!(mc.covers(0.0, 4.0), "mc={} +/- {}", mc.estimate, mc.std_error);
    }

    #[test]
    fn monte_carlo_error_scales_with_reps() {
        let p = Categorical::uniform(8);
        let q = Categorical::new(vec![0.2, 0.05, 0.2, 0.05, 0.2, 0.05, 0.2, 0.05]).unwrap();
        let lo = monte_carlo_mean_z(&p, &q, 30.0, 1000, &mut rng(2)).unwrap();
        let hi = monte_carlo_mean_z(&p, &q, 30.0, 2000, &mut rng(3)).unwrap();
        let ratio = lo.std_error / hi.std_error;
        assert!(
            (1.2..=1.7).contains(&ratio),
            "stderr ratio {ratio} (lo {}, hi {})",
            lo.std_error,
            hi.std_error
        );
    }

    #[test]
    fn error_rate_of_truthful_tester_is_zero() {
        let report = empirical_error_rate(
            |_r| Ok(TestVerdict::Yes),
            Truth::ShouldYes,
            200,
            &mut rng(4),
        )
        .unwrap();
        assert_eq!(report.errors, 0);
        assert_eq!(report.completed, 200);
        assert_eq!(report.rate.estimate, 0.0);
    }

    #[test]
    fn error_rate_of_coin_flip_near_half() {
        let report = empirical_error_rate(
            |r| {
                Ok(if r.random::<bool>() {
                    TestVerdict::Yes
                } else {
                    TestVerdict::No
                })
            },
            Truth::ShouldNo,
            10_000,
            &mut rng(5),
        )
        .unwrap();
        let sigma = (0.25f64 / 10_000.0).sqrt();
        assert!((report.rate.estimate - 0.5).abs() <= 4.0 * sigma);
    }

    #[test]
    fn error_rate_reruns_identically() {
        let run = || {
            empirical_error_rate(
                |r| {
                    Ok(if r.random::<f64>() < 0.3 {
                        TestVerdict::Yes
                    } else {
                        TestVerdict::No
                    })
                },
                Truth::ShouldYes,
                500,
                &mut rng(6),
            )
            .unwrap()
        };
        assert_eq!(run().errors, run().errors);
    }

    #[test]
    fn tester_failures_counted_separately() {
        let mut calls = 0u32;
        let report = empirical_error_rate(
            |_r| {
                calls += 1;
                if calls % 5 == 0 {
                    Err(Error::RetryExhausted { attempts: 3 })
                } else {
                    Ok(TestVerdict::Yes)
                }
            },
            Truth::ShouldYes,
            100,
            &mut rng(7),
        )
        .unwrap();
        assert_eq!(report.failures, 20);
        assert_eq!(report.completed, 80);
        assert_eq!(report.errors, 0);
    }

    #[test]
    fn kl_tv_bound_basic_cases() {
        let p = Categorical::uniform(2);
        assert!(kl_tv_consistency_check(&p, &p).unwrap());
        // Support mismatch: infinite divergence, vacuous bound.
        let q = Categorical::point_mass(2, 0);
        assert!(kl_tv_consistency_check(&p, &q).unwrap());
    }

    #[test]
    fn kl_tv_bound_random_fuzz() {
        let mut r = rng(8);
        for _ in 0..1000 {
            let p = random_dense(10, &mut r);
            let q = random_dense(10, &mut r);
            assert!(kl_tv_consistency_check(&p, &q).unwrap());
        }
    }

    #[test]
    fn kl_tv_bound_near_disjoint() {
        // Mostly disjoint supports with finite divergence: both sides near 1.
        let p = Categorical::new(vec![0.999, 0.001]).unwrap();
        let q = Categorical::new(vec![0.001, 0.999]).unwrap();
        assert!(kl_tv_consistency_check(&p, &q).unwrap());
        assert!(kl_tv_consistency_check(&q, &p).unwrap());
    }

    #[test]
    fn median_bound_on_identical_collection_is_zero() {
        let members = vec![Categorical::uniform(6); 5];
        assert_eq!(collection_median_lower_bound(&members).unwrap(), 0.0);
    }

    #[test]
    fn median_bound_on_disjoint_shifts() {
        // Five cyclic shifts of a block distribution: disjoint supports, so
        // the coordinate-wise median is zero and the bound is 1/2.
        let m = 5usize;
        let n = 20usize;
        let members: Vec<Categorical> = (0..m)
            .map(|i| {
                let mut probs = vec![0.0; n];
                let block = n / m;
                for j in 0..block {
                    probs[i * block + j] = 1.0 / block as f64;
                }
                Categorical::new(probs).unwrap()
            })
            .collect();
        let bound = collection_median_lower_bound(&members).unwrap();
        assert!((bound - 0.5).abs() < 1e-12, "bound={bound}");
    }

    #[test]
    fn median_bound_never_exceeds_true_average_distance() {
        // Sanity on random collections: the bound must stay below the
        // average distance to any particular candidate (here: the mean).
        let mut r = rng(9);
        for _ in 0..50 {
            let members: Vec<Categorical> = (0..3).map(|_| random_dense(8, &mut r)).collect();
            let bound = collection_median_lower_bound(&members).unwrap();
            let mean = Categorical::normalized(
                (0..8)
                    .map(|x| members.iter().map(|p| p.probs()[x]).sum::<f64>())
                    .collect(),
            )
            .unwrap();
            let avg_to_mean = members
                .iter()
                .map(|p| tv_distance(p, &mean).unwrap())
                .sum::<f64>()
                / 3.0;
            assert!(bound <= avg_to_mean + 1e-12, "{bound} > {avg_to_mean}");
        }
    }

    #[test]
    fn marginal_product_distance_cases() {
        let product = JointDistribution::uniform(3, 4);
        assert_eq!(distance_to_marginal_product(&product), 0.0);

        let diagonal = JointDistribution::new(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!((distance_to_marginal_product(&diagonal) - 0.5).abs() < 1e-12);
    }

    fn random_dense(n: usize, rng: &mut RngStream) -> Categorical {
        let masses: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
        Categorical::normalized(masses).unwrap()
    }
}
