//! The four testers.
//!
//! [`test_closeness`] decides `p = q` versus `d_TV(p, q) >= eps` from equal
//! sample budgets. The other three share a basic/retry structure: a basic
//! tester consumes a fixed sample multiset and returns YES, NO, or ABORT,
//! where ABORT means the randomized flattening attempt failed and should be
//! retried on the same samples. For every fixed multiset the abort
//! probability is at most 1/2, so the retrying driver finishes after O(1)
//! attempts in expectation.
//!
//! All thresholds involve universal constants that the underlying theory
//! leaves unspecified. They live in [`TesterConfig`]; the defaults exposed by
//! [`TesterConfig::calibrated`] were measured by the companion harness's
//! calibration procedure.

mod closeness;
mod collections;
mod independence;
mod unequal;

pub use closeness::{test_closeness, test_closeness_on, ClosenessOutcome};
pub use collections::{basic_test_collections, full_test_collections, full_test_collections_on};
pub use independence::{
    basic_test_independence, full_test_independence, full_test_independence_on,
};
pub use unequal::{basic_test_unequal, full_test_unequal, full_test_unequal_on};

use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::RngStream;
use crate::statistics::{collision_counts, flag_split, CollisionCounts, FourWayHistogram, Slot};
use crate::Result;

/// A tester's final answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestVerdict {
    /// The property holds (p = q, independent, ...).
    Yes,
    /// The input is far from the property.
    No,
}

/// Outcome of one basic-tester attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasicVerdict {
    Yes,
    No,
    Abort,
}

/// The unique terminal branch a basic-tester run exited through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// A flattening set overflowed its cap.
    AbortFlattening,
    /// The Poisson draws asked for more samples than the pool holds.
    AbortSampleBudget,
    /// Too many q-side collisions for the statistic to be trustworthy.
    AbortCollisionCap,
    /// Far more p-side than q-side collisions: reject without scoring.
    NoCollisionImbalance,
    /// Statistic below threshold.
    YesThreshold,
    /// Statistic at or above threshold.
    NoThreshold,
}

impl Branch {
    pub fn verdict(self) -> BasicVerdict {
        match self {
            Branch::AbortFlattening | Branch::AbortSampleBudget | Branch::AbortCollisionCap => {
                BasicVerdict::Abort
            }
            Branch::NoCollisionImbalance | Branch::NoThreshold => BasicVerdict::No,
            Branch::YesThreshold => BasicVerdict::Yes,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::AbortFlattening => "abort-flattening",
            Branch::AbortSampleBudget => "abort-sample-budget",
            Branch::AbortCollisionCap => "abort-collision-cap",
            Branch::NoCollisionImbalance => "no-collision-imbalance",
            Branch::YesThreshold => "yes-threshold",
            Branch::NoThreshold => "no-threshold",
        }
    }
}

/// One basic-tester run with its diagnostics.
#[derive(Debug, Clone)]
pub struct BasicOutcome {
    pub branch: Branch,
    /// Size of the primary (row) flattening multiset.
    pub flatten_x: usize,
    /// Size of the column flattening multiset; zero for testers that only
    /// flatten one axis.
    pub flatten_y: usize,
    /// The Poisson draw for the reference-side sample count (the paper's l).
    pub q_draws: u64,
    /// The Poisson draw for the tested-side sample count (the paper's l').
    pub p_draws: u64,
    /// Collision tallies, when the run got that far.
    pub collisions: Option<CollisionCounts>,
    /// The statistic, when the run got that far.
    pub z: Option<i64>,
}

impl BasicOutcome {
    pub fn verdict(&self) -> BasicVerdict {
        self.branch.verdict()
    }
}

/// Result of a full (retrying) tester.
#[derive(Debug, Clone)]
pub struct FullOutcome {
    pub verdict: TestVerdict,
    /// Number of basic-tester invocations, including the deciding one.
    pub attempts: u32,
    /// The deciding basic run.
    pub last: BasicOutcome,
}

/// The universal constants the theory leaves unspecified, plus optional
/// calibration provenance.
///
/// `C` scales the sample budget, `C_thresh` the accept threshold and the
/// collision-imbalance slack, and `c_abort` the q-side collision cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TesterConfig {
    #[serde(rename = "C")]
    pub budget_constant: f64,
    #[serde(rename = "C_thresh")]
    pub threshold_constant: f64,
    #[serde(rename = "c_abort")]
    pub abort_constant: f64,
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationMeta>,
}

/// Provenance for a calibrated config: what was measured, where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMeta {
    pub tester: String,
    pub target_delta: f64,
    /// Measured floor on `E[Z] / sqrt(k ln(1/delta))` over eps-far grid
    /// points (the expectation-gap fraction), when recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub measurements: Vec<GridMeasurement>,
}

/// One calibration grid point's validation measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasurement {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_k: Option<u64>,
    pub eps: f64,
    pub k: u64,
    pub reps: u64,
    pub completeness_errors: u64,
    pub soundness_errors: u64,
}

/// Tester identifiers, used to select calibrated defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tester {
    Closeness,
    Independence,
    Collections,
    Unequal,
}

impl Tester {
    pub fn name(self) -> &'static str {
        match self {
            Tester::Closeness => "closeness",
            Tester::Independence => "independence",
            Tester::Collections => "collections",
            Tester::Unequal => "unequal",
        }
    }
}

impl std::str::FromStr for Tester {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closeness" => Ok(Tester::Closeness),
            "independence" => Ok(Tester::Independence),
            "collections" => Ok(Tester::Collections),
            "unequal" => Ok(Tester::Unequal),
            other => Err(Error::invalid(format!("unknown tester '{other}'"))),
        }
    }
}

impl TesterConfig {
    pub fn new(
        budget_constant: f64,
        threshold_constant: f64,
        abort_constant: f64,
        max_retries: u32,
    ) -> Result<Self> {
        let cfg = TesterConfig {
            budget_constant,
            threshold_constant,
            abort_constant,
            max_retries,
            calibration: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Constants found by the harness's calibration procedure (the CLI's
    /// `calibrate` subcommand); each tester is calibrated independently
    /// against its desk-scale grid at target delta 0.1.
    pub fn calibrated(tester: Tester) -> Self {
        // Provisional values; replaced by measured ones from the harness run.
        let (c, c_thresh, c_abort) = match tester {
            Tester::Closeness => (2.0, 1.0, 8.0),
            Tester::Independence => (2.0, 1.0, 8.0),
            Tester::Collections => (2.0, 1.0, 8.0),
            Tester::Unequal => (2.0, 1.0, 8.0),
        };
        TesterConfig {
            budget_constant: c,
            threshold_constant: c_thresh,
            abort_constant: c_abort,
            max_retries: 64,
            calibration: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("C", self.budget_constant),
            ("C_thresh", self.threshold_constant),
            ("c_abort", self.abort_constant),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "config constant {name} must be positive, got {v}"
                )));
            }
        }
        if self.max_retries == 0 {
            return Err(Error::invalid("max_retries must be at least 1"));
        }
        Ok(())
    }
}

/// Shared tail of the three basic testers: collision gates, then flag-split
/// and threshold the statistic.
pub(crate) fn gate_and_score<E: Eq + Hash>(
    p_flat: Vec<E>,
    q_flat: Vec<E>,
    q_collision_cap: f64,
    imbalance_slack: f64,
    z_threshold: f64,
    rng: &mut RngStream,
) -> (Branch, CollisionCounts, Option<i64>) {
    let counts = collision_counts(&p_flat, &q_flat);
    if counts.q_collisions as f64 > q_collision_cap {
        return (Branch::AbortCollisionCap, counts, None);
    }
    if counts.p_collisions as f64 > 20.0 * counts.q_collisions as f64 + imbalance_slack {
        return (Branch::NoCollisionImbalance, counts, None);
    }

    let (p0, p1) = flag_split(p_flat, rng);
    let (q0, q1) = flag_split(q_flat, rng);
    let mut histogram = FourWayHistogram::new();
    histogram.add_all(p0, Slot::P0);
    histogram.add_all(p1, Slot::P1);
    histogram.add_all(q0, Slot::Q0);
    histogram.add_all(q1, Slot::Q1);
    let z = histogram.z_statistic();

    let branch = if (z as f64) < z_threshold {
        Branch::YesThreshold
    } else {
        Branch::NoThreshold
    };
    (branch, counts, Some(z))
}

/// Reruns a basic tester with fresh randomness until it stops aborting.
pub(crate) fn run_with_retries(
    max_retries: u32,
    mut attempt: impl FnMut(&mut RngStream) -> Result<BasicOutcome>,
    rng: &mut RngStream,
) -> Result<FullOutcome> {
    for attempts in 1..=max_retries {
        let outcome = attempt(rng)?;
        match outcome.verdict() {
            BasicVerdict::Yes => {
                return Ok(FullOutcome {
                    verdict: TestVerdict::Yes,
                    attempts,
                    last: outcome,
                })
            }
            BasicVerdict::No => {
                return Ok(FullOutcome {
                    verdict: TestVerdict::No,
                    attempts,
                    last: outcome,
                })
            }
            BasicVerdict::Abort => {}
        }
    }
    Err(Error::RetryExhausted {
        attempts: max_retries,
    })
}

pub(crate) fn samples_per_basic_run(k: u64) -> Result<usize> {
    let total = k
        .checked_mul(100)
        .ok_or_else(|| Error::invalid("sample budget overflows"))?;
    usize::try_from(total).map_err(|_| Error::invalid("sample budget overflows"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_schema_round_trip() {
        let cfg = TesterConfig::new(2.0, 0.75, 6.0, 64).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"C\":2.0"));
        assert!(json.contains("\"C_thresh\":0.75"));
        assert!(json.contains("\"c_abort\":6.0"));
        assert!(json.contains("\"max_retries\":64"));
        let parsed: TesterConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn config_accepts_bare_four_field_schema() {
        let parsed: TesterConfig =
            serde_json::from_str(r#"{"C":1.5,"C_thresh":0.5,"c_abort":4.0,"max_retries":32}"#)
                .unwrap();
        assert_eq!(parsed.budget_constant, 1.5);
        assert!(parsed.calibration.is_none());
    }

    #[test]
    fn config_rejects_nonpositive_constants() {
        assert!(TesterConfig::new(0.0, 1.0, 1.0, 64).is_err());
        assert!(TesterConfig::new(1.0, -1.0, 1.0, 64).is_err());
        assert!(TesterConfig::new(1.0, 1.0, f64::NAN, 64).is_err());
        assert!(TesterConfig::new(1.0, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn branch_verdicts_partition() {
        use Branch::*;
        assert_eq!(AbortFlattening.verdict(), BasicVerdict::Abort);
        assert_eq!(AbortSampleBudget.verdict(), BasicVerdict::Abort);
        assert_eq!(AbortCollisionCap.verdict(), BasicVerdict::Abort);
        assert_eq!(NoCollisionImbalance.verdict(), BasicVerdict::No);
        assert_eq!(NoThreshold.verdict(), BasicVerdict::No);
        assert_eq!(YesThreshold.verdict(), BasicVerdict::Yes);
    }

    #[test]
    fn retry_driver_counts_attempts() {
        let mut rng = RngStream::from_seed(0);
        let mut calls = 0;
        let outcome = run_with_retries(
            10,
            |_r| {
                calls += 1;
                let branch = if calls < 3 {
                    Branch::AbortFlattening
                } else {
                    Branch::YesThreshold
                };
                Ok(BasicOutcome {
                    branch,
                    flatten_x: 0,
                    flatten_y: 0,
                    q_draws: 0,
                    p_draws: 0,
                    collisions: None,
                    z: None,
                })
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(outcome.attempts, 3);
        assert_eq!(outcome.verdict, TestVerdict::Yes);
    }

    #[test]
    fn retry_driver_exhaustion_is_an_error() {
        let mut rng = RngStream::from_seed(0);
        let err = run_with_retries(
            5,
            |_r| {
                Ok(BasicOutcome {
                    branch: Branch::AbortCollisionCap,
                    flatten_x: 0,
                    flatten_y: 0,
                    q_draws: 0,
                    p_draws: 0,
                    collisions: None,
                    z: None,
                })
            },
            &mut rng,
        )
        .unwrap_err();
        match err {
            Error::RetryExhausted { attempts } => assert_eq!(attempts, 5),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
