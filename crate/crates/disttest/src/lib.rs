//! High-confidence property testing for discrete distributions.
//!
//! This crate implements sublinear-sample testers that decide, with failure
//! probability at most `delta`, whether
//!
//! * two distributions on `[n]` are equal or `eps`-far in total variation
//!   ([`testers::test_closeness`]),
//! * a joint distribution on `[n] x [m]` is a product of its marginals or
//!   `eps`-far from every product ([`testers::full_test_independence`]),
//! * `m` distributions on `[n]` are all identical or collectively `eps`-far
//!   from any common distribution ([`testers::full_test_collections`]),
//! * two distributions are equal when one side supplies many more samples
//!   than the other ([`testers::full_test_unequal`]).
//!
//! All four testers share the same core statistic: samples are split into
//! flagged/unflagged halves, and the per-element sum of
//! `|p0-q0| + |p1-q1| - |p0-p1| - |q0-q1|` is compared against a threshold
//! proportional to `sqrt(k log(1/delta))`. The independence-style testers
//! additionally flatten heavy bins by subdividing them according to an
//! auxiliary sample ([`flattening`]) and gate on collision counts
//! ([`statistics::collision_counts`]) before trusting the statistic.
//!
//! The theory behind these testers fixes sample sizes and thresholds only up
//! to universal constants. The constants live in [`testers::TesterConfig`]
//! and are determined empirically; the companion CLI crate ships a
//! calibration harness and the calibrated defaults are exposed via
//! [`testers::TesterConfig::calibrated`].
//!
//! Supporting modules:
//!
//! * [`prob`] -- distribution types, TV/KL distances, exact samplers
//!   (categorical, Poisson, multinomial, Poissonized histograms), and the
//!   sample-size formulas.
//! * [`flattening`] -- split maps and sub-bin assignment.
//! * [`statistics`] -- the four-way histogram, the test statistic, flag
//!   splitting, and collision counting.
//! * [`hard_instances`] -- generators for the lower-bound ensembles and the
//!   closeness-to-independence reduction.
//! * [`oracle`] -- independent brute-force and Monte Carlo reference
//!   computations used to validate everything else.

#![forbid(unsafe_code)]

pub mod error;
pub mod flattening;
pub mod hard_instances;
mod math;
pub mod oracle;
pub mod prob;
pub mod rng;
pub mod statistics;
pub mod testers;

pub use error::Error;
pub use rng::RngStream;

pub type Result<T> = std::result::Result<T, Error>;
