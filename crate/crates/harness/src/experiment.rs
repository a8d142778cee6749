//! Batch simulation: run a tester against a family for many trials, one
//! independent random stream per trial, and tally error rates.
//!
//! Determinism contract: the output depends only on the experiment spec
//! (including its base seed). Trials are farmed out to a rayon pool but
//! collected in trial order, and every float that reaches the CSV is
//! formatted with Rust's shortest-round-trip notation, so any worker count
//! produces byte-identical output.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use disttest::hard_instances::reduce_closeness_to_independence;
use disttest::oracle::Truth;
use disttest::prob::{
    sample_size_closeness, sample_size_collections, sample_size_independence, sample_size_unequal,
    CategoricalSampler,
};
use disttest::testers::{
    full_test_collections, full_test_independence, full_test_unequal, test_closeness, FullOutcome,
    TestVerdict, Tester, TesterConfig,
};
use disttest::{Error as LibError, RngStream};

use crate::families::{uses_reduction, Family, FamilyParams};

/// A batch of trials of one tester on one family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub tester: Tester,
    pub family: String,
    pub n: usize,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub big_k: Option<u64>,
    pub eps: f64,
    pub delta: f64,
    pub replications: u64,
    pub seed: u64,
    /// Constants; defaults to the calibrated config for the tester.
    #[serde(default)]
    pub config: Option<TesterConfig>,
    /// CSV destination; CLI flag `--out` overrides.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// One completed (or failed) trial. The columns of the CSV, in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub tester: String,
    pub n: usize,
    pub m: Option<usize>,
    #[serde(rename = "K")]
    pub big_k: Option<u64>,
    pub eps: f64,
    pub delta: f64,
    pub k_used: u64,
    pub truth: String,
    pub verdict: String,
    pub abort_count: u32,
    #[serde(rename = "N")]
    pub non_singletons: Option<u64>,
    #[serde(rename = "N_p")]
    pub p_collisions: Option<u64>,
    #[serde(rename = "N_q")]
    pub q_collisions: Option<u64>,
    #[serde(rename = "Z")]
    pub z: Option<i64>,
    pub trial_seed: u64,
}

/// Aggregate outcome of a batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub tester: String,
    pub family: String,
    pub truth: String,
    pub replications: u64,
    pub completed: u64,
    pub failures: u64,
    pub yes: u64,
    pub no: u64,
    pub errors: u64,
    pub error_rate: f64,
    pub wilson_lower: f64,
    pub wilson_upper: f64,
    pub mean_attempts: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub summary: ExperimentSummary,
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64; // two-sided 95%
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Runs the batch on a dedicated rayon pool of `workers` threads (0 means
/// rayon's default). The worker count must not and does not affect output.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<ExperimentResult> {
    if spec.replications == 0 {
        bail!("replications must be at least 1");
    }
    let family = Family::from_id(&spec.family)?;
    if !Family::supported(spec.tester)
        .iter()
        .any(|id| *id == family.name())
    {
        bail!(
            "family '{}' is not defined for tester '{}' (supported: {})",
            spec.family,
            spec.tester.name(),
            Family::supported(spec.tester).join(", ")
        );
    }
    let config = spec
        .config
        .clone()
        .unwrap_or_else(|| TesterConfig::calibrated(spec.tester));
    config.validate()?;

    let run_all = || -> Result<Vec<ExperimentRow>> {
        (0..spec.replications)
            .into_par_iter()
            .map(|trial| run_trial(spec, &family, &config, trial))
            .collect()
    };
    let rows = if workers == 0 {
        run_all()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .context("building worker pool")?;
        pool.install(run_all)?
    };

    let summary = summarize(spec, &family, &rows);
    Ok(ExperimentResult { rows, summary })
}

fn run_trial(
    spec: &ExperimentSpec,
    family: &Family,
    config: &TesterConfig,
    trial: u64,
) -> Result<ExperimentRow> {
    let mut rng = RngStream::new(spec.seed, trial);
    let params = FamilyParams {
        n: spec.n,
        m: spec.m,
        big_k: spec.big_k,
        eps: spec.eps,
        delta: spec.delta,
        budget_constant: config.budget_constant,
    };
    let instance = family.instantiate(&params, &mut rng)?;

    let mut row = ExperimentRow {
        tester: spec.tester.name().to_string(),
        n: spec.n,
        m: spec.m,
        big_k: spec.big_k,
        eps: spec.eps,
        delta: spec.delta,
        k_used: 0,
        truth: match family.truth() {
            Truth::ShouldYes => "SHOULD_YES".to_string(),
            Truth::ShouldNo => "SHOULD_NO".to_string(),
        },
        verdict: String::new(),
        abort_count: 0,
        non_singletons: None,
        p_collisions: None,
        q_collisions: None,
        z: None,
        trial_seed: trial,
    };

    match spec.tester {
        Tester::Closeness => {
            let (p, q) = instance
                .pair()
                .ok_or_else(|| anyhow!("closeness needs a pair instance"))?;
            row.k_used =
                sample_size_closeness(spec.n, spec.eps, spec.delta, config.budget_constant)?;
            let ps = CategoricalSampler::new(p);
            let qs = CategoricalSampler::new(q);
            match test_closeness(
                &mut |r| ps.draw(r),
                &mut |r| qs.draw(r),
                spec.n,
                spec.eps,
                spec.delta,
                config,
                &mut rng,
            ) {
                Ok(outcome) => {
                    row.verdict = verdict_str(outcome.verdict).to_string();
                    row.z = Some(outcome.z);
                }
                Err(err) => row.verdict = error_str(&err),
            }
        }
        Tester::Independence => {
            row.k_used = independence_budget(spec, config, family)?;
            let full = if uses_reduction(family) {
                let (p, q) = instance
                    .pair()
                    .ok_or_else(|| anyhow!("reduction family needs a pair instance"))?;
                let ps = CategoricalSampler::new(p);
                let qs = CategoricalSampler::new(q);
                let mut sp = |r: &mut RngStream| ps.draw(r);
                let mut sq = |r: &mut RngStream| qs.draw(r);
                let mut reduced = reduce_closeness_to_independence(&mut sp, &mut sq);
                full_test_independence(
                    &mut reduced,
                    spec.n,
                    2,
                    spec.eps,
                    spec.delta,
                    config,
                    &mut rng,
                )
            } else {
                let joint = instance
                    .joint()
                    .ok_or_else(|| anyhow!("independence needs a joint instance"))?;
                let m = spec.m.ok_or_else(|| anyhow!("independence needs --m"))?;
                let sampler = disttest::prob::JointSampler::new(joint);
                full_test_independence(
                    &mut |r| sampler.draw(r),
                    spec.n,
                    m,
                    spec.eps,
                    spec.delta,
                    config,
                    &mut rng,
                )
            };
            record_full(&mut row, full);
        }
        Tester::Collections => {
            let joint = instance
                .joint()
                .ok_or_else(|| anyhow!("collections needs a joint instance"))?;
            let m = spec.m.ok_or_else(|| anyhow!("collections needs --m"))?;
            row.k_used =
                sample_size_collections(spec.n, m, spec.eps, spec.delta, config.budget_constant)?;
            let sampler = disttest::prob::JointSampler::new(joint);
            let full = full_test_collections(
                &mut |r| sampler.draw(r),
                spec.n,
                m,
                spec.eps,
                spec.delta,
                config,
                &mut rng,
            );
            record_full(&mut row, full);
        }
        Tester::Unequal => {
            let (p, q) = instance
                .pair()
                .ok_or_else(|| anyhow!("unequal needs a pair instance"))?;
            let big_k = spec.big_k.ok_or_else(|| anyhow!("unequal needs --big-k"))?;
            row.k_used =
                sample_size_unequal(spec.n, big_k, spec.eps, spec.delta, config.budget_constant)?;
            let ps = CategoricalSampler::new(p);
            let qs = CategoricalSampler::new(q);
            let full = full_test_unequal(
                &mut |r| qs.draw(r),
                &mut |r| ps.draw(r),
                spec.n,
                big_k,
                spec.eps,
                spec.delta,
                config,
                &mut rng,
            );
            record_full(&mut row, full);
        }
    }
    Ok(row)
}

fn independence_budget(
    spec: &ExperimentSpec,
    config: &TesterConfig,
    family: &Family,
) -> Result<u64> {
    if uses_reduction(family) {
        Ok(sample_size_independence(
            spec.n,
            2,
            spec.eps,
            spec.delta,
            config.budget_constant,
        )?)
    } else {
        let m = spec.m.ok_or_else(|| anyhow!("independence needs --m"))?;
        let (hi, lo) = if spec.n >= m { (spec.n, m) } else { (m, spec.n) };
        Ok(sample_size_independence(
            hi,
            lo,
            spec.eps,
            spec.delta,
            config.budget_constant,
        )?)
    }
}

fn record_full(row: &mut ExperimentRow, result: disttest::Result<FullOutcome>) {
    match result {
        Ok(full) => {
            row.verdict = verdict_str(full.verdict).to_string();
            row.abort_count = full.attempts - 1;
            if let Some(c) = full.last.collisions {
                row.non_singletons = Some(c.non_singletons);
                row.p_collisions = Some(c.p_collisions);
                row.q_collisions = Some(c.q_collisions);
            }
            row.z = full.last.z;
        }
        Err(err) => row.verdict = error_str(&err),
    }
}

fn verdict_str(v: TestVerdict) -> &'static str {
    match v {
        TestVerdict::Yes => "YES",
        TestVerdict::No => "NO",
    }
}

fn error_str(err: &LibError) -> String {
    match err {
        LibError::RetryExhausted { .. } => "RETRY_EXHAUSTED".to_string(),
        other => format!("ERROR: {other}"),
    }
}

fn summarize(spec: &ExperimentSpec, family: &Family, rows: &[ExperimentRow]) -> ExperimentSummary {
    let expected = match family.truth() {
        Truth::ShouldYes => "YES",
        Truth::ShouldNo => "NO",
    };
    let mut yes = 0u64;
    let mut no = 0u64;
    let mut failures = 0u64;
    let mut errors = 0u64;
    let mut attempts_total = 0u64;
    for row in rows {
        match row.verdict.as_str() {
            "YES" => yes += 1,
            "NO" => no += 1,
            _ => {
                failures += 1;
                continue;
            }
        }
        attempts_total += row.abort_count as u64 + 1;
        if row.verdict != expected {
            errors += 1;
        }
    }
    let completed = yes + no;
    let error_rate = if completed > 0 {
        errors as f64 / completed as f64
    } else {
        0.0
    };
    let (wilson_lower, wilson_upper) = wilson_interval(errors, completed.max(1));
    ExperimentSummary {
        tester: spec.tester.name().to_string(),
        family: family.name().to_string(),
        truth: match family.truth() {
            Truth::ShouldYes => "SHOULD_YES".to_string(),
            Truth::ShouldNo => "SHOULD_NO".to_string(),
        },
        replications: spec.replications,
        completed,
        failures,
        yes,
        no,
        errors,
        error_rate,
        wilson_lower,
        wilson_upper,
        mean_attempts: if completed > 0 {
            attempts_total as f64 / completed as f64
        } else {
            0.0
        },
    }
}

/// Serializes rows as CSV with the fixed header order.
pub fn rows_to_csv(rows: &[ExperimentRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "tester",
        "n",
        "m",
        "K",
        "eps",
        "delta",
        "k_used",
        "truth",
        "verdict",
        "abort_count",
        "N",
        "N_p",
        "N_q",
        "Z",
        "trial_seed",
    ])?;
    for row in rows {
        writer.write_record([
            row.tester.clone(),
            row.n.to_string(),
            opt_str(row.m),
            opt_str(row.big_k),
            row.eps.to_string(),
            row.delta.to_string(),
            row.k_used.to_string(),
            row.truth.clone(),
            row.verdict.clone(),
            row.abort_count.to_string(),
            opt_str(row.non_singletons),
            opt_str(row.p_collisions),
            opt_str(row.q_collisions),
            opt_str(row.z),
            row.trial_seed.to_string(),
        ])?;
    }
    Ok(String::from_utf8(writer.into_inner()?)?)
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_spec() -> ExperimentSpec {
        ExperimentSpec {
            tester: Tester::Closeness,
            family: "uniform_equal".to_string(),
            n: 20,
            m: None,
            big_k: None,
            eps: 0.5,
            delta: 0.2,
            replications: 20,
            seed: 7,
            config: Some(TesterConfig::new(1.0, 4.0, 8.0, 64).unwrap()),
            out: None,
        }
    }

    #[test]
    fn rerun_is_byte_identical_across_worker_counts() {
        let spec = quick_spec();
        let a = run_experiment(&spec, 1).unwrap();
        let b = run_experiment(&spec, 3).unwrap();
        assert_eq!(rows_to_csv(&a.rows).unwrap(), rows_to_csv(&b.rows).unwrap());
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
    }

    #[test]
    fn csv_has_fifteen_columns() {
        let spec = quick_spec();
        let result = run_experiment(&spec, 1).unwrap();
        let csv = rows_to_csv(&result.rows).unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 15);
        assert_eq!(
            header,
            "tester,n,m,K,eps,delta,k_used,truth,verdict,abort_count,N,N_p,N_q,Z,trial_seed"
        );
    }

    #[test]
    fn unknown_family_rejected() {
        let mut spec = quick_spec();
        spec.family = "nonsense".to_string();
        assert!(run_experiment(&spec, 1).is_err());
    }

    #[test]
    fn family_tester_mismatch_rejected() {
        let mut spec = quick_spec();
        spec.family = "diagonal_mixture".to_string();
        assert!(run_experiment(&spec, 1).is_err());
    }

    #[test]
    fn zero_replications_rejected() {
        let mut spec = quick_spec();
        spec.replications = 0;
        assert!(run_experiment(&spec, 1).is_err());
    }

    #[test]
    fn wilson_interval_basics() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && 0.5 < hi);
        let (lo, hi) = wilson_interval(0, 100);
        assert!(lo < 1e-12);
        assert!(hi > 0.0 && hi < 0.05);
    }
}
