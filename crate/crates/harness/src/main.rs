//! `disttest` -- run, simulate, and calibrate discrete-distribution testers.
//!
//! Exit codes for `test`: 0 YES, 1 NO, 2 usage or input error, 3 retry
//! budget exhausted. Other subcommands exit 0 on success and 2 on error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use disttest::hard_instances::{
    gen_independence_hard, gen_unequal_hard, Case, EnsembleSpec, OutOfRangePolicy, Shape, Variant,
};
use disttest::prob::{
    sample_size_closeness, sample_size_collections, sample_size_independence, sample_size_unequal,
};
use disttest::testers::{
    full_test_collections_on, full_test_independence_on, full_test_unequal_on, test_closeness_on,
    BasicOutcome, ClosenessOutcome, FullOutcome, TestVerdict, Tester, TesterConfig,
};
use disttest::{Error as LibError, RngStream};

use disttest_cli::calibrate::{calibrate, CalibrationOptions, GridPoint};
use disttest_cli::experiment::{run_experiment, rows_to_csv, ExperimentSpec};
use disttest_cli::samples::{read_pair_samples, read_scalar_samples};

#[derive(Parser)]
#[command(name = "disttest", version, about = "High-confidence discrete distribution testers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one tester on sample files and print the verdict.
    Test(TestArgs),
    /// Run a batch of trials from an experiment spec; write CSV, print a summary.
    Simulate(SimulateArgs),
    /// Draw a lower-bound hard instance and dump it as JSON.
    GenerateHard(GenerateHardArgs),
    /// Search for tester constants meeting a target error rate on a grid.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct TestArgs {
    /// Which property to test.
    #[arg(value_enum)]
    tester: TesterArg,
    /// Sample file for p (pairs "x,y" for independence/collections).
    #[arg(long)]
    samples_p: Option<PathBuf>,
    /// Sample file for q (closeness and unequal only).
    #[arg(long)]
    samples_q: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: Option<usize>,
    /// Larger-side budget K for the unequal tester.
    #[arg(long = "big-k")]
    big_k: Option<u64>,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tester constants as JSON {"C":..,"C_thresh":..,"c_abort":..,"max_retries":..}.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TesterArg {
    Closeness,
    Independence,
    Collections,
    Unequal,
}

impl From<TesterArg> for Tester {
    fn from(t: TesterArg) -> Tester {
        match t {
            TesterArg::Closeness => Tester::Closeness,
            TesterArg::Independence => Tester::Independence,
            TesterArg::Collections => Tester::Collections,
            TesterArg::Unequal => Tester::Unequal,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Override the spec's CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = default). Must not change outputs.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct GenerateHardArgs {
    /// "independence" or "unequal".
    family: String,
    /// first|second (independence only).
    #[arg(long)]
    variant: Option<String>,
    /// completeness|soundness.
    #[arg(long)]
    case: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: u64,
    #[arg(long = "big-k")]
    big_k: Option<u64>,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Error on an out-of-range draw instead of resampling.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(value_enum)]
    tester: TesterArg,
    /// Grid domain sizes (repeatable).
    #[arg(long = "grid-n", required = true)]
    grid_n: Vec<usize>,
    /// Grid column sizes (independence/collections; repeatable).
    #[arg(long = "grid-m")]
    grid_m: Vec<usize>,
    /// Grid K values (unequal; repeatable).
    #[arg(long = "grid-big-k")]
    grid_big_k: Vec<u64>,
    /// Grid eps values (repeatable).
    #[arg(long = "grid-eps", required = true)]
    grid_eps: Vec<f64>,
    /// Target error probability.
    #[arg(long)]
    delta: f64,
    /// Validation trials per grid point and case.
    #[arg(long, default_value_t = 400)]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Test(args) => run_test(args),
        Command::Simulate(args) => wrap(run_simulate(args)),
        Command::GenerateHard(args) => wrap(run_generate_hard(args)),
        Command::Calibrate(args) => wrap(run_calibrate(args)),
    }
}

fn wrap(result: anyhow::Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

#[derive(Serialize)]
struct TestDiagnostics {
    tester: &'static str,
    n: usize,
    m: Option<usize>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    big_k: Option<u64>,
    eps: f64,
    delta: f64,
    k_used: u64,
    seed: u64,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attempts: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    branch: Option<&'static str>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    non_singletons: Option<u64>,
    #[serde(rename = "N_p", skip_serializing_if = "Option::is_none")]
    p_collisions: Option<u64>,
    #[serde(rename = "N_q", skip_serializing_if = "Option::is_none")]
    q_collisions: Option<u64>,
}

fn run_test(args: TestArgs) -> ExitCode {
    match try_run_test(&args) {
        Ok(verdict) => match verdict {
            TestVerdict::Yes => ExitCode::SUCCESS,
            TestVerdict::No => ExitCode::from(1),
        },
        Err(err) => {
            if let Some(LibError::RetryExhausted { .. }) = err.downcast_ref::<LibError>() {
                eprintln!("error: {err:#}");
                return ExitCode::from(3);
            }
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn try_run_test(args: &TestArgs) -> anyhow::Result<TestVerdict> {
    let tester: Tester = args.tester.into();
    let config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str::<TesterConfig>(&text)
                .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?
        }
        None => TesterConfig::calibrated(tester),
    };
    config.validate()?;
    let mut rng = RngStream::from_seed(args.seed);

    let mut diag = TestDiagnostics {
        tester: tester.name(),
        n: args.n,
        m: args.m,
        big_k: args.big_k,
        eps: args.eps,
        delta: args.delta,
        k_used: 0,
        seed: args.seed,
        verdict: "",
        z: None,
        threshold: None,
        attempts: None,
        branch: None,
        non_singletons: None,
        p_collisions: None,
        q_collisions: None,
    };

    let verdict = match tester {
        Tester::Closeness => {
            let path_p = need(&args.samples_p, "--samples-p")?;
            let path_q = need(&args.samples_q, "--samples-q")?;
            let pool_p = read_scalar_samples(path_p, args.n)?;
            let pool_q = read_scalar_samples(path_q, args.n)?;
            diag.k_used =
                sample_size_closeness(args.n, args.eps, args.delta, config.budget_constant)?;
            let outcome: ClosenessOutcome = test_closeness_on(
                &pool_p, &pool_q, args.n, args.eps, args.delta, &config, &mut rng,
            )?;
            diag.z = Some(outcome.z);
            diag.threshold = Some(outcome.threshold);
            outcome.verdict
        }
        Tester::Independence | Tester::Collections => {
            let m = args
                .m
                .ok_or_else(|| anyhow::anyhow!("--m is required for {}", tester.name()))?;
            let path = need(&args.samples_p, "--samples-p")?;
            let pool = read_pair_samples(path, args.n, m)?;
            let k = if tester == Tester::Independence {
                sample_size_independence(args.n, m, args.eps, args.delta, config.budget_constant)?
            } else {
                sample_size_collections(args.n, m, args.eps, args.delta, config.budget_constant)?
            };
            diag.k_used = k;
            let need_len = (100 * k) as usize;
            if pool.len() < need_len {
                anyhow::bail!(
                    "{} holds {} samples but the tester needs 100k = {need_len}",
                    path.display(),
                    pool.len()
                );
            }
            let samples = &pool[..need_len];
            let full: FullOutcome = if tester == Tester::Independence {
                full_test_independence_on(
                    samples, args.n, m, args.eps, args.delta, &config, &mut rng,
                )?
            } else {
                full_test_collections_on(
                    samples, args.n, m, args.eps, args.delta, &config, &mut rng,
                )?
            };
            record_basic(&mut diag, &full.last);
            diag.attempts = Some(full.attempts);
            full.verdict
        }
        Tester::Unequal => {
            let big_k = args
                .big_k
                .ok_or_else(|| anyhow::anyhow!("--big-k is required for unequal"))?;
            let path_q = need(&args.samples_q, "--samples-q")?;
            let path_p = need(&args.samples_p, "--samples-p")?;
            let pool_q_all = read_scalar_samples(path_q, args.n)?;
            let pool_p_all = read_scalar_samples(path_p, args.n)?;
            let k = sample_size_unequal(args.n, big_k, args.eps, args.delta, config.budget_constant)?;
            diag.k_used = k;
            let need_q_len = (100 * (k + big_k)) as usize;
            let need_p_len = (100 * k) as usize;
            if pool_q_all.len() < need_q_len || pool_p_all.len() < need_p_len {
                anyhow::bail!(
                    "pools too small: q has {} (needs {need_q_len}), p has {} (needs {need_p_len})",
                    pool_q_all.len(),
                    pool_p_all.len()
                );
            }
            let full = full_test_unequal_on(
                &pool_q_all[..need_q_len],
                &pool_p_all[..need_p_len],
                args.n,
                big_k,
                args.eps,
                args.delta,
                &config,
                &mut rng,
            )?;
            record_basic(&mut diag, &full.last);
            diag.attempts = Some(full.attempts);
            full.verdict
        }
    };

    diag.verdict = match verdict {
        TestVerdict::Yes => "YES",
        TestVerdict::No => "NO",
    };
    println!("{}", diag.verdict);
    println!("{}", serde_json::to_string(&diag)?);
    Ok(verdict)
}

fn record_basic(diag: &mut TestDiagnostics, last: &BasicOutcome) {
    diag.branch = Some(last.branch.name());
    diag.z = last.z;
    if let Some(c) = last.collisions {
        diag.non_singletons = Some(c.non_singletons);
        diag.p_collisions = Some(c.p_collisions);
        diag.q_collisions = Some(c.q_collisions);
    }
}

fn need<'a>(path: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a PathBuf> {
    path.as_ref()
        .ok_or_else(|| anyhow::anyhow!("{flag} is required for this tester"))
}

fn run_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| anyhow::anyhow!("cannot read spec {}: {e}", args.spec.display()))?;
    let spec: ExperimentSpec = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("spec {}: {e}", args.spec.display()))?;
    let result = run_experiment(&spec, args.workers)?;
    let csv = rows_to_csv(&result.rows)?;
    let out = args.out.clone().or_else(|| spec.out.clone());
    match out {
        Some(path) => std::fs::write(&path, csv)
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?,
        None => print!("{csv}"),
    }
    println!("{}", serde_json::to_string(&result.summary)?);
    Ok(())
}

#[derive(Serialize)]
struct HardInstanceDump {
    family: String,
    case: Case,
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<Variant>,
    shape: Shape,
    k: u64,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    big_k: Option<u64>,
    eps: f64,
    seed: u64,
    resamples: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    masses: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    masses_p: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    masses_q: Option<Vec<f64>>,
}

fn run_generate_hard(args: GenerateHardArgs) -> anyhow::Result<()> {
    let case = match args.case.as_str() {
        "completeness" => Case::Completeness,
        "soundness" => Case::Soundness,
        other => anyhow::bail!("unknown case '{other}' (want completeness|soundness)"),
    };
    let policy = if args.strict {
        OutOfRangePolicy::Strict
    } else {
        OutOfRangePolicy::default()
    };
    let mut rng = RngStream::from_seed(args.seed);

    let dump = match args.family.as_str() {
        "independence" => {
            let m = args
                .m
                .ok_or_else(|| anyhow::anyhow!("--m is required for independence"))?;
            let variant = match args.variant.as_deref() {
                Some("first") => Variant::FirstTerm,
                Some("second") => Variant::SecondTerm,
                Some(other) => anyhow::bail!("unknown variant '{other}' (want first|second)"),
                None => anyhow::bail!("--variant is required for independence"),
            };
            let spec = EnsembleSpec {
                case,
                variant,
                n: args.n,
                m,
                k: args.k,
                eps: args.eps,
            };
            let draw = gen_independence_hard(&spec, policy, &mut rng)?;
            HardInstanceDump {
                family: "independence".to_string(),
                case,
                variant: Some(variant),
                shape: draw.value.shape(),
                k: args.k,
                big_k: None,
                eps: args.eps,
                seed: args.seed,
                resamples: draw.resamples,
                masses: Some(draw.value.masses().to_vec()),
                masses_p: None,
                masses_q: None,
            }
        }
        "unequal" => {
            let big_k = args
                .big_k
                .ok_or_else(|| anyhow::anyhow!("--big-k is required for unequal"))?;
            let draw = gen_unequal_hard(args.n, args.k, big_k, args.eps, case, policy, &mut rng)?;
            let (p, q) = draw.value;
            HardInstanceDump {
                family: "unequal".to_string(),
                case,
                variant: None,
                shape: p.shape(),
                k: args.k,
                big_k: Some(big_k),
                eps: args.eps,
                seed: args.seed,
                resamples: draw.resamples,
                masses: None,
                masses_p: Some(p.masses().to_vec()),
                masses_q: Some(q.masses().to_vec()),
            }
        }
        other => anyhow::bail!("unknown hard family '{other}' (want independence|unequal)"),
    };

    let json = serde_json::to_string(&dump)?;
    match &args.out {
        Some(path) => std::fs::write(path, json + "\n")
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn run_calibrate(args: CalibrateArgs) -> anyhow::Result<()> {
    let tester: Tester = args.tester.into();
    let mut grid = Vec::new();
    let ms: Vec<Option<usize>> = if args.grid_m.is_empty() {
        vec![None]
    } else {
        args.grid_m.iter().map(|&m| Some(m)).collect()
    };
    let ks: Vec<Option<u64>> = if args.grid_big_k.is_empty() {
        vec![None]
    } else {
        args.grid_big_k.iter().map(|&k| Some(k)).collect()
    };
    for &n in &args.grid_n {
        for m in &ms {
            for big_k in &ks {
                for &eps in &args.grid_eps {
                    grid.push(GridPoint {
                        n,
                        m: *m,
                        big_k: *big_k,
                        eps,
                    });
                }
            }
        }
    }
    let mut opts = CalibrationOptions::new(tester, grid, args.delta, args.seed);
    opts.validate_reps = args.reps;
    opts.workers = args.workers;

    match calibrate(&opts) {
        Ok(config) => {
            let json = serde_json::to_string_pretty(&config)?;
            if let Some(path) = &args.out {
                std::fs::write(path, json.clone() + "\n")
                    .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
            }
            println!("{json}");
            Ok(())
        }
        Err(report) => {
            let json = serde_json::to_string_pretty(&report)?;
            anyhow::bail!("calibration failed; no constants met the target\n{json}");
        }
    }
}
