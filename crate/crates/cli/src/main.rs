//! `bdb`: fit, apply and analyze uncertainty-aware decision boundaries.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use bdb_core::binning::{fit_equi_span_full, fit_equi_weight_full, BinningSpec, Scheme};
use bdb_core::boundary::{fit_boundary, pr_sweep, Algorithm, FittedBoundary};
use bdb_core::dataset::Dataset;
use bdb_core::metrics::{calibrate, test_eval};
use bdb_core::simulate::{generate, GeneratorConfig};
use bdb_core::theory::{bias_curve, score_grid, TheoryParams};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::output::{write_atomic, write_csv_rows};

/// Exit status when the precision bound cannot be met.
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Debug, Parser, Serialize)]
#[command(name = "bdb", version, about = "Uncertainty-aware decision boundaries")]
struct Cli {
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    #[serde(skip)]
    dump_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Generate synthetic train/test data with a known estimation bias.
    Simulate(SimulateArgs),
    /// Fit a grid partitioner and write per-bin counts.
    Bin(BinArgs),
    /// Fit a decision boundary under a precision bound.
    Fit(FitArgs),
    /// Apply a fitted boundary to labeled data.
    Eval(EvalArgs),
    /// Precision/recall sweep over several precision bounds.
    Sweep(SweepArgs),
    /// Expected test positivity against model score from theory.
    Bias(BiasArgs),
    /// Compare per-level (MIST) and global (IST) isotonic calibration.
    Calibrate(CalibrateArgs),
    /// Split a dataset into hold-out and test parts.
    Split(SplitArgs),
}

#[derive(Debug, Args, Serialize)]
struct GridArgs {
    #[arg(long, env = "BDB_BINNING", default_value = "equi-weight")]
    binning: Scheme,
    /// Uncertainty levels.
    #[arg(short = 'k', long = "k", env = "BDB_K", default_value_t = 3)]
    k: usize,
    /// Score bins per level.
    #[arg(short = 'l', long = "l", env = "BDB_L", default_value_t = 500)]
    l: usize,
}

impl GridArgs {
    fn spec(&self) -> anyhow::Result<BinningSpec> {
        Ok(BinningSpec::new(self.binning, self.k, self.l)?)
    }
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Directory receiving train.csv, test.csv and truth.csv.
    #[arg(long, env = "BDB_OUT_DIR")]
    out_dir: PathBuf,
    #[arg(long, env = "BDB_REGIONS", default_value_t = 10_000)]
    regions: usize,
    /// Train samples per region (upper end when --train-samples-min is set).
    #[arg(long, env = "BDB_TRAIN_SAMPLES", default_value_t = 40)]
    train_samples: u64,
    /// Lower end of a uniform per-region train size.
    #[arg(long, env = "BDB_TRAIN_SAMPLES_MIN")]
    train_samples_min: Option<u64>,
    #[arg(long, env = "BDB_TEST_SAMPLES", default_value_t = 20)]
    test_samples: u64,
    #[arg(long, env = "BDB_BETA1_T", default_value_t = 1.0)]
    beta1_t: f64,
    #[arg(long, env = "BDB_BETA0_T", default_value_t = 3.0)]
    beta0_t: f64,
    #[arg(long, env = "BDB_BETA1_P", default_value_t = 1.0)]
    beta1_p: f64,
    #[arg(long, env = "BDB_BETA0_P", default_value_t = 1.0)]
    beta0_p: f64,
    #[arg(long, env = "BDB_TAU", default_value_t = 3.0)]
    tau: f64,
    #[arg(long, env = "BDB_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct BinArgs {
    #[arg(long, env = "BDB_INPUT")]
    input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    /// JSON file with the partitioner and per-bin counts.
    #[arg(long, env = "BDB_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long, env = "BDB_INPUT")]
    input: PathBuf,
    #[arg(long, env = "BDB_ALGO", default_value = "ew-dpmt")]
    algo: Algorithm,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[arg(long, env = "BDB_SIGMA", value_parser = parse_sigma)]
    sigma: f64,
    /// Boundary JSON.
    #[arg(long, env = "BDB_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Boundary JSON written by `fit`.
    #[arg(long, env = "BDB_BOUNDARY")]
    boundary: PathBuf,
    #[arg(long, env = "BDB_INPUT")]
    input: PathBuf,
    /// Also write the metrics as JSON.
    #[arg(long, env = "BDB_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long, env = "BDB_INPUT")]
    input: PathBuf,
    #[arg(long, env = "BDB_ALGO", default_value = "ew-dpmt")]
    algo: Algorithm,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[arg(
        long,
        env = "BDB_SIGMAS",
        value_delimiter = ',',
        value_parser = parse_sigma,
        default_value = "0.6,0.7,0.8,0.9"
    )]
    sigmas: Vec<f64>,
    #[arg(long, env = "BDB_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct BiasArgs {
    #[arg(long, env = "BDB_OMEGA", default_value_t = 0.5)]
    omega: f64,
    #[arg(long, env = "BDB_XI", default_value_t = 0.25)]
    xi: f64,
    #[arg(long, env = "BDB_NU", default_value_t = 1.0)]
    nu: f64,
    #[arg(long, env = "BDB_TAUS", value_delimiter = ',', default_value = "1,3")]
    taus: Vec<f64>,
    #[arg(
        long,
        env = "BDB_GAMMAS",
        value_delimiter = ',',
        default_value = "0.1,0.5,1,2"
    )]
    gammas: Vec<f64>,
    /// Evidence pseudo-count total n.
    #[arg(long, env = "BDB_N_EVIDENCE", default_value_t = 50.0)]
    n_evidence: f64,
    /// Scores per curve, evenly spaced inside the valid range.
    #[arg(long, env = "BDB_POINTS", default_value_t = 50)]
    points: usize,
    #[arg(long, env = "BDB_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CalibrateArgs {
    /// Data the calibrators are fitted on.
    #[arg(long, env = "BDB_HOLD")]
    hold: PathBuf,
    /// Data the errors are measured on.
    #[arg(long, env = "BDB_TEST")]
    test: PathBuf,
    #[arg(short = 'k', long = "k", env = "BDB_K", default_value_t = 3)]
    k: usize,
    #[arg(short = 'l', long = "l", env = "BDB_L", default_value_t = 10)]
    l: usize,
    #[arg(long, env = "BDB_OUT")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SplitArgs {
    #[arg(long, env = "BDB_INPUT")]
    input: PathBuf,
    #[arg(long, env = "BDB_HOLD_FRACTION", default_value_t = 0.5)]
    hold_fraction: f64,
    #[arg(long, env = "BDB_TEST_FRACTION", default_value_t = 0.5)]
    test_fraction: f64,
    #[arg(long, env = "BDB_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "BDB_OUT_HOLD")]
    out_hold: PathBuf,
    #[arg(long, env = "BDB_OUT_TEST")]
    out_test: PathBuf,
}

fn parse_sigma(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("sigma must be in (0, 1], got {v}"))
    }
}

fn load(path: &Path) -> anyhow::Result<Dataset> {
    Dataset::load_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    Ok(text)
}

fn dataset_bytes(d: &Dataset) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    d.write_csv(&mut buf)?;
    Ok(buf)
}

fn simulate(a: &SimulateArgs) -> anyhow::Result<ExitCode> {
    let cfg = GeneratorConfig {
        n_regions: a.regions,
        samples_per_region_train: a.train_samples,
        samples_per_region_train_min: a.train_samples_min,
        samples_per_region_test: a.test_samples,
        beta1_t: a.beta1_t,
        beta0_t: a.beta0_t,
        beta1_p: a.beta1_p,
        beta0_p: a.beta0_p,
        tau: a.tau,
        seed: a.seed,
    };
    let g = generate(&cfg)?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    write_atomic(&a.out_dir.join("train.csv"), &dataset_bytes(&g.train)?)?;
    write_atomic(&a.out_dir.join("test.csv"), &dataset_bytes(&g.test)?)?;
    write_csv_rows(&a.out_dir.join("truth.csv"), &g.truth)?;
    println!(
        "{} regions: {} train samples ({} positive), {} test samples ({} positive)",
        g.truth.len(),
        g.train.n_total(),
        g.train.n_positive(),
        g.test.n_total(),
        g.test.n_positive()
    );
    Ok(ExitCode::SUCCESS)
}

fn bin(a: &BinArgs) -> anyhow::Result<ExitCode> {
    let d = load(&a.input)?;
    let fitted = match a.grid.binning {
        Scheme::EquiWeight => fit_equi_weight_full(&d, a.grid.k, a.grid.l)?,
        Scheme::EquiSpan => fit_equi_span_full(&d, a.grid.k, a.grid.l)?,
    };
    write_atomic(&a.out, &to_json(&fitted)?)?;
    let (lo, hi) = fitted.grid.size_range();
    println!(
        "{}x{} grid over {} samples; bin sizes {lo}..={hi}",
        fitted.grid.k(),
        fitted.grid.l(),
        fitted.grid.total()
    );
    Ok(ExitCode::SUCCESS)
}

fn check_algorithm(algo: Algorithm, binning: Scheme) -> anyhow::Result<()> {
    if algo == Algorithm::EwDpmt && binning != Scheme::EquiWeight {
        bail!("ew-dpmt needs an equi-weight grid; use vw-dpmt for {binning}");
    }
    if algo == Algorithm::BruteForce {
        bail!("brute-force is a test oracle; choose st, gmt, mist, ew-dpmt or vw-dpmt");
    }
    Ok(())
}

fn fit(a: &FitArgs) -> anyhow::Result<ExitCode> {
    check_algorithm(a.algo, a.grid.binning)?;
    let d = load(&a.input)?;
    let outcome = fit_boundary(&d, a.algo, a.grid.spec()?, a.sigma)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let s = &outcome.boundary.solution;
    if !s.feasible {
        eprintln!(
            "infeasible: no region of the {}x{} grid reaches precision {}",
            outcome.grid.k(),
            outcome.grid.l(),
            a.sigma
        );
        return Ok(ExitCode::from(EXIT_INFEASIBLE));
    }
    write_atomic(
        &a.out,
        format!("{}\n", outcome.boundary.to_json()?).as_bytes(),
    )?;
    println!("algorithm   {}", s.algorithm);
    println!("sigma       {}", s.sigma);
    println!("thresholds  {:?}", s.thresholds);
    println!("selected    {} samples, {} positive", s.selected_n, s.tp);
    println!("precision   {:.6}", s.precision_fit);
    println!("recall      {:.6}", s.recall_fit);
    Ok(ExitCode::SUCCESS)
}

fn eval(a: &EvalArgs) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(&a.boundary)
        .with_context(|| format!("reading {}", a.boundary.display()))?;
    let boundary = FittedBoundary::from_json(&text)
        .with_context(|| format!("parsing {}", a.boundary.display()))?;
    let d = load(&a.input)?;
    let metrics = test_eval(&boundary, &d);
    let json = to_json(&metrics)?;
    if let Some(out) = &a.out {
        write_atomic(out, &json)?;
    }
    print!("{}", String::from_utf8(json)?);
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SweepRow {
    sigma: f64,
    bins: usize,
    tp: u64,
    selected_n: u64,
    precision: f64,
    recall: f64,
    feasible: bool,
    thresholds: String,
}

fn sweep(a: &SweepArgs) -> anyhow::Result<ExitCode> {
    check_algorithm(a.algo, a.grid.binning)?;
    let d = load(&a.input)?;
    let spec = a.grid.spec()?;
    // ST reuses the collapsed score-only grid of `fit`
    let grid = fit_boundary(&d, a.algo, spec, a.sigmas[0])?.grid;
    let rows: Vec<SweepRow> = pr_sweep(&grid, a.algo, &a.sigmas)?
        .into_iter()
        .map(|p| SweepRow {
            sigma: p.sigma,
            bins: p.bins,
            tp: p.tp,
            selected_n: p.selected_n,
            precision: p.precision,
            recall: p.recall,
            feasible: p.feasible,
            thresholds: p
                .thresholds
                .iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        })
        .collect();
    write_csv_rows(&a.out, &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn bias(a: &BiasArgs) -> anyhow::Result<ExitCode> {
    let mut rows = Vec::new();
    for &tau in &a.taus {
        for &gamma in &a.gammas {
            let p = TheoryParams::new(a.omega, a.xi, a.nu, tau, gamma, a.n_evidence)?;
            rows.extend(bias_curve(&p, &score_grid(a.omega, gamma, a.points))?);
        }
    }
    write_csv_rows(&a.out, &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn calibrate_cmd(a: &CalibrateArgs) -> anyhow::Result<ExitCode> {
    let hold = load(&a.hold)?;
    let test = load(&a.test)?;
    let report = calibrate(&hold, &test, a.k, a.l)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_atomic(&a.out, &buf)?;
    Ok(ExitCode::SUCCESS)
}

fn split(a: &SplitArgs) -> anyhow::Result<ExitCode> {
    let d = load(&a.input)?;
    let (hold, test) = d.split(a.hold_fraction, a.test_fraction, a.seed)?;
    write_atomic(&a.out_hold, &dataset_bytes(&hold)?)?;
    write_atomic(&a.out_test, &dataset_bytes(&test)?)?;
    println!("{} hold-out, {} test samples", hold.len(), test.len());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    if cli.dump_config {
        print!("{}", String::from_utf8(to_json(&cli.command)?)?);
        return Ok(ExitCode::SUCCESS);
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Bin(a) => bin(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Bias(a) => bias(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Split(a) => split(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
