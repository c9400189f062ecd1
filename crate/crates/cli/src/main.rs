mod sigma;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use serde::Serialize;
use twosample_core::{
    constant_power_config, estimate_power, increasing_power_config, lda_expected_power,
    lda_power_approx, low_snr_power, minimax_power_lower_bound, write_points_csv, Direction,
    IncreasingLayout, Level, PermMethod, PermStatistic, PowerCurvePoint, PowerQuery, ProblemSpec,
    RunOptions, SeedSpec, SnrRegime, SpdMatrix, TestOutcome, TestScheme, TwoSampleData,
};

use crate::sigma::SigmaSource;

#[derive(Parser, Debug)]
#[command(
    name = "twosample",
    version,
    about = "Two-sample mean tests, power curves and simulation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one analytic test on a labelled CSV dataset
    Test(TestArgs),
    /// Run a permutation test on a labelled CSV dataset
    Perm(PermArgs),
    /// Estimate power for one configuration by simulation
    Power(PowerArgs),
    /// Evaluate the closed-form power curves over a grid
    Theory(TheoryArgs),
    /// Rerun one of the two simulation experiments
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug)]
struct LevelArgs {
    /// Significance level [default: 0.05]
    #[arg(long, conflicts_with = "z_alpha")]
    alpha: Option<f64>,

    /// Rejection threshold; sets alpha = Φ(−z)
    #[arg(long = "z-alpha")]
    z_alpha: Option<f64>,
}

impl LevelArgs {
    fn level(&self, default: Level) -> Result<Level> {
        Ok(match (self.alpha, self.z_alpha) {
            (Some(a), _) => Level::from_alpha(a)?,
            (None, Some(z)) => Level::from_z(z)?,
            (None, None) => default,
        })
    }
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,

    /// Emit JSON instead of CSV
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Dataset with columns f0..f{d-1},label
    #[arg(long)]
    input: PathBuf,

    /// split-accuracy, split-accuracy-nb, hotelling or sd
    #[arg(long, default_value = "split-accuracy")]
    scheme: TestScheme,

    /// identity, diagonal:<path> or dense:<path>
    #[arg(long, default_value = "identity")]
    sigma: SigmaSource,

    #[command(flatten)]
    level: LevelArgs,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct PermArgs {
    #[arg(long)]
    input: PathBuf,

    /// direct, 1 (fixed classifier) or 2 (retrain)
    #[arg(long, default_value = "2")]
    method: String,

    /// Statistic for --method direct: hotelling, sd, split-accuracy, loo or resub
    #[arg(long, default_value = "hotelling")]
    stat: PermStatistic,

    /// Number of permutations
    #[arg(long = "P", default_value_t = 199)]
    permutations: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    workers: usize,

    #[arg(long, default_value = "identity")]
    sigma: SigmaSource,

    #[command(flatten)]
    level: LevelArgs,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[arg(long)]
    d: usize,

    /// Per-class sample size (even)
    #[arg(long)]
    n: usize,

    /// Signal-to-noise ratio
    #[arg(long)]
    psi: f64,

    #[arg(long, default_value = "split-accuracy")]
    scheme: TestScheme,

    /// Use a permutation test instead of --scheme: direct, 1 or 2
    #[arg(long)]
    method: Option<String>,

    #[arg(long, default_value = "hotelling")]
    stat: PermStatistic,

    #[arg(long = "P", default_value_t = 199)]
    permutations: usize,

    /// Monte Carlo repetitions
    #[arg(long, default_value_t = RunOptions::DEFAULT_REPS)]
    reps: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 0)]
    workers: usize,

    /// Mean shift direction: uniform or first-axis
    #[arg(long, default_value = "uniform")]
    direction: Direction,

    #[arg(long, default_value = "identity")]
    sigma: SigmaSource,

    #[command(flatten)]
    level: LevelArgs,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    /// Dimensions, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    d: Vec<usize>,

    /// Per-class sample sizes, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,

    /// Signal-to-noise ratios, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    psi: Vec<f64>,

    #[command(flatten)]
    level: LevelArgs,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Experiment {
    ConstantPower,
    IncreasingPower,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    experiment: Experiment,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = RunOptions::DEFAULT_REPS)]
    reps: usize,

    #[arg(long, default_value_t = 0)]
    workers: usize,

    /// Increasing-power only: hold d = n fixed instead of d = n = 20e
    #[arg(long, num_args = 0..=1, default_missing_value = "100", value_name = "D")]
    fixed_d: Option<usize>,

    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Serialize)]
struct OutcomeRow {
    scheme: String,
    statistic: f64,
    threshold: f64,
    reject: bool,
    p_value: f64,
    alpha: f64,
}

impl OutcomeRow {
    fn new(outcome: &TestOutcome, scheme: String) -> Self {
        Self {
            scheme,
            statistic: outcome.statistic,
            threshold: outcome.threshold,
            reject: outcome.reject,
            p_value: outcome.p_value,
            alpha: outcome.alpha,
        }
    }
}

#[derive(Serialize)]
struct TheoryRow {
    d: usize,
    n: usize,
    psi: f64,
    alpha: f64,
    z_alpha: f64,
    minimax: f64,
    low_snr: f64,
    lda_approx: f64,
    lda_approx_low_snr: f64,
    /// Empty for odd `n`.
    lda_expected: Option<f64>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    created_unix_secs: u64,
    args: &'a [String],
}

fn default_level() -> Level {
    Level::from_alpha(0.05).expect("valid level")
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Timestamps go to `<out>.meta.json` so the data file itself is a pure
/// function of the arguments.
fn write_sidecar(out: &Path) -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        created_unix_secs: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        args: &args,
    };
    let mut path = out.as_os_str().to_owned();
    path.push(".meta.json");
    let file = File::create(&path)
        .with_context(|| format!("cannot create {}", Path::new(&path).display()))?;
    serde_json::to_writer_pretty(file, &meta)?;
    Ok(())
}

fn emit<T: Serialize>(rows: &[T], output: &OutputArgs) -> Result<()> {
    let mut w = open_output(output.out.as_deref())?;
    if output.json {
        serde_json::to_writer_pretty(&mut w, rows)?;
        writeln!(w)?;
    } else {
        let mut csv = csv::Writer::from_writer(&mut w);
        for row in rows {
            csv.serialize(row)?;
        }
        csv.flush()?;
    }
    w.flush()?;
    if let Some(out) = &output.out {
        write_sidecar(out)?;
    }
    Ok(())
}

fn emit_points(points: &[PowerCurvePoint], output: &OutputArgs) -> Result<()> {
    if output.json {
        return emit(points, output);
    }
    let mut w = open_output(output.out.as_deref())?;
    write_points_csv(points, &mut w)?;
    w.flush()?;
    if let Some(out) = &output.out {
        write_sidecar(out)?;
    }
    Ok(())
}

fn load_data(path: &Path) -> Result<TwoSampleData> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    TwoSampleData::read_csv(file).with_context(|| format!("cannot read dataset {}", path.display()))
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("cannot start worker threads")
}

fn run_test(args: TestArgs) -> Result<()> {
    let data = load_data(&args.input)?;
    let sigma = args.sigma.load(data.d())?;
    let level = args.level.level(default_level())?;
    let outcome = args.scheme.run(&data, &sigma, level, SeedSpec::default())?;
    emit(
        &[OutcomeRow::new(&outcome, args.scheme.to_string())],
        &args.output,
    )
}

fn run_perm(args: PermArgs) -> Result<()> {
    let data = load_data(&args.input)?;
    let sigma = args.sigma.load(data.d())?;
    let level = args.level.level(default_level())?;
    let scheme = TestScheme::Permutation {
        method: PermMethod::parse(&args.method, args.stat)?,
        permutations: args.permutations,
    };
    let seed = SeedSpec::new(args.seed, 0);
    let outcome = worker_pool(args.workers)?.install(|| scheme.run(&data, &sigma, level, seed))?;
    emit(
        &[OutcomeRow::new(&outcome, outcome.kind.name().to_string())],
        &args.output,
    )
}

/// Means `0` and `-psi u / |u|_Σ`, so the signal-to-noise ratio is `psi`.
fn spec_with_covariance(args: &PowerArgs, sigma: SpdMatrix) -> Result<ProblemSpec> {
    let mut u = Array1::zeros(args.d);
    match args.direction {
        Direction::Uniform => u.fill(1.0),
        Direction::FirstAxis => u[0] = 1.0,
    }
    let scale = sigma.inv_quad(u.view())?.sqrt();
    let mu1 = u.mapv(|v: f64| -args.psi * v / scale);
    Ok(ProblemSpec::new(args.n, Array1::zeros(args.d), mu1, sigma)?)
}

fn run_power(args: PowerArgs) -> Result<()> {
    if !(args.psi >= 0.0 && args.psi.is_finite()) {
        bail!("psi: must be finite and >= 0, got {}", args.psi);
    }
    if args.d == 0 {
        bail!("d: must be positive");
    }
    let sigma = args.sigma.load(args.d)?;
    let spec = spec_with_covariance(&args, sigma)?;
    let scheme = match &args.method {
        Some(m) => TestScheme::Permutation {
            method: PermMethod::parse(m, args.stat)?,
            permutations: args.permutations,
        },
        None => args.scheme,
    };
    let level = args.level.level(default_level())?;
    let opts = RunOptions::new(args.reps, args.seed, args.workers)?;
    let point = estimate_power(&spec, scheme, level, &opts)?;
    emit_points(&[point], &args.output)
}

fn run_theory(args: TheoryArgs) -> Result<()> {
    let level = args.level.level(default_level())?;
    let mut rows = Vec::new();
    for &d in &args.d {
        for &n in &args.n {
            for &psi in &args.psi {
                let q = PowerQuery::new(psi, n, d, level)?;
                rows.push(TheoryRow {
                    d,
                    n,
                    psi,
                    alpha: level.alpha(),
                    z_alpha: level.z(),
                    minimax: minimax_power_lower_bound(&q),
                    low_snr: low_snr_power(&q),
                    lda_approx: lda_power_approx(&q, SnrRegime::General),
                    lda_approx_low_snr: lda_power_approx(&q, SnrRegime::LowSnr),
                    lda_expected: lda_expected_power(&q).ok(),
                });
            }
        }
    }
    emit(&rows, &args.output)
}

fn run_reproduce(args: ReproduceArgs) -> Result<()> {
    let config = match (args.experiment, args.fixed_d) {
        (Experiment::ConstantPower, Some(_)) => bail!("fixed-d: only applies to increasing-power"),
        (Experiment::ConstantPower, None) => constant_power_config(args.seed, args.reps),
        (Experiment::IncreasingPower, fixed) => {
            let layout = fixed.map_or(IncreasingLayout::Coupled, IncreasingLayout::FixedD);
            increasing_power_config(layout, args.seed, args.reps)
        }
    };
    let points = config.run(args.workers)?;
    emit_points(&points, &args.output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(a) => run_test(a),
        Command::Perm(a) => run_perm(a),
        Command::Power(a) => run_power(a),
        Command::Theory(a) => run_theory(a),
        Command::Reproduce(a) => run_reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
