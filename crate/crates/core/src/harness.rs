//! Monte Carlo power estimation and the two simulation experiments.
//!
//! Repetition `r` of a configuration samples its data from stream `r` of the
//! configuration's master seed. A permutation test inside that repetition
//! draws its shuffles from a family derived from the same stream. Each
//! repetition reports a reject flag, and the flags are summed as integers.
//! Results are therefore identical for every worker count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Learner;
use crate::error::{Error, Result};
use crate::estimators::{loo_error_with, resub_error_with};
use crate::hypothesis::{
    perm_test_direct, perm_test_method1_with, perm_test_method2_with, split_accuracy_stat_with,
    stat_hotelling, stat_sd, test_hotelling, test_sd, test_split_accuracy_with, PermutationConfig,
    TestOutcome,
};
use crate::model::{
    sample, snr, spec_for_experiment, Direction, ProblemSpec, SeedSpec, TwoSampleData,
};
use crate::numerics::SpdMatrix;
use crate::theory::{
    lda_expected_power, lda_power_approx, minimax_power_lower_bound, Level, PowerQuery, SnrRegime,
};

/// Statistic recomputed by the direct permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermStatistic {
    Hotelling,
    Sd,
    SplitAccuracy,
    LooAccuracy,
    ResubAccuracy,
}

impl PermStatistic {
    pub fn evaluate(&self, data: &TwoSampleData, sigma: &SpdMatrix) -> Result<f64> {
        let lda = Learner::Lda(sigma);
        match self {
            PermStatistic::Hotelling => stat_hotelling(data, sigma),
            PermStatistic::Sd => stat_sd(data),
            PermStatistic::SplitAccuracy => split_accuracy_stat_with(data, lda),
            PermStatistic::LooAccuracy => Ok(loo_error_with(data, lda)?.accuracy()),
            PermStatistic::ResubAccuracy => Ok(resub_error_with(data, lda)?.accuracy()),
        }
    }
}

impl FromStr for PermStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hotelling" => PermStatistic::Hotelling,
            "sd" => PermStatistic::Sd,
            "split-accuracy" => PermStatistic::SplitAccuracy,
            "loo" => PermStatistic::LooAccuracy,
            "resub" => PermStatistic::ResubAccuracy,
            other => {
                return Err(Error::validation(
                    "stat",
                    format!("expected hotelling, sd, split-accuracy, loo or resub, got `{other}`"),
                ))
            }
        })
    }
}

impl fmt::Display for PermStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PermStatistic::Hotelling => "hotelling",
            PermStatistic::Sd => "sd",
            PermStatistic::SplitAccuracy => "split-accuracy",
            PermStatistic::LooAccuracy => "loo",
            PermStatistic::ResubAccuracy => "resub",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermMethod {
    Direct(PermStatistic),
    /// Fixed classifier, relabelled held-out points.
    Method1,
    /// Relabel everything and retrain.
    Method2,
}

impl PermMethod {
    /// Parses `direct`, `1` or `2`; `stat` only matters for `direct`.
    pub fn parse(method: &str, stat: PermStatistic) -> Result<Self> {
        match method {
            "direct" => Ok(PermMethod::Direct(stat)),
            "1" => Ok(PermMethod::Method1),
            "2" => Ok(PermMethod::Method2),
            other => Err(Error::validation(
                "method",
                format!("expected direct, 1 or 2, got `{other}`"),
            )),
        }
    }
}

/// A complete test procedure: statistic plus calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestScheme {
    /// Split-accuracy test with LDA and known covariance.
    SplitAccuracy,
    /// Split-accuracy test with naive Bayes.
    SplitAccuracyNb,
    Hotelling,
    Sd,
    Permutation {
        method: PermMethod,
        permutations: usize,
    },
}

impl TestScheme {
    /// Runs the test; `perm_seed` is only consumed by permutation schemes.
    pub fn run(
        &self,
        data: &TwoSampleData,
        sigma: &SpdMatrix,
        level: Level,
        perm_seed: SeedSpec,
    ) -> Result<TestOutcome> {
        match *self {
            TestScheme::SplitAccuracy => test_split_accuracy_with(data, Learner::Lda(sigma), level),
            TestScheme::SplitAccuracyNb => {
                test_split_accuracy_with(data, Learner::NaiveBayes, level)
            }
            TestScheme::Hotelling => test_hotelling(data, sigma, level),
            TestScheme::Sd => test_sd(data, level),
            TestScheme::Permutation {
                method,
                permutations,
            } => {
                let cfg = PermutationConfig::new(permutations, perm_seed)?;
                match method {
                    PermMethod::Direct(stat) => {
                        perm_test_direct(|d| stat.evaluate(d, sigma), data, &cfg, level)
                    }
                    PermMethod::Method1 => {
                        perm_test_method1_with(data, Learner::Lda(sigma), &cfg, level)
                    }
                    PermMethod::Method2 => {
                        perm_test_method2_with(data, Learner::Lda(sigma), &cfg, level)
                    }
                }
            }
        }
    }
}

impl FromStr for TestScheme {
    type Err = Error;

    /// Analytic schemes only; permutation schemes are built from their parts.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "split-accuracy" => TestScheme::SplitAccuracy,
            "split-accuracy-nb" => TestScheme::SplitAccuracyNb,
            "hotelling" => TestScheme::Hotelling,
            "sd" => TestScheme::Sd,
            other => return Err(Error::validation(
                "scheme",
                format!(
                    "expected split-accuracy, split-accuracy-nb, hotelling or sd, got `{other}`"
                ),
            )),
        })
    }
}

impl fmt::Display for TestScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestScheme::SplitAccuracy => f.write_str("split-accuracy"),
            TestScheme::SplitAccuracyNb => f.write_str("split-accuracy-nb"),
            TestScheme::Hotelling => f.write_str("hotelling"),
            TestScheme::Sd => f.write_str("sd"),
            TestScheme::Permutation {
                method,
                permutations,
            } => match method {
                PermMethod::Direct(stat) => write!(f, "perm-direct-{stat}(P={permutations})"),
                PermMethod::Method1 => write!(f, "perm-method1(P={permutations})"),
                PermMethod::Method2 => write!(f, "perm-method2(P={permutations})"),
            },
        }
    }
}

/// Execution parameters shared by every power estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub reps: usize,
    pub master_seed: u64,
    /// Worker threads; `0` uses all available cores.
    pub workers: usize,
}

impl RunOptions {
    pub const DEFAULT_REPS: usize = 200;

    pub fn new(reps: usize, master_seed: u64, workers: usize) -> Result<Self> {
        if reps == 0 {
            return Err(Error::validation("reps", "need at least one repetition"));
        }
        Ok(Self {
            reps,
            master_seed,
            workers,
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::validation("workers", e.to_string()))
    }
}

/// One row of a power curve. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurvePoint {
    pub d: usize,
    pub n: usize,
    pub psi: f64,
    pub empirical_power: f64,
    pub mc_stderr: f64,
    pub theory_minimax: f64,
    pub theory_lda_approx: f64,
    pub theory_lda_expected: f64,
}

fn require_even_n(n: usize) -> Result<()> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::validation(
            "n",
            format!("must be even and positive, got {n}"),
        ));
    }
    Ok(())
}

fn count_rejections(
    spec: &ProblemSpec,
    scheme: TestScheme,
    level: Level,
    master: u64,
    reps: usize,
) -> Result<usize> {
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let stream = SeedSpec::new(master, r);
            let data = sample(spec, stream);
            let outcome = scheme.run(&data, spec.sigma(), level, stream.substream(0))?;
            Ok(usize::from(outcome.reject))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

fn power_point(
    spec: &ProblemSpec,
    scheme: TestScheme,
    level: Level,
    master: u64,
    reps: usize,
) -> Result<PowerCurvePoint> {
    require_even_n(spec.n())?;
    let rejections = count_rejections(spec, scheme, level, master, reps)?;
    let power = rejections as f64 / reps as f64;
    let psi = snr(spec);
    let query = PowerQuery::new(psi, spec.n(), spec.d(), level)?;
    Ok(PowerCurvePoint {
        d: spec.d(),
        n: spec.n(),
        psi,
        empirical_power: power,
        mc_stderr: (power * (1.0 - power) / reps as f64).sqrt(),
        theory_minimax: minimax_power_lower_bound(&query),
        theory_lda_approx: lda_power_approx(&query, SnrRegime::General),
        theory_lda_expected: lda_expected_power(&query)?,
    })
}

/// Fraction of `opts.reps` repetitions on streams `0..reps` of
/// `opts.master_seed` in which `scheme` rejects, with the theory curves at
/// the spec's signal-to-noise ratio.
pub fn estimate_power(
    spec: &ProblemSpec,
    scheme: TestScheme,
    level: Level,
    opts: &RunOptions,
) -> Result<PowerCurvePoint> {
    opts.pool()?
        .install(|| power_point(spec, scheme, level, opts.master_seed, opts.reps))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub d: usize,
    pub n: usize,
    pub psi: f64,
}

/// A batch of power estimates sharing scheme, level and repetition count.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: Vec<GridPoint>,
    pub reps: usize,
    pub level: Level,
    pub scheme: TestScheme,
    pub master_seed: u64,
    pub direction: Direction,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::validation("reps", "need at least one repetition"));
        }
        if self.grid.is_empty() {
            return Err(Error::validation("grid", "no configurations"));
        }
        for p in &self.grid {
            require_even_n(p.n)?;
            if p.d == 0 {
                return Err(Error::validation("d", "must be positive"));
            }
        }
        Ok(())
    }

    /// Master seed of grid point `index`, so points never share streams.
    pub fn point_seed(&self, index: usize) -> u64 {
        SeedSpec::new(self.master_seed, index as u64)
            .substream(0)
            .master_seed
    }

    /// Estimates power at every grid point in order.
    pub fn run(&self, workers: usize) -> Result<Vec<PowerCurvePoint>> {
        self.validate()?;
        let opts = RunOptions::new(self.reps, self.master_seed, workers)?;
        opts.pool()?.install(|| {
            self.grid
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let spec = spec_for_experiment(p.d, p.n, p.psi, self.direction)?;
                    power_point(
                        &spec,
                        self.scheme,
                        self.level,
                        self.point_seed(i),
                        self.reps,
                    )
                })
                .collect()
        })
    }
}

pub const EXPERIMENT_POINTS: usize = 30;

/// Threshold used by both experiments.
pub fn experiment_level() -> Level {
    Level::from_z(2.0).expect("finite")
}

/// `d = n = 20e` for `e = 1..=30`, `psi = 3 / d^{1/4}`, split-accuracy test
/// at `z = 2`.
pub fn constant_power_config(master_seed: u64, reps: usize) -> ExperimentConfig {
    let grid = (1..=EXPERIMENT_POINTS)
        .map(|e| {
            let d = 20 * e;
            GridPoint {
                d,
                n: d,
                psi: 3.0 / (d as f64).powf(0.25),
            }
        })
        .collect();
    ExperimentConfig {
        grid,
        reps,
        level: experiment_level(),
        scheme: TestScheme::SplitAccuracy,
        master_seed,
        direction: Direction::Uniform,
    }
}

/// Dimension and sample size for each step of the increasing-power sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IncreasingLayout {
    /// `d = n = 20e`, as in the constant-power sweep.
    #[default]
    Coupled,
    /// `d = n` fixed for every `e`.
    FixedD(usize),
}

/// `psi_e = e / (10 d^{1/4})` for `e = 1..=30`, split-accuracy test at `z = 2`.
pub fn increasing_power_config(
    layout: IncreasingLayout,
    master_seed: u64,
    reps: usize,
) -> ExperimentConfig {
    let grid = (1..=EXPERIMENT_POINTS)
        .map(|e| {
            let d = match layout {
                IncreasingLayout::Coupled => 20 * e,
                IncreasingLayout::FixedD(d) => d,
            };
            GridPoint {
                d,
                n: d,
                psi: e as f64 / (10.0 * (d as f64).powf(0.25)),
            }
        })
        .collect();
    ExperimentConfig {
        grid,
        reps,
        level: experiment_level(),
        scheme: TestScheme::SplitAccuracy,
        master_seed,
        direction: Direction::Uniform,
    }
}

pub fn experiment_constant_power(opts: &RunOptions) -> Result<Vec<PowerCurvePoint>> {
    constant_power_config(opts.master_seed, opts.reps).run(opts.workers)
}

pub fn experiment_increasing_power(
    layout: IncreasingLayout,
    opts: &RunOptions,
) -> Result<Vec<PowerCurvePoint>> {
    increasing_power_config(layout, opts.master_seed, opts.reps).run(opts.workers)
}

/// Writes points as CSV with the fixed column order
/// `d,n,psi,empirical_power,mc_stderr,theory_minimax,theory_lda_approx,theory_lda_expected`.
pub fn write_points_csv<W: Write>(points: &[PowerCurvePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if points.is_empty() {
        w.write_record(POINT_COLUMNS)?;
    }
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub const POINT_COLUMNS: [&str; 8] = [
    "d",
    "n",
    "psi",
    "empirical_power",
    "mc_stderr",
    "theory_minimax",
    "theory_lda_approx",
    "theory_lda_expected",
];

/// Rank correlation with average ranks for ties; `NaN` when either side is
/// constant.
pub fn spearman_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "samples must have equal length");
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean).powi(2);
        vb += (y - mean).powi(2);
    }
    cov / (va * vb).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}
