//! Test statistics, their analytic calibrations and the permutation
//! protocols.
//!
//! Permutation p-values use `(1 + #{T_p >= T*}) / (P + 1)`, so ties count
//! against rejection and the test is exact under exchangeability. Each
//! permutation draws its shuffle from its own seeded stream, and the
//! permuted statistics are reduced by counting. The outcome therefore does
//! not depend on evaluation order or thread count.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::classifier::{pooled_feature_variance, require_two_per_class, Learner};
use crate::error::{Error, Result};
use crate::estimators::{
    evaluate, require_split_size, split_error_with, split_fit, EstimatorScheme,
};
use crate::model::{SeedSpec, TwoSampleData};
use crate::numerics::{cdf, SpdMatrix};
use crate::theory::Level;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    SplitAccuracy,
    Hotelling,
    Sd,
    PermDirect,
    PermMethod1,
    PermMethod2,
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestKind::SplitAccuracy => "split-accuracy",
            TestKind::Hotelling => "hotelling",
            TestKind::Sd => "sd",
            TestKind::PermDirect => "perm-direct",
            TestKind::PermMethod1 => "perm-method1",
            TestKind::PermMethod2 => "perm-method2",
        }
    }

    pub fn is_permutation(&self) -> bool {
        matches!(
            self,
            TestKind::PermDirect | TestKind::PermMethod1 | TestKind::PermMethod2
        )
    }
}

/// Result of one test invocation. For every kind, `reject` holds exactly
/// when `statistic > threshold`. For permutation tests it also holds exactly
/// when `p_value <= alpha`. In that case `threshold` is the permuted value
/// the observed statistic has to beat, or `+inf` when `P` is too small to
/// reach the level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    pub p_value: f64,
    pub alpha: f64,
    pub kind: TestKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationConfig {
    pub permutations: usize,
    pub seed: SeedSpec,
}

impl PermutationConfig {
    pub const DEFAULT_PERMUTATIONS: usize = 199;

    pub fn new(permutations: usize, seed: SeedSpec) -> Result<Self> {
        if permutations == 0 {
            return Err(Error::validation("P", "need at least one permutation"));
        }
        Ok(Self { permutations, seed })
    }

    /// Shuffle of `0..len` for permutation number `index`.
    fn shuffle(&self, index: usize, len: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut self.seed.substream(index as u64).rng());
        order
    }
}

fn split_data(rows: &Array2<f64>, first: &[usize], second: &[usize]) -> TwoSampleData {
    TwoSampleData::from_parts(rows.select(Axis(0), first), rows.select(Axis(0), second))
}

/// `sqrt(2n) (1/2 − Ê)` with `Ê` the sample-splitting error of LDA and `n`
/// the full per-class size.
pub fn stat_split_accuracy(data: &TwoSampleData, sigma: &SpdMatrix) -> Result<f64> {
    split_accuracy_stat_with(data, Learner::Lda(sigma))
}

pub fn split_accuracy_stat_with(data: &TwoSampleData, learner: Learner<'_>) -> Result<f64> {
    let est = split_error_with(data, learner)?;
    Ok((2.0 * data.n() as f64).sqrt() * (0.5 - est.e_hat))
}

/// Rejects when the split-accuracy statistic exceeds `z_alpha`; the p-value
/// is `Φ(−T)`.
pub fn test_split_accuracy(
    data: &TwoSampleData,
    sigma: &SpdMatrix,
    level: Level,
) -> Result<TestOutcome> {
    test_split_accuracy_with(data, Learner::Lda(sigma), level)
}

pub fn test_split_accuracy_with(
    data: &TwoSampleData,
    learner: Learner<'_>,
    level: Level,
) -> Result<TestOutcome> {
    let statistic = split_accuracy_stat_with(data, learner)?;
    Ok(TestOutcome {
        statistic,
        threshold: level.z(),
        reject: statistic > level.z(),
        p_value: cdf(-statistic),
        alpha: level.alpha(),
        kind: TestKind::SplitAccuracy,
    })
}

fn mean_difference(data: &TwoSampleData) -> ndarray::Array1<f64> {
    data.x().mean_axis(Axis(0)).expect("nonempty") - data.y().mean_axis(Axis(0)).expect("nonempty")
}

/// `(μ̂0 − μ̂1)ᵀ Σ⁻¹ (μ̂0 − μ̂1)` for known `Σ`.
pub fn stat_hotelling(data: &TwoSampleData, sigma: &SpdMatrix) -> Result<f64> {
    if sigma.dim() != data.d() {
        return Err(Error::DimensionMismatch {
            context: "covariance vs data",
            expected: data.d(),
            actual: sigma.dim(),
        });
    }
    Ok(sigma.inv_quad(mean_difference(data).view())?.max(0.0))
}

/// `(μ̂0 − μ̂1)ᵀ D⁻¹ (μ̂0 − μ̂1)` where `D` holds the pooled per-feature
/// variances.
pub fn stat_sd(data: &TwoSampleData) -> Result<f64> {
    let (x, y) = (data.x(), data.y());
    require_two_per_class(x, y)?;
    let m0 = x.mean_axis(Axis(0)).expect("nonempty");
    let m1 = y.mean_axis(Axis(0)).expect("nonempty");
    let var = pooled_feature_variance(x, y, &m0, &m1)?;
    Ok(m0
        .iter()
        .zip(&m1)
        .zip(&var)
        .map(|((a, b), v)| (a - b) * (a - b) / v)
        .sum())
}

fn chi_square_outcome(scaled: f64, d: usize, level: Level, kind: TestKind) -> TestOutcome {
    let chi = ChiSquared::new(d as f64).expect("d >= 1");
    let threshold = chi.inverse_cdf(1.0 - level.alpha());
    TestOutcome {
        statistic: scaled,
        threshold,
        reject: scaled > threshold,
        p_value: chi.sf(scaled),
        alpha: level.alpha(),
        kind,
    }
}

/// Hotelling test with known covariance. Under the null `(n/2) T_H` is
/// exactly chi-square with `d` degrees of freedom; that scaled value is the
/// reported statistic.
pub fn test_hotelling(
    data: &TwoSampleData,
    sigma: &SpdMatrix,
    level: Level,
) -> Result<TestOutcome> {
    let scaled = data.n() as f64 / 2.0 * stat_hotelling(data, sigma)?;
    Ok(chi_square_outcome(
        scaled,
        data.d(),
        level,
        TestKind::Hotelling,
    ))
}

/// Diagonal-covariance test using the same chi-square calibration as
/// [`test_hotelling`], which is asymptotically right when features are
/// independent. Prefer [`perm_test_direct`] with [`stat_sd`] for correlated
/// features.
pub fn test_sd(data: &TwoSampleData, level: Level) -> Result<TestOutcome> {
    let scaled = data.n() as f64 / 2.0 * stat_sd(data)?;
    Ok(chi_square_outcome(scaled, data.d(), level, TestKind::Sd))
}

fn permutation_outcome(
    observed: f64,
    permuted: &[f64],
    level: Level,
    kind: TestKind,
) -> TestOutcome {
    let p = permuted.len();
    let at_least = permuted.iter().filter(|&&t| t >= observed).count();
    let total = (p + 1) as f64;
    let p_value = (1 + at_least) as f64 / total;
    // Largest count of permuted values >= T* that still rejects is k - 1.
    let k = (0..=p)
        .take_while(|&c| (1 + c) as f64 / total <= level.alpha())
        .count();
    let threshold = if k == 0 {
        f64::INFINITY
    } else {
        let mut sorted = permuted.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted[k - 1]
    };
    TestOutcome {
        statistic: observed,
        threshold,
        reject: p_value <= level.alpha(),
        p_value,
        alpha: level.alpha(),
        kind,
    }
}

fn permuted_statistics<F>(count: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}

/// Direct permutation test: pools all `2n` rows, reassigns them to two
/// groups of `n` at random and recomputes `stat`. Larger statistics are
/// evidence against the null.
pub fn perm_test_direct<F>(
    stat: F,
    data: &TwoSampleData,
    cfg: &PermutationConfig,
    level: Level,
) -> Result<TestOutcome>
where
    F: Fn(&TwoSampleData) -> Result<f64> + Sync,
{
    let observed = stat(data)?;
    let pooled = data.pooled();
    let n = data.n();
    let permuted = permuted_statistics(cfg.permutations, |p| {
        let order = cfg.shuffle(p, 2 * n);
        stat(&split_data(&pooled, &order[..n], &order[n..]))
    })?;
    Ok(permutation_outcome(
        observed,
        &permuted,
        level,
        TestKind::PermDirect,
    ))
}

/// Method 1: the classifier trained on the first halves stays fixed; only
/// the pooled held-out rows are relabelled.
pub fn perm_test_method1(
    data: &TwoSampleData,
    sigma: &SpdMatrix,
    cfg: &PermutationConfig,
    level: Level,
) -> Result<TestOutcome> {
    perm_test_method1_with(data, Learner::Lda(sigma), cfg, level)
}

pub fn perm_test_method1_with(
    data: &TwoSampleData,
    learner: Learner<'_>,
    cfg: &PermutationConfig,
    level: Level,
) -> Result<TestOutcome> {
    let half = require_split_size(data.n())?;
    method1(
        data,
        learner,
        cfg.permutations,
        |p| cfg.shuffle(p, 2 * half),
        level,
    )
}

fn method1<S>(
    data: &TwoSampleData,
    learner: Learner<'_>,
    permutations: usize,
    shuffle: S,
    level: Level,
) -> Result<TestOutcome>
where
    S: Fn(usize) -> Vec<usize> + Sync,
{
    let (clf, est) = split_fit(data, learner)?;
    let half = est.eval_count_per_class;
    let held_out = held_out_rows(data.x(), data.y(), half);
    let permuted = permuted_statistics(permutations, |p| {
        let order = shuffle(p);
        let xp = held_out.select(Axis(0), &order[..half]);
        let yp = held_out.select(Axis(0), &order[half..]);
        Ok(evaluate(&clf, xp.view(), yp.view(), EstimatorScheme::Split).accuracy())
    })?;
    Ok(permutation_outcome(
        est.accuracy(),
        &permuted,
        level,
        TestKind::PermMethod1,
    ))
}

fn held_out_rows(x: ArrayView2<f64>, y: ArrayView2<f64>, half: usize) -> Array2<f64> {
    concatenate(Axis(0), &[x.slice(s![half.., ..]), y.slice(s![half.., ..])])
        .expect("class shapes are equal")
}

/// Method 2: every permutation relabels all `2n` rows and retrains from
/// scratch, so the whole train-then-evaluate procedure is calibrated.
pub fn perm_test_method2(
    data: &TwoSampleData,
    sigma: &SpdMatrix,
    cfg: &PermutationConfig,
    level: Level,
) -> Result<TestOutcome> {
    perm_test_method2_with(data, Learner::Lda(sigma), cfg, level)
}

pub fn perm_test_method2_with(
    data: &TwoSampleData,
    learner: Learner<'_>,
    cfg: &PermutationConfig,
    level: Level,
) -> Result<TestOutcome> {
    let n = data.n();
    require_split_size(n)?;
    method2(
        data,
        learner,
        cfg.permutations,
        |p| cfg.shuffle(p, 2 * n),
        level,
    )
}

fn method2<S>(
    data: &TwoSampleData,
    learner: Learner<'_>,
    permutations: usize,
    shuffle: S,
    level: Level,
) -> Result<TestOutcome>
where
    S: Fn(usize) -> Vec<usize> + Sync,
{
    let observed = split_error_with(data, learner)?.accuracy();
    let half = require_split_size(data.n())?;
    let (x, y) = (data.x(), data.y());
    // Bag order X¹, Y¹, X², Y² so that the identity permutation reproduces
    // the observed split.
    let bag = concatenate(
        Axis(0),
        &[
            x.slice(s![..half, ..]),
            y.slice(s![..half, ..]),
            x.slice(s![half.., ..]),
            y.slice(s![half.., ..]),
        ],
    )
    .expect("class shapes are equal");
    let permuted = permuted_statistics(permutations, |p| {
        let order = shuffle(p);
        let parts: Vec<&[usize]> = order.chunks(half).collect();
        let x_rows: Vec<usize> = parts[0].iter().chain(parts[2]).copied().collect();
        let y_rows: Vec<usize> = parts[1].iter().chain(parts[3]).copied().collect();
        Ok(split_error_with(&split_data(&bag, &x_rows, &y_rows), learner)?.accuracy())
    })?;
    Ok(permutation_outcome(
        observed,
        &permuted,
        level,
        TestKind::PermMethod2,
    ))
}
