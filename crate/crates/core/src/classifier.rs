//! Linear discriminant rules and their exact Gaussian error rates.
//!
//! Both rules have the form "predict 1 iff wᵀ(z − m) > 0". Fisher's LDA with
//! known covariance uses `w = Σ⁻¹(μ̂1 − μ̂0)`. Naive Bayes divides the mean
//! difference by the pooled per-feature variances instead. The midpoint `m`
//! is `(μ̂0 + μ̂1)/2` for both.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::numerics::{cdf, SpdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    LdaKnownSigma,
    NaiveBayes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub weight: Array1<f64>,
    pub midpoint: Array1<f64>,
    pub kind: ClassifierKind,
    pub train_size_per_class: usize,
}

impl TrainedClassifier {
    /// `wᵀ(z − m)`
    pub fn decision_value(&self, z: ArrayView1<f64>) -> f64 {
        self.weight
            .iter()
            .zip(z.iter().zip(&self.midpoint))
            .map(|(w, (z, m))| w * (z - m))
            .sum()
    }

    /// Label for `z`; an exact zero decision value goes to label 0.
    pub fn predict(&self, z: ArrayView1<f64>) -> u8 {
        u8::from(self.decision_value(z) > 0.0)
    }

    /// Number of rows of `rows` assigned `label`.
    pub fn count_predicted(&self, rows: ArrayView2<f64>, label: u8) -> usize {
        rows.rows()
            .into_iter()
            .filter(|z| self.predict(*z) == label)
            .count()
    }

    pub fn dim(&self) -> usize {
        self.weight.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.weight.iter().all(|&w| w == 0.0)
    }
}

pub fn predict(clf: &TrainedClassifier, z: ArrayView1<f64>) -> Result<u8> {
    if z.len() != clf.dim() {
        return Err(Error::DimensionMismatch {
            context: "predict",
            expected: clf.dim(),
            actual: z.len(),
        });
    }
    Ok(clf.predict(z))
}

fn class_means(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::InsufficientData(
            "each class needs at least one row".into(),
        ));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            context: "class feature counts",
            expected: x.ncols(),
            actual: y.ncols(),
        });
    }
    Ok((
        x.mean_axis(Axis(0)).expect("nonempty"),
        y.mean_axis(Axis(0)).expect("nonempty"),
    ))
}

pub(crate) fn lda_from_means(
    mean0: &Array1<f64>,
    mean1: &Array1<f64>,
    sigma: &SpdMatrix,
    train_size_per_class: usize,
) -> Result<TrainedClassifier> {
    let weight = sigma.solve((mean1 - mean0).view())?;
    Ok(TrainedClassifier {
        weight,
        midpoint: (mean0 + mean1) * 0.5,
        kind: ClassifierKind::LdaKnownSigma,
        train_size_per_class,
    })
}

/// Fisher's LDA with known covariance.
pub fn train_lda(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    sigma: &SpdMatrix,
) -> Result<TrainedClassifier> {
    let (m0, m1) = class_means(x, y)?;
    lda_from_means(&m0, &m1, sigma, x.nrows())
}

/// Pooled within-class variance of each feature, denominator `n0 + n1 − 2`.
pub(crate) fn pooled_feature_variance(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    mean0: &Array1<f64>,
    mean1: &Array1<f64>,
) -> Result<Array1<f64>> {
    let dof = (x.nrows() + y.nrows()) as f64 - 2.0;
    let mut ss = Array1::<f64>::zeros(x.ncols());
    for (rows, mean) in [(x, mean0), (y, mean1)] {
        for row in rows.rows() {
            for ((s, v), m) in ss.iter_mut().zip(row).zip(mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    let var = ss / dof;
    if let Some(feature) = var.iter().position(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::DegenerateVariance { feature });
    }
    Ok(var)
}

pub(crate) fn require_two_per_class(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<()> {
    if x.nrows() < 2 || y.nrows() < 2 {
        return Err(Error::InsufficientData(format!(
            "per-feature variances need at least 2 rows per class, got {} and {}",
            x.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

/// Naive Bayes: LDA with the covariance replaced by the pooled diagonal
/// estimate.
pub fn train_nb(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<TrainedClassifier> {
    let (m0, m1) = class_means(x, y)?;
    require_two_per_class(x, y)?;
    let var = pooled_feature_variance(x, y, &m0, &m1)?;
    Ok(TrainedClassifier {
        weight: (&m1 - &m0) / &var,
        midpoint: (&m0 + &m1) * 0.5,
        kind: ClassifierKind::NaiveBayes,
        train_size_per_class: x.nrows(),
    })
}

/// A training procedure for one of the two linear rules.
#[derive(Debug, Clone, Copy)]
pub enum Learner<'a> {
    Lda(&'a SpdMatrix),
    NaiveBayes,
}

impl Learner<'_> {
    pub fn train(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<TrainedClassifier> {
        match self {
            Learner::Lda(sigma) => train_lda(x, y, sigma),
            Learner::NaiveBayes => train_nb(x, y),
        }
    }
}

/// Error rates of a fixed classifier on fresh draws from the two classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalError {
    /// Probability that a label-0 point is predicted 1.
    pub e1: f64,
    /// Probability that a label-1 point is predicted 0.
    pub e2: f64,
    pub e: f64,
}

impl ConditionalError {
    fn new(e1: f64, e2: f64) -> Self {
        Self {
            e1,
            e2,
            e: (e1 + e2) / 2.0,
        }
    }
}

/// Exact misclassification rates of `clf` under `spec`: the decision value
/// is Gaussian with mean `wᵀ(μ − m)` and variance `wᵀΣw` in each class.
pub fn conditional_error(clf: &TrainedClassifier, spec: &ProblemSpec) -> Result<ConditionalError> {
    if clf.dim() != spec.d() {
        return Err(Error::DimensionMismatch {
            context: "conditional_error",
            expected: spec.d(),
            actual: clf.dim(),
        });
    }
    if clf.is_degenerate() {
        return Ok(ConditionalError::new(0.0, 1.0));
    }
    let w = &clf.weight;
    let sd = w.dot(&spec.sigma().mul_vec(w.view())?).sqrt();
    let a0 = clf.decision_value(spec.mu0().view());
    let a1 = clf.decision_value(spec.mu1().view());
    Ok(ConditionalError::new(cdf(a0 / sd), cdf(-a1 / sd)))
}

/// Expected error of LDA trained on `n` points per class in dimension `d`
/// at signal-to-noise ratio `psi`:
/// `Φ(−(psi/2) / sqrt(1 + 2d/(n psi²)))`, evaluated as
/// `Φ(−psi² / (2 sqrt(psi² + 2d/n)))` so that `psi = 0` is finite.
pub fn lda_expected_error(psi: f64, n: usize, d: usize) -> f64 {
    assert!(n >= 1 && d >= 1, "lda_expected_error needs n, d >= 1");
    let psi2 = psi * psi;
    let noise = 2.0 * d as f64 / n as f64;
    cdf(-psi2 / (2.0 * (psi2 + noise).sqrt()))
}
