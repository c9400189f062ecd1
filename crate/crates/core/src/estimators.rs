//! Classification error estimates: sample splitting, leave-one-out and
//! resubstitution.
//!
//! Errors are counted as integers per class and divided once at the end, so
//! every estimate is an exact multiple of `1 / eval_count_per_class`.

use ndarray::{Array1, ArrayView2, Axis};

use crate::classifier::{lda_from_means, Learner, TrainedClassifier};
use crate::error::{Error, Result};
use crate::model::TwoSampleData;
use crate::numerics::SpdMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorScheme {
    Split,
    Loo,
    Resub,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    /// Fraction of evaluated label-0 points predicted 1.
    pub e1_hat: f64,
    /// Fraction of evaluated label-1 points predicted 0.
    pub e2_hat: f64,
    pub e_hat: f64,
    pub scheme: EstimatorScheme,
    pub eval_count_per_class: usize,
    /// Raw misclassification counts for label 0 and label 1.
    pub misclassified: [usize; 2],
}

impl ErrorEstimate {
    pub(crate) fn from_counts(
        errors0: usize,
        errors1: usize,
        eval_count_per_class: usize,
        scheme: EstimatorScheme,
    ) -> Self {
        let m = eval_count_per_class as f64;
        let e1_hat = errors0 as f64 / m;
        let e2_hat = errors1 as f64 / m;
        Self {
            e1_hat,
            e2_hat,
            e_hat: (e1_hat + e2_hat) / 2.0,
            scheme,
            eval_count_per_class,
            misclassified: [errors0, errors1],
        }
    }

    pub fn accuracy(&self) -> f64 {
        1.0 - self.e_hat
    }
}

/// Held-out error of a fixed classifier.
pub(crate) fn evaluate(
    clf: &TrainedClassifier,
    test_x: ArrayView2<f64>,
    test_y: ArrayView2<f64>,
    scheme: EstimatorScheme,
) -> ErrorEstimate {
    debug_assert_eq!(test_x.nrows(), test_y.nrows());
    ErrorEstimate::from_counts(
        clf.count_predicted(test_x, 1),
        clf.count_predicted(test_y, 0),
        test_x.nrows(),
        scheme,
    )
}

pub(crate) fn require_split_size(n: usize) -> Result<usize> {
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "sample splitting needs at least 4 rows per class, got {n}"
        )));
    }
    if n % 2 != 0 {
        return Err(Error::validation(
            "n",
            format!("sample splitting needs an even per-class size, got {n}"),
        ));
    }
    Ok(n / 2)
}

/// Trains on the first half of each class and returns the trained rule with
/// its error on the second half.
pub(crate) fn split_fit(
    data: &TwoSampleData,
    learner: Learner<'_>,
) -> Result<(TrainedClassifier, ErrorEstimate)> {
    let half = require_split_size(data.n())?;
    let (x, y) = (data.x(), data.y());
    let clf = learner.train(
        x.slice(ndarray::s![..half, ..]),
        y.slice(ndarray::s![..half, ..]),
    )?;
    let est = evaluate(
        &clf,
        x.slice(ndarray::s![half.., ..]),
        y.slice(ndarray::s![half.., ..]),
        EstimatorScheme::Split,
    );
    Ok((clf, est))
}

/// Sample-splitting error with an arbitrary learner.
pub fn split_error_with(data: &TwoSampleData, learner: Learner<'_>) -> Result<ErrorEstimate> {
    split_fit(data, learner).map(|(_, est)| est)
}

/// Sample-splitting error of LDA with known covariance.
pub fn error_sample_split(data: &TwoSampleData, sigma: &SpdMatrix) -> Result<ErrorEstimate> {
    split_error_with(data, Learner::Lda(sigma))
}

fn without_row(rows: ArrayView2<f64>, skip: usize) -> ndarray::Array2<f64> {
    let keep: Vec<usize> = (0..rows.nrows()).filter(|&i| i != skip).collect();
    rows.select(Axis(0), &keep)
}

fn require_loo_size(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "leave-one-out needs at least 2 rows per class, got {n}"
        )));
    }
    Ok(())
}

/// Leave-one-out error of LDA with known covariance. Class means are
/// downdated per held-out point; the covariance factorization is shared.
pub fn error_loo(data: &TwoSampleData, sigma: &SpdMatrix) -> Result<ErrorEstimate> {
    let n = data.n();
    require_loo_size(n)?;
    if sigma.dim() != data.d() {
        return Err(Error::DimensionMismatch {
            context: "covariance vs data",
            expected: data.d(),
            actual: sigma.dim(),
        });
    }
    let (x, y) = (data.x(), data.y());
    let sum0 = x.sum_axis(Axis(0));
    let sum1 = y.sum_axis(Axis(0));
    let mean0 = &sum0 / n as f64;
    let mean1 = &sum1 / n as f64;
    let reduced = |sum: &Array1<f64>, row: ndarray::ArrayView1<f64>| (sum - &row) / (n - 1) as f64;

    let mut errors0 = 0;
    for row in x.rows() {
        let clf = lda_from_means(&reduced(&sum0, row), &mean1, sigma, n - 1)?;
        errors0 += usize::from(clf.predict(row) == 1);
    }
    let mut errors1 = 0;
    for row in y.rows() {
        let clf = lda_from_means(&mean0, &reduced(&sum1, row), sigma, n - 1)?;
        errors1 += usize::from(clf.predict(row) == 0);
    }
    Ok(ErrorEstimate::from_counts(
        errors0,
        errors1,
        n,
        EstimatorScheme::Loo,
    ))
}

/// Leave-one-out error with an arbitrary learner, retraining for each
/// held-out point.
pub fn loo_error_with(data: &TwoSampleData, learner: Learner<'_>) -> Result<ErrorEstimate> {
    if let Learner::Lda(sigma) = learner {
        return error_loo(data, sigma);
    }
    let n = data.n();
    require_loo_size(n)?;
    let (x, y) = (data.x(), data.y());
    let mut errors0 = 0;
    for (i, row) in x.rows().into_iter().enumerate() {
        let clf = learner.train(without_row(x, i).view(), y)?;
        errors0 += usize::from(clf.predict(row) == 1);
    }
    let mut errors1 = 0;
    for (i, row) in y.rows().into_iter().enumerate() {
        let clf = learner.train(x, without_row(y, i).view())?;
        errors1 += usize::from(clf.predict(row) == 0);
    }
    Ok(ErrorEstimate::from_counts(
        errors0,
        errors1,
        n,
        EstimatorScheme::Loo,
    ))
}

/// Resubstitution error with an arbitrary learner.
pub fn resub_error_with(data: &TwoSampleData, learner: Learner<'_>) -> Result<ErrorEstimate> {
    let clf = learner.train(data.x(), data.y())?;
    Ok(evaluate(&clf, data.x(), data.y(), EstimatorScheme::Resub))
}

/// Resubstitution error of LDA with known covariance: trained and evaluated
/// on all rows.
pub fn error_resub(data: &TwoSampleData, sigma: &SpdMatrix) -> Result<ErrorEstimate> {
    resub_error_with(data, Learner::Lda(sigma))
}
