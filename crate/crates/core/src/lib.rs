//! Two-sample mean testing for equal-covariance Gaussians.
//!
//! The crate tests `H0: mu0 = mu1` two ways. The direct way uses the
//! Hotelling-type quadratic forms. The indirect way trains Fisher's linear
//! discriminant on half of the data and checks whether its held-out accuracy
//! beats chance. The crate also evaluates closed-form power curves and runs
//! seeded Monte Carlo power estimates on top of these tests.

pub mod classifier;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod hypothesis;
pub mod model;
pub mod numerics;
pub mod theory;

pub use classifier::{
    conditional_error, lda_expected_error, predict, train_lda, train_nb, ClassifierKind,
    ConditionalError, Learner, TrainedClassifier,
};
pub use error::{Error, Result};
pub use estimators::{error_loo, error_resub, error_sample_split, ErrorEstimate, EstimatorScheme};
pub use harness::{
    constant_power_config, estimate_power, experiment_constant_power, experiment_increasing_power,
    experiment_level, increasing_power_config, spearman_correlation, write_points_csv,
    ExperimentConfig, GridPoint, IncreasingLayout, PermMethod, PermStatistic, PowerCurvePoint,
    RunOptions, TestScheme, POINT_COLUMNS,
};
pub use hypothesis::{
    perm_test_direct, perm_test_method1, perm_test_method2, stat_hotelling, stat_sd,
    stat_split_accuracy, test_hotelling, test_sd, test_split_accuracy, PermutationConfig, TestKind,
    TestOutcome,
};
pub use model::{
    sample, snr, spec_for_experiment, Direction, ProblemSpec, SeedSpec, TwoSampleData,
};
pub use numerics::{
    cholesky, spd_solve, std_normal_cdf, std_normal_pdf, std_normal_quantile, CovarianceKind,
    SpdMatrix,
};
pub use theory::{
    lda_expected_power, lda_power_approx, low_snr_power, minimax_power_lower_bound, Level,
    PowerQuery, SnrRegime,
};
