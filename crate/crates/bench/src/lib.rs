//! Fixtures shared by the criterion benchmarks.

use twosample_core::{sample, spec_for_experiment, Direction, SeedSpec, SpdMatrix, TwoSampleData};

/// Data on the constant-power curve: `psi = 3 / d^{1/4}`, identity covariance.
pub fn constant_power_data(d: usize, n: usize, seed: u64) -> TwoSampleData {
    let psi = 3.0 / (d as f64).powf(0.25);
    let spec = spec_for_experiment(d, n, psi, Direction::Uniform).expect("valid fixture");
    sample(&spec, SeedSpec::new(seed, 0))
}

/// Well-conditioned dense covariance: `0.5^|i-j|`.
pub fn ar1_covariance(d: usize) -> SpdMatrix {
    let m = ndarray::Array2::from_shape_fn((d, d), |(i, j)| 0.5f64.powi(i.abs_diff(j) as i32));
    SpdMatrix::dense(m).expect("AR(1) covariance is positive definite")
}
