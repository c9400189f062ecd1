//! Standard normal distribution functions and symmetric positive definite
//! linear algebra.
//!
//! Covariance matrices are held as [`SpdMatrix`], which keeps identity and
//! diagonal covariances in compact form and caches the Cholesky factor of
//! dense ones. Every quantity involving the inverse covariance is obtained by
//! triangular solves against that factor; no inverse is ever formed.

use libm::erfc;
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn require_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} requires a finite argument, got {x}"
        )))
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    require_finite(x, "std_normal_cdf")?;
    Ok(cdf(x))
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> Result<f64> {
    require_finite(x, "std_normal_pdf")?;
    Ok(pdf(x))
}

/// Inverse of [`std_normal_cdf`] on the open interval (0, 1).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "std_normal_quantile requires p in (0, 1), got {p}"
        )));
    }
    Ok(quantile(p))
}

#[inline]
pub(crate) fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

#[inline]
pub(crate) fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub(crate) fn quantile(p: f64) -> f64 {
    // Work in the lower tail where Φ(x) - p keeps full relative precision.
    if p > 0.5 {
        return -quantile(1.0 - p);
    }
    let x = acklam(p);
    // One Newton step against the accurate CDF.
    x - (cdf(x) - p) / pdf(x)
}

/// Acklam's rational approximation (relative error about 1.15e-9).
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Structural class of a covariance matrix; identity and diagonal matrices
/// take fast paths in every solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    Identity,
    Diagonal,
    Dense,
}

#[derive(Debug, Clone)]
enum Repr {
    Identity,
    Diagonal(Array1<f64>),
    Dense {
        matrix: Array2<f64>,
        factor: Array2<f64>,
    },
}

/// A validated symmetric positive definite matrix.
///
/// Immutable after construction; the Cholesky factor of a dense matrix is
/// computed once in [`SpdMatrix::dense`].
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    dim: usize,
    repr: Repr,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl SpdMatrix {
    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("dim", "must be positive"));
        }
        Ok(Self {
            dim,
            repr: Repr::Identity,
        })
    }

    pub fn diagonal(diag: Array1<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::validation("dim", "must be positive"));
        }
        if let Some(i) = diag.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NotPositiveDefinite { minor: i + 1 });
        }
        Ok(Self {
            dim: diag.len(),
            repr: Repr::Diagonal(diag),
        })
    }

    /// Validates symmetry and positive definiteness of a full matrix.
    pub fn dense(matrix: Array2<f64>) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        if rows == 0 {
            return Err(Error::validation("dim", "must be positive"));
        }
        if rows != cols {
            return Err(Error::DimensionMismatch {
                context: "covariance columns",
                expected: rows,
                actual: cols,
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("sigma", "entries must be finite"));
        }
        let scale = matrix.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..rows {
            for j in (i + 1)..rows {
                if (matrix[[i, j]] - matrix[[j, i]]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        let factor = cholesky_factor(&matrix)?;
        Ok(Self {
            dim: rows,
            repr: Repr::Dense { matrix, factor },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> CovarianceKind {
        match self.repr {
            Repr::Identity => CovarianceKind::Identity,
            Repr::Diagonal(_) => CovarianceKind::Diagonal,
            Repr::Dense { .. } => CovarianceKind::Dense,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match &self.repr {
            Repr::Identity => Array2::eye(self.dim),
            Repr::Diagonal(d) => Array2::from_diag(d),
            Repr::Dense { matrix, .. } => matrix.clone(),
        }
    }

    /// Lower-triangular Cholesky factor `L` with `L Lᵀ = self`.
    pub fn factor(&self) -> Array2<f64> {
        match &self.repr {
            Repr::Identity => Array2::eye(self.dim),
            Repr::Diagonal(d) => Array2::from_diag(&d.mapv(f64::sqrt)),
            Repr::Dense { factor, .. } => factor.clone(),
        }
    }

    fn check_len(&self, len: usize, context: &'static str) -> Result<()> {
        if len == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected: self.dim,
                actual: len,
            })
        }
    }

    /// Solves `self · x = b`.
    pub fn solve(&self, b: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_len(b.len(), "spd_solve right-hand side")?;
        Ok(match &self.repr {
            Repr::Identity => b.to_owned(),
            Repr::Diagonal(d) => &b / d,
            Repr::Dense { factor, .. } => {
                let y = forward_substitute(factor, b);
                back_substitute_transposed(factor, y)
            }
        })
    }

    /// `self · v`.
    pub fn mul_vec(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_len(v.len(), "covariance product")?;
        Ok(match &self.repr {
            Repr::Identity => v.to_owned(),
            Repr::Diagonal(d) => &v * d,
            Repr::Dense { matrix, .. } => matrix.dot(&v),
        })
    }

    /// `L · g` for the Cholesky factor `L`; maps standard normal vectors to
    /// vectors with covariance `self`.
    pub fn mul_factor(&self, g: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_len(g.len(), "factor product")?;
        Ok(match &self.repr {
            Repr::Identity => g.to_owned(),
            Repr::Diagonal(d) => Array1::from_iter(g.iter().zip(d).map(|(g, d)| g * d.sqrt())),
            Repr::Dense { factor, .. } => {
                let n = self.dim;
                let mut out = Array1::zeros(n);
                for i in 0..n {
                    let mut s = 0.0;
                    for j in 0..=i {
                        s += factor[[i, j]] * g[j];
                    }
                    out[i] = s;
                }
                out
            }
        })
    }

    /// `vᵀ self⁻¹ v`.
    pub fn inv_quad(&self, v: ArrayView1<f64>) -> Result<f64> {
        self.check_len(v.len(), "inverse quadratic form")?;
        Ok(match &self.repr {
            Repr::Identity => v.dot(&v),
            Repr::Diagonal(d) => v.iter().zip(d).map(|(v, d)| v * v / d).sum(),
            Repr::Dense { factor, .. } => {
                // ‖L⁻¹v‖²
                let y = forward_substitute(factor, v);
                y.dot(&y)
            }
        })
    }
}

fn forward_substitute(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[[i, j]] * y[j];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

fn back_substitute_transposed(l: &Array2<f64>, mut y: Array1<f64>) -> Array1<f64> {
    let n = y.len();
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in (i + 1)..n {
            s -= l[[j, i]] * y[j];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Cholesky–Banachiewicz factorization of a symmetric matrix. Only the lower
/// triangle is read.
pub fn cholesky_factor(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s.is_nan() || s <= 0.0 {
                    return Err(Error::NotPositiveDefinite { minor: i + 1 });
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Lower-triangular Cholesky factor of a validated SPD matrix.
pub fn cholesky(m: &SpdMatrix) -> Array2<f64> {
    m.factor()
}

/// Solves `m · x = b` through the Cholesky factor.
pub fn spd_solve(m: &SpdMatrix, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    m.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    /// erf by its Maclaurin series; accurate to ~1e-15 for |x| <= 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for k in 1..200 {
            term *= -x * x / k as f64;
            sum += term / (2 * k + 1) as f64;
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        let oracle = 0.5 * (1.0 - erf_series(2.0 / 2f64.sqrt()));
        assert_abs_diff_eq!(oracle, 0.022_750_131_948_179_2, epsilon = 1e-14);
        assert_abs_diff_eq!(std_normal_cdf(-2.0).unwrap(), oracle, epsilon = 1e-12);
        let x = -2.0 + 9.0 / 8f64.sqrt();
        assert_abs_diff_eq!(x, 1.18198, epsilon = 1e-5);
        assert_abs_diff_eq!(std_normal_cdf(x).unwrap(), 0.88, epsilon = 0.005);
    }

    #[test]
    fn cdf_is_symmetric_and_monotone() {
        let mut prev = 0.0;
        for i in -800..=800 {
            let x = i as f64 * 0.01;
            let c = cdf(x);
            assert!((c + cdf(-x) - 1.0).abs() <= 1e-12);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn pdf_values() {
        assert_abs_diff_eq!(std_normal_pdf(0.0).unwrap(), 0.398_942_3, epsilon = 1e-7);
        let direct = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(std_normal_pdf(1.0).unwrap(), direct, epsilon = 1e-15);
        assert_abs_diff_eq!(direct, 0.241_970_7, epsilon = 1e-7);
        assert_eq!(pdf(3.0), pdf(-3.0));
    }

    #[test]
    fn quantile_values() {
        assert_abs_diff_eq!(std_normal_quantile(0.5).unwrap(), 0.0, epsilon = 1e-15);
        let oracle = bisect_quantile(0.95);
        assert_abs_diff_eq!(oracle, 1.644_853_6, epsilon = 1e-7);
        assert_abs_diff_eq!(std_normal_quantile(0.95).unwrap(), oracle, epsilon = 1e-9);
        let z = std_normal_quantile(1.0 - 0.05).unwrap();
        assert_abs_diff_eq!(cdf(-z), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_and_out_of_range_inputs_are_rejected() {
        assert!(matches!(std_normal_cdf(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(
            std_normal_pdf(f64::INFINITY),
            Err(Error::Domain(_))
        ));
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(std_normal_quantile(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn quantile_round_trip_and_cdf_derivative() {
        for i in -600..=600 {
            let x = i as f64 * 0.01;
            assert!((quantile(cdf(x)) - x).abs() <= 1e-6, "round trip at {x}");
        }
        let h = 1e-5;
        for i in -500..=500 {
            let x = i as f64 * 0.01;
            let fd = (cdf(x + h) - cdf(x - h)) / (2.0 * h);
            assert!((fd - pdf(x)).abs() <= 1e-6, "derivative at {x}");
        }
    }

    #[test]
    fn quantile_is_strictly_increasing() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..1000 {
            let q = quantile(i as f64 / 1000.0);
            assert!(q > prev);
            prev = q;
        }
        assert!(quantile(1e-300) < -37.0);
    }

    #[test]
    fn cholesky_examples() {
        let id = SpdMatrix::identity(3).unwrap();
        assert_eq!(cholesky(&id), Array2::<f64>::eye(3));

        let m = SpdMatrix::dense(array![[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky(&m);
        assert_abs_diff_eq!(l, array![[2.0, 0.0], [1.0, 2f64.sqrt()]], epsilon = 1e-15);
        assert_abs_diff_eq!(l.dot(&l.t()), m.to_dense(), epsilon = 1e-14);
    }

    #[test]
    fn cholesky_reports_failing_minor() {
        let err = SpdMatrix::dense(array![[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
            .unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { minor: 2 }));
        let err = SpdMatrix::dense(array![[1.0, 0.5], [0.4, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { row: 0, col: 1 }));
        assert!(SpdMatrix::diagonal(array![1.0, 0.0]).is_err());
    }

    #[test]
    fn solve_examples() {
        let b = array![1.0, -2.0, 3.5];
        let id = SpdMatrix::identity(3).unwrap();
        assert_eq!(spd_solve(&id, b.view()).unwrap(), b);

        let m = SpdMatrix::dense(array![[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let x = spd_solve(&m, array![1.0, 0.0].view()).unwrap();
        assert_abs_diff_eq!(x, array![3.0 / 8.0, -0.25], epsilon = 1e-15);
        assert_abs_diff_eq!(m.to_dense().dot(&x), array![1.0, 0.0], epsilon = 1e-15);

        let diag = SpdMatrix::diagonal(array![2.0, 4.0, 0.5]).unwrap();
        assert_abs_diff_eq!(
            spd_solve(&diag, b.view()).unwrap(),
            array![0.5, -0.5, 7.0],
            epsilon = 1e-15
        );
        // The dense path must agree with the diagonal fast path.
        let as_dense = SpdMatrix::dense(diag.to_dense()).unwrap();
        assert_abs_diff_eq!(
            spd_solve(&as_dense, b.view()).unwrap(),
            array![0.5, -0.5, 7.0],
            epsilon = 1e-15
        );

        assert!(matches!(
            spd_solve(&m, b.view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn random_spd(dim: usize, entries: &[f64], eps: f64) -> Array2<f64> {
        let b = Array2::from_shape_fn((dim, dim), |(i, j)| entries[i * dim + j]);
        b.t().dot(&b) + Array2::<f64>::eye(dim) * eps
    }

    fn frob(a: &Array2<f64>) -> f64 {
        a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    proptest! {
        #[test]
        fn cholesky_round_trip_and_solve_residual(
            dim in 1usize..12,
            entries in prop::collection::vec(-3.0f64..3.0, 144),
            rhs in prop::collection::vec(-10.0f64..10.0, 12),
            eps in 0.01f64..1.0,
        ) {
            let a = random_spd(dim, &entries, eps);
            let m = SpdMatrix::dense(a.clone()).unwrap();
            let l = cholesky(&m);
            prop_assert!((0..dim).all(|i| l[[i, i]] > 0.0));
            let rel = frob(&(l.dot(&l.t()) - &a)) / frob(&a);
            prop_assert!(rel <= 1e-10, "relative error {rel}");

            let b = Array1::from_vec(rhs[..dim].to_vec());
            let x = spd_solve(&m, b.view()).unwrap();
            let resid = (a.dot(&x) - &b).iter().map(|v| v * v).sum::<f64>().sqrt();
            let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(resid <= 1e-8 * (1.0 + bn));

            let quad = m.inv_quad(b.view()).unwrap();
            prop_assert!((quad - b.dot(&x)).abs() <= 1e-8 * (1.0 + quad.abs()));
        }
    }
}
