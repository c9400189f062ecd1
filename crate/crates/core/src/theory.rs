//! Closed-form power curves for testing `mu0 = mu1` at level alpha.
//!
//! * [`minimax_power_lower_bound`]: the best worst-case power achievable by
//!   any level-alpha test with `n` points per class (asymptotic terms
//!   dropped).
//! * [`low_snr_power`]: its simplification when `psi² << d/n`.
//! * [`lda_power_approx`]: approximate power of the sample-splitting LDA
//!   accuracy test, after linearizing `Φ` around zero.
//! * [`lda_expected_power`]: the same test's power before linearization,
//!   through the expected LDA error.

use std::f64::consts::PI;

use crate::classifier::lda_expected_error;
use crate::error::{Error, Result};
use crate::numerics::{cdf, quantile};

/// Significance level, carried together with its upper quantile
/// `z = Φ⁻¹(1 − alpha)` so either can be fixed exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    alpha: f64,
    z: f64,
}

impl Level {
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::validation(
                "alpha",
                format!("must lie in (0, 1), got {alpha}"),
            ));
        }
        Ok(Self {
            alpha,
            z: quantile(1.0 - alpha),
        })
    }

    /// Level whose rejection threshold is exactly `z`; `alpha = Φ(−z)`.
    pub fn from_z(z: f64) -> Result<Self> {
        if !z.is_finite() {
            return Err(Error::validation(
                "z_alpha",
                format!("must be finite, got {z}"),
            ));
        }
        Ok(Self { alpha: cdf(-z), z })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn z(&self) -> f64 {
        self.z
    }
}

/// Arguments shared by the power curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerQuery {
    pub psi: f64,
    pub n: usize,
    pub d: usize,
    pub level: Level,
}

impl PowerQuery {
    pub fn new(psi: f64, n: usize, d: usize, level: Level) -> Result<Self> {
        if !(psi >= 0.0 && psi.is_finite()) {
            return Err(Error::validation(
                "psi",
                format!("must be finite and >= 0, got {psi}"),
            ));
        }
        if n == 0 {
            return Err(Error::validation("n", "must be positive"));
        }
        if d == 0 {
            return Err(Error::validation("d", "must be positive"));
        }
        Ok(Self { psi, n, d, level })
    }

    fn parts(&self) -> (f64, f64, f64, f64) {
        (
            self.psi * self.psi,
            self.n as f64,
            self.d as f64,
            self.level.z,
        )
    }

    /// `n psi² / sqrt(8d)`: how far the low-SNR minimax power curve sits
    /// above `−z`.
    pub fn minimax_low_snr_shift(&self) -> f64 {
        let (psi2, n, d, _) = self.parts();
        n * psi2 / (8.0 * d).sqrt()
    }

    /// `n psi² / sqrt(16 π d)`: the same shift for the LDA accuracy test.
    pub fn lda_low_snr_shift(&self) -> f64 {
        let (psi2, n, d, _) = self.parts();
        n * psi2 / (16.0 * PI * d).sqrt()
    }
}

/// Which form of [`lda_power_approx`] to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnrRegime {
    #[default]
    General,
    LowSnr,
}

/// `Φ(−z sqrt(d) / sqrt(d + n psi²) + psi² / sqrt(8d/n² + 8 psi²/n))`
pub fn minimax_power_lower_bound(q: &PowerQuery) -> f64 {
    let (psi2, n, d, z) = q.parts();
    let level_term = -z * d.sqrt() / (d + n * psi2).sqrt();
    let signal_term = psi2 / (8.0 * d / (n * n) + 8.0 * psi2 / n).sqrt();
    cdf(level_term + signal_term)
}

/// `Φ(−z + n psi² / sqrt(8d))`
pub fn low_snr_power(q: &PowerQuery) -> f64 {
    cdf(-q.level.z + q.minimax_low_snr_shift())
}

/// `Φ(psi² / sqrt(4π psi²/n + 16π d/n²) − z)`, or `Φ(n psi² / sqrt(16π d) − z)`
/// in the low-SNR regime.
pub fn lda_power_approx(q: &PowerQuery, regime: SnrRegime) -> f64 {
    let (psi2, n, d, z) = q.parts();
    let shift = match regime {
        SnrRegime::General => psi2 / (4.0 * PI * psi2 / n + 16.0 * PI * d / (n * n)).sqrt(),
        SnrRegime::LowSnr => q.lda_low_snr_shift(),
    };
    cdf(shift - z)
}

/// `Φ(sqrt(2n) (1/2 − E) − z)` with `E` the expected error of LDA trained on
/// `n/2` points per class.
pub fn lda_expected_power(q: &PowerQuery) -> Result<f64> {
    if q.n % 2 != 0 {
        return Err(Error::Domain(format!(
            "lda_expected_power needs an even per-class size, got {}",
            q.n
        )));
    }
    let expected_error = lda_expected_error(q.psi, q.n / 2, q.d);
    let n = q.n as f64;
    Ok(cdf((2.0 * n).sqrt() * (0.5 - expected_error) - q.level.z))
}
