//! The Gaussian two-sample problem, its signal-to-noise ratio, seeded
//! sampling, and the labelled CSV format for datasets.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{CovarianceKind, SpdMatrix};

/// Two Gaussians `N(mu0, sigma)` (label 0) and `N(mu1, sigma)` (label 1)
/// with `n` samples drawn from each.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    d: usize,
    n: usize,
    mu0: Array1<f64>,
    mu1: Array1<f64>,
    sigma: SpdMatrix,
}

impl ProblemSpec {
    pub fn new(n: usize, mu0: Array1<f64>, mu1: Array1<f64>, sigma: SpdMatrix) -> Result<Self> {
        let d = sigma.dim();
        if n == 0 {
            return Err(Error::validation("n", "must be positive"));
        }
        for (field, v) in [("mu0", &mu0), ("mu1", &mu1)] {
            if v.len() != d {
                return Err(Error::validation(
                    field,
                    format!("length {} does not match covariance dimension {d}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(field, "entries must be finite"));
            }
        }
        Ok(Self {
            d,
            n,
            mu0,
            mu1,
            sigma,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mu0(&self) -> &Array1<f64> {
        &self.mu0
    }

    pub fn mu1(&self) -> &Array1<f64> {
        &self.mu1
    }

    pub fn sigma(&self) -> &SpdMatrix {
        &self.sigma
    }

    pub fn covariance_kind(&self) -> CovarianceKind {
        self.sigma.kind()
    }

    /// Same distributions, different per-class sample size.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(n, self.mu0.clone(), self.mu1.clone(), self.sigma.clone())
    }
}

/// Mahalanobis distance `sqrt(δᵀ Σ⁻¹ δ)` between the class means.
pub fn snr(spec: &ProblemSpec) -> f64 {
    let delta = &spec.mu0 - &spec.mu1;
    spec.sigma
        .inv_quad(delta.view())
        .expect("spec dimensions are validated at construction")
        .max(0.0)
        .sqrt()
}

/// Direction of the mean shift used by the simulation experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// `(1, …, 1) / √d`
    #[default]
    Uniform,
    /// `e₁`
    FirstAxis,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Direction::Uniform),
            "first-axis" => Ok(Direction::FirstAxis),
            other => Err(Error::validation(
                "direction",
                format!("expected `uniform` or `first-axis`, got `{other}`"),
            )),
        }
    }
}

/// Identity-covariance problem with `mu0 = 0` and `mu1 = -psi · v` for a unit
/// vector `v`, so that `snr` equals `psi`.
pub fn spec_for_experiment(
    d: usize,
    n: usize,
    psi: f64,
    direction: Direction,
) -> Result<ProblemSpec> {
    if !(psi >= 0.0 && psi.is_finite()) {
        return Err(Error::validation(
            "psi",
            format!("must be finite and >= 0, got {psi}"),
        ));
    }
    if d == 0 {
        return Err(Error::validation("d", "must be positive"));
    }
    let mu1 = match direction {
        Direction::Uniform => Array1::from_elem(d, -psi / (d as f64).sqrt()),
        Direction::FirstAxis => {
            let mut v = Array1::zeros(d);
            v[0] = -psi;
            v
        }
    };
    ProblemSpec::new(n, Array1::zeros(d), mu1, SpdMatrix::identity(d)?)
}

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// ChaCha8 keyed by `master_seed`, positioned on stream `stream_index`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// A family of streams owned by this one: stream `index` of a master
    /// seed derived from `(master_seed, stream_index)`.
    pub fn substream(&self, index: u64) -> SeedSpec {
        let master = splitmix64(self.master_seed ^ splitmix64(self.stream_index ^ 0x5eed_5eed));
        SeedSpec::new(master, index)
    }
}

/// `n` rows from each of the two distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleData {
    x: Array2<f64>,
    y: Array2<f64>,
}

impl TwoSampleData {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(Error::validation(
                "data",
                format!(
                    "class shapes differ: label 0 is {:?}, label 1 is {:?}",
                    x.dim(),
                    y.dim()
                ),
            ));
        }
        if x.ncols() == 0 {
            return Err(Error::validation("data", "no feature columns"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation("data", "entries must be finite"));
        }
        Ok(Self { x, y })
    }

    /// Skips validation; callers guarantee equal shapes and finite entries.
    pub(crate) fn from_parts(x: Array2<f64>, y: Array2<f64>) -> Self {
        debug_assert_eq!(x.dim(), y.dim());
        Self { x, y }
    }

    /// Samples from the label-0 distribution, one per row.
    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    /// Samples from the label-1 distribution, one per row.
    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    /// Per-class sample size.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// All `2n` rows, label-0 rows first.
    pub fn pooled(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(0), &[self.x.view(), self.y.view()])
            .expect("class shapes are equal")
    }

    /// Writes the labelled CSV format: columns `f0 … f{d-1}, label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.d()).map(|j| format!("f{j}")).collect();
        header.push("label".to_owned());
        w.write_record(&header)?;
        for (label, rows) in [("0", &self.x), ("1", &self.y)] {
            for row in rows.rows() {
                let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                record.push(label.to_owned());
                w.write_record(&record)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the labelled CSV format. Rows may appear in any order; both
    /// classes must have the same number of rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = r.headers()?.clone();
        let cols = headers.len();
        if cols < 2 || headers.get(cols - 1) != Some("label") {
            return Err(Error::Format("last column must be named `label`".into()));
        }
        let d = cols - 1;
        for (j, name) in headers.iter().take(d).enumerate() {
            if name != format!("f{j}") {
                return Err(Error::Format(format!(
                    "feature column {j} must be named `f{j}`, found `{name}`"
                )));
            }
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let row = line + 2;
            let mut values = Vec::with_capacity(d);
            for field in record.iter().take(d) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Format(format!("row {row}: `{field}` is not a number")))?;
                values.push(v);
            }
            match record.get(d) {
                Some("0") => xs.extend(values),
                Some("1") => ys.extend(values),
                other => {
                    return Err(Error::Format(format!(
                        "row {row}: label must be 0 or 1, found {other:?}"
                    )))
                }
            }
        }
        let (nx, ny) = (xs.len() / d, ys.len() / d);
        if nx != ny {
            return Err(Error::validation(
                "label",
                format!("classes must have equal sizes, found {nx} rows with label 0 and {ny} with label 1"),
            ));
        }
        if nx == 0 {
            return Err(Error::InsufficientData("dataset has no rows".into()));
        }
        let x = Array2::from_shape_vec((nx, d), xs).expect("row length checked");
        let y = Array2::from_shape_vec((ny, d), ys).expect("row length checked");
        Self::new(x, y)
    }
}

fn draw_rows(rng: &mut ChaCha8Rng, n: usize, mean: &Array1<f64>, sigma: &SpdMatrix) -> Array2<f64> {
    let d = mean.len();
    let mut out = Array2::zeros((n, d));
    if sigma.kind() == CovarianceKind::Identity {
        for mut row in out.rows_mut() {
            for (v, m) in row.iter_mut().zip(mean) {
                *v = m + rng.sample::<f64, _>(StandardNormal);
            }
        }
        return out;
    }
    let mut g = Array1::zeros(d);
    for mut row in out.rows_mut() {
        g.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        row.assign(&(sigma.mul_factor(g.view()).expect("dimension checked") + mean));
    }
    out
}

/// Draws `n` rows from each class as `mu + L g`; a pure function of
/// `(spec, seed)`.
pub fn sample(spec: &ProblemSpec, seed: SeedSpec) -> TwoSampleData {
    let mut rng = seed.rng();
    let x = draw_rows(&mut rng, spec.n, &spec.mu0, &spec.sigma);
    let y = draw_rows(&mut rng, spec.n, &spec.mu1, &spec.sigma);
    TwoSampleData { x, y }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::seq::SliceRandom;

    fn spec2(mu1: Array1<f64>) -> ProblemSpec {
        let sigma = SpdMatrix::dense(array![[4.0, 2.0], [2.0, 3.0]]).unwrap();
        ProblemSpec::new(10, array![0.0, 0.0], mu1, sigma).unwrap()
    }

    #[test]
    fn snr_examples() {
        let s = spec_for_experiment(5, 10, 0.0, Direction::Uniform).unwrap();
        assert_eq!(snr(&s), 0.0);

        let u = array![0.6, 0.0, 0.8];
        let s = ProblemSpec::new(
            4,
            Array1::zeros(3),
            &u * -2.5,
            SpdMatrix::identity(3).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(snr(&s), 2.5, epsilon = 1e-15);

        // δ = mu0 - mu1 = (1, 0); Σx = δ gives x = (3/8, -1/4), δᵀx = 3/8.
        let s = spec2(array![-1.0, 0.0]);
        assert_abs_diff_eq!(snr(&s), (3.0f64 / 8.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(snr(&s), 0.6124, epsilon = 1e-4);
    }

    #[test]
    fn snr_equals_norm_of_whitened_difference() {
        let s = spec2(array![0.7, -1.3]);
        let l = s.sigma().factor();
        let delta = s.mu0() - s.mu1();
        // Solve L w = δ by hand for the 2x2 case.
        let w0 = delta[0] / l[[0, 0]];
        let w1 = (delta[1] - l[[1, 0]] * w0) / l[[1, 1]];
        assert_abs_diff_eq!(snr(&s), (w0 * w0 + w1 * w1).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn experiment_specs() {
        let s = spec_for_experiment(4, 8, 0.0, Direction::Uniform).unwrap();
        assert_eq!(s.mu1(), &Array1::<f64>::zeros(4));

        let s = spec_for_experiment(4, 8, 2.0, Direction::Uniform).unwrap();
        assert_eq!(s.mu1(), &array![-1.0, -1.0, -1.0, -1.0]);
        assert_abs_diff_eq!(snr(&s), 2.0, epsilon = 1e-15);

        let psi = 3.0 / 100f64.powf(0.25);
        let s = spec_for_experiment(100, 100, psi, Direction::Uniform).unwrap();
        assert_abs_diff_eq!(snr(&s), 3.0 / 10f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(snr(&s), 0.9487, epsilon = 1e-4);

        let s = spec_for_experiment(7, 8, 1.25, Direction::FirstAxis).unwrap();
        assert_eq!(snr(&s), 1.25);
        assert_eq!(s.covariance_kind(), CovarianceKind::Identity);

        assert!(spec_for_experiment(4, 8, -1.0, Direction::Uniform).is_err());
    }

    #[test]
    fn snr_round_trips_psi_on_a_grid() {
        for d in [1, 2, 3, 17, 100, 600] {
            for k in 0..50 {
                let psi = k as f64 * 0.173;
                let s = spec_for_experiment(d, 4, psi, Direction::Uniform).unwrap();
                assert!((snr(&s) - psi).abs() <= 1e-12, "d={d} psi={psi}");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let s = spec2(array![1.0, 1.0]);
        let a = sample(&s, SeedSpec::new(11, 3));
        let b = sample(&s, SeedSpec::new(11, 3));
        assert_eq!(a, b);
        let c = sample(&s, SeedSpec::new(11, 4));
        assert_ne!(a, c);
        let e = sample(&s, SeedSpec::new(12, 3));
        assert_ne!(a, e);
    }

    #[test]
    fn sample_mean_concentrates() {
        let s = ProblemSpec::new(
            10_000,
            array![0.0],
            array![0.0],
            SpdMatrix::identity(1).unwrap(),
        )
        .unwrap();
        let data = sample(&s, SeedSpec::new(5, 0));
        let mean = data.x().mean().unwrap();
        assert!(mean.abs() < 0.04, "mean {mean}");
    }

    #[test]
    fn sample_covariance_matches_sigma() {
        let s = spec2(array![0.0, 0.0]).with_n(20_000).unwrap();
        let data = sample(&s, SeedSpec::new(9, 0));
        let x = data.x();
        let centered = &x - &x.mean_axis(Axis(0)).unwrap();
        let cov = centered.t().dot(&centered) / (x.nrows() as f64 - 1.0);
        let target = s.sigma().to_dense();
        for (c, t) in cov.iter().zip(target.iter()) {
            assert!((c - t).abs() < 0.15, "{cov:?}");
        }
        let ymean = data.y().mean_axis(Axis(0)).unwrap();
        assert!(ymean.iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn null_samples_are_exchangeable_across_pooled_rows() {
        // Moments of the first n pooled rows after a seeded shuffle match
        // the moments of x across many replications.
        let s = spec_for_experiment(3, 20, 0.0, Direction::Uniform).unwrap();
        let reps = 2000;
        let (mut m_orig, mut m_perm, mut v_orig, mut v_perm) = (0.0, 0.0, 0.0, 0.0);
        for r in 0..reps {
            let data = sample(&s, SeedSpec::new(21, r));
            let pooled = data.pooled();
            let mut idx: Vec<usize> = (0..pooled.nrows()).collect();
            idx.shuffle(&mut SeedSpec::new(22, r).rng());
            let permuted = pooled.select(Axis(0), &idx[..20]);
            m_orig += data.x().mean().unwrap();
            m_perm += permuted.mean().unwrap();
            v_orig += data.x().mapv(|v| v * v).mean().unwrap();
            v_perm += permuted.mapv(|v| v * v).mean().unwrap();
        }
        let reps = reps as f64;
        // Each replicate mean has sd 1/sqrt(60); the average over reps is tiny.
        assert!((m_orig / reps - m_perm / reps).abs() < 4.0 * (2.0 / 60.0 / reps).sqrt());
        assert!((v_orig / reps - v_perm / reps).abs() < 0.02);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let s = spec2(array![1.0, -1.0]);
        let data = sample(&s, SeedSpec::new(1, 1));
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("f0,f1,label\n"));
        let back = TwoSampleData::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, data);

        let bad_label = "f0,label\n1.0,2\n";
        assert!(TwoSampleData::read_csv(bad_label.as_bytes()).is_err());
        let unequal = "f0,label\n1.0,0\n2.0,0\n3.0,1\n";
        assert!(matches!(
            TwoSampleData::read_csv(unequal.as_bytes()),
            Err(Error::Validation { field: "label", .. })
        ));
        let bad_header = "x,label\n1.0,0\n";
        assert!(TwoSampleData::read_csv(bad_header.as_bytes()).is_err());
        let interleaved = "f0,label\n1.0,1\n2.0,0\n";
        let d = TwoSampleData::read_csv(interleaved.as_bytes()).unwrap();
        assert_eq!(d.x()[[0, 0]], 2.0);
        assert_eq!(d.y()[[0, 0]], 1.0);
    }

    #[test]
    fn data_validation() {
        assert!(TwoSampleData::new(Array2::zeros((3, 2)), Array2::zeros((4, 2))).is_err());
        let mut x = Array2::zeros((3, 2));
        x[[1, 1]] = f64::NAN;
        assert!(TwoSampleData::new(x, Array2::zeros((3, 2))).is_err());
        assert!(ProblemSpec::new(
            3,
            array![0.0],
            array![0.0, 1.0],
            SpdMatrix::identity(1).unwrap()
        )
        .is_err());
    }
}
