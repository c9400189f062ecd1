use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use ndarray::{Array1, Array2};
use twosample_core::SpdMatrix;

/// Where the known covariance comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SigmaSource {
    Identity,
    /// CSV holding the `d` variances, in one row or one column.
    Diagonal(PathBuf),
    /// Headerless CSV holding the full `d x d` matrix.
    Dense(PathBuf),
}

impl FromStr for SigmaSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "identity" {
            return Ok(SigmaSource::Identity);
        }
        match s.split_once(':') {
            Some(("diagonal", path)) if !path.is_empty() => Ok(SigmaSource::Diagonal(path.into())),
            Some(("dense", path)) if !path.is_empty() => Ok(SigmaSource::Dense(path.into())),
            _ => Err(format!(
                "expected `identity`, `diagonal:<path>` or `dense:<path>`, got `{s}`"
            )),
        }
    }
}

impl SigmaSource {
    pub fn load(&self, d: usize) -> Result<SpdMatrix> {
        let sigma = match self {
            SigmaSource::Identity => SpdMatrix::identity(d)?,
            SigmaSource::Diagonal(path) => {
                let values: Vec<f64> = read_matrix(path)?.into_iter().flatten().collect();
                SpdMatrix::diagonal(Array1::from(values))
                    .with_context(|| format!("invalid diagonal covariance in {}", path.display()))?
            }
            SigmaSource::Dense(path) => {
                let rows = read_matrix(path)?;
                let cols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != cols) {
                    bail!("sigma: rows of {} have different lengths", path.display());
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                let m = Array2::from_shape_vec((rows.len(), cols), flat)?;
                SpdMatrix::dense(m)
                    .with_context(|| format!("invalid dense covariance in {}", path.display()))?
            }
        };
        if sigma.dim() != d {
            bail!(
                "sigma: covariance has dimension {}, data has {d} features",
                sigma.dim()
            );
        }
        Ok(sigma)
    }
}

fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("cannot read {}", path.display()))?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().with_context(|| {
                    format!(
                        "sigma: {} row {}: `{field}` is not a number",
                        path.display(),
                        i + 1
                    )
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("sigma: {} is empty", path.display());
    }
    Ok(rows)
}
