use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One complex value, e.g. an empirical characteristic function estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexScalar {
    pub re: f64,
    pub im: f64,
}

impl ComplexScalar {
    pub const ONE: ComplexScalar = ComplexScalar { re: 1.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn modulus(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn conj(self) -> Self {
        Self { re: self.re, im: -self.im }
    }
}

impl std::ops::Sub for ComplexScalar {
    type Output = ComplexScalar;

    fn sub(self, rhs: ComplexScalar) -> Self {
        Self { re: self.re - rhs.re, im: self.im - rhs.im }
    }
}

/// Dense n×p sample matrix, row-major. Rows are samples, columns are
/// embedding features. Construction rejects empty shapes and non-finite
/// entries, so downstream code never sees NaN or infinity.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f64>,
    n: usize,
    p: usize,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::EmptyMatrix);
        }
        if data.len() != n * p {
            return Err(Error::InvalidParameter(format!(
                "data length {} does not match {}x{}",
                data.len(),
                n,
                p
            )));
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i / p, col: i % p });
            }
        }
        Ok(Self { data, n, p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let p = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::RaggedRows { row: i, expected: p, got: row.len() });
            }
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), p, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    /// Copies feature column `j` into a contiguous vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        debug_assert!(j < self.p);
        (0..self.n).map(|i| self.data[i * self.p + j]).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Strictly increasing positive frequencies at which the score is taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySet {
    values: Vec<f64>,
}

impl FrequencySet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidFrequencies("at least one frequency required".into()));
        }
        for &t in &values {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::InvalidFrequencies(format!("frequency {t} must be a positive real")));
            }
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidFrequencies("frequencies must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for FrequencySet {
    fn default() -> Self {
        Self { values: vec![0.5, 1.0] }
    }
}

/// Score at one frequency plus the per-feature modulus gaps behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcsPoint {
    pub t: f64,
    pub ecs_value: f64,
    pub per_feature: Vec<f64>,
}

/// Scores for every requested frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcsResult {
    pub per_t: Vec<EcsPoint>,
    pub n: usize,
    pub m: usize,
}

/// Mean and unbiased covariance of one embedding set.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub n: usize,
}

impl GaussianSummary {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>, n: usize) -> Result<Self> {
        let p = mean.len();
        if p == 0 {
            return Err(Error::EmptyMatrix);
        }
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::DimensionMismatch { left: p, right: cov.nrows() });
        }
        let scale = cov.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for r in 0..p {
            for c in 0..r {
                if (cov[(r, c)] - cov[(c, r)]).abs() > 1e-12 * scale {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        Ok(Self { mean, cov, n })
    }

    pub fn p(&self) -> usize {
        self.mean.len()
    }
}

/// Distribution family for the built-in samplers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Normal,
    /// Student t with the given degrees of freedom.
    StudentT { df: f64 },
}

/// Scale matrix choice.
#[derive(Clone, Debug, PartialEq)]
pub enum ScaleSpec {
    /// Population covariance exactly I_p. For the t family this selects
    /// scale ((df-2)/df)*I_p, which requires df > 2.
    IdentityCovariance,
    /// Explicit p×p scale matrix, must be PSD.
    Matrix(DMatrix<f64>),
}

/// Parametric sampling description: family, dimension, mean and scale.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionSpec {
    pub family: Family,
    pub p: usize,
    pub mean: Vec<f64>,
    pub scale: ScaleSpec,
}

impl DistributionSpec {
    pub fn new(family: Family, p: usize, mean: Vec<f64>, scale: ScaleSpec) -> Result<Self> {
        let spec = Self { family, p, mean, scale };
        spec.validate()?;
        Ok(spec)
    }

    /// N(0, I_p).
    pub fn standard_normal(p: usize) -> Result<Self> {
        Self::new(Family::Normal, p, vec![0.0; p], ScaleSpec::IdentityCovariance)
    }

    /// Centered t with population covariance I_p; needs df > 2.
    pub fn student_t_unit_covariance(df: f64, p: usize) -> Result<Self> {
        Self::new(Family::StudentT { df }, p, vec![0.0; p], ScaleSpec::IdentityCovariance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if self.mean.len() != self.p {
            return Err(Error::InvalidSpec(format!(
                "mean length {} does not match dimension {}",
                self.mean.len(),
                self.p
            )));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("mean entries must be finite".into()));
        }
        if let Family::StudentT { df } = self.family {
            if !df.is_finite() || df <= 0.0 {
                return Err(Error::InvalidSpec(format!("df {df} must be a positive real")));
            }
            if df <= 2.0 && matches!(self.scale, ScaleSpec::IdentityCovariance) {
                return Err(Error::InvalidSpec(format!(
                    "identity-covariance scaling needs df > 2, got {df}"
                )));
            }
        }
        if let ScaleSpec::Matrix(m) = &self.scale {
            if m.nrows() != self.p || m.ncols() != self.p {
                return Err(Error::InvalidSpec(format!(
                    "scale is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    self.p,
                    self.p
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec("scale entries must be finite".into()));
            }
            let scale = m.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            for r in 0..self.p {
                for c in 0..r {
                    if (m[(r, c)] - m[(c, r)]).abs() > 1e-10 * scale {
                        return Err(Error::InvalidSpec("scale matrix must be symmetric".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Checks that two matrices can be compared feature-wise. Sample counts
/// may differ; feature dimensions may not.
pub fn validate_pair<'a>(
    real: &'a EmbeddingMatrix,
    synthetic: &'a EmbeddingMatrix,
) -> Result<(&'a EmbeddingMatrix, &'a EmbeddingMatrix)> {
    if real.p() != synthetic.p() {
        return Err(Error::DimensionMismatch { left: real.p(), right: synthetic.p() });
    }
    Ok((real, synthetic))
}
