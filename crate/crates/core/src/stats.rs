//! Statistical kernels: empirical characteristic function, moment
//! summaries, symmetric PSD square root and PCA projection.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accum::{CompensatedSum, ExactSum};
use crate::error::{Error, Result};
use crate::types::{ComplexScalar, EmbeddingMatrix, GaussianSummary};

/// Empirical characteristic function value at one frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcfEstimate {
    pub value: ComplexScalar,
    pub t: f64,
    pub n: usize,
}

/// (1/n) sum of exp(i t x) over the column, compensated summation in
/// ascending row order.
pub fn ecf(column: &[f64], t: f64) -> Result<EcfEstimate> {
    if column.is_empty() {
        return Err(Error::EmptyColumn);
    }
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidParameter(format!("frequency {t} must be a positive real")));
    }
    let value = ecf_value(column, t);
    debug_assert!(value.modulus() <= 1.0 + 1e-12);
    Ok(EcfEstimate { value, t, n: column.len() })
}

/// Same sum without the sign restriction on t; t = 0 gives exactly 1.
pub(crate) fn ecf_value(column: &[f64], t: f64) -> ComplexScalar {
    if t == 0.0 {
        return ComplexScalar::ONE;
    }
    let mut re = CompensatedSum::new();
    let mut im = CompensatedSum::new();
    for &x in column {
        let (s, c) = (t * x).sin_cos();
        re.add(c);
        im.add(s);
    }
    let n = column.len() as f64;
    ComplexScalar::new(re.value() / n, im.value() / n)
}

/// Column means and unbiased covariance (divisor n-1). Sums are exact,
/// so the result is bit-identical under any row permutation.
pub fn gaussian_summary(x: &EmbeddingMatrix) -> Result<GaussianSummary> {
    let (n, p) = (x.n(), x.p());
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let data = x.data();
    let mean: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|c| {
            let mut s = ExactSum::new();
            for i in 0..n {
                s.add(data[i * p + c]);
            }
            s.value() / n as f64
        })
        .collect();

    let pairs: Vec<(usize, usize)> =
        (0..p).flat_map(|r| (r..p).map(move |c| (r, c))).collect();
    let entries: Vec<f64> = pairs
        .par_iter()
        .map(|&(r, c)| {
            let mut s = ExactSum::new();
            for i in 0..n {
                s.add((data[i * p + r] - mean[r]) * (data[i * p + c] - mean[c]));
            }
            s.value() / (n - 1) as f64
        })
        .collect();
    let mut cov = DMatrix::zeros(p, p);
    for (&(r, c), &v) in pairs.iter().zip(entries.iter()) {
        cov[(r, c)] = v;
        cov[(c, r)] = v;
    }
    GaussianSummary::new(mean, cov, n)
}

/// Symmetric PSD square root via eigendecomposition, with eigenvalues
/// clipped at zero. Rejects asymmetric input and eigenvalues below
/// -1e-10 relative to the largest.
pub fn sym_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    if p == 0 || a.ncols() != p {
        return Err(Error::DimensionMismatch { left: p, right: a.ncols() });
    }
    let scale = a.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    for r in 0..p {
        for c in 0..r {
            if (a[(r, c)] - a[(c, r)]).abs() > 1e-10 * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    let eig = SymmetricEigen::new(a.clone());
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
    let floor = -1e-10 * lambda_max.max(1e-300);
    for &v in eig.eigenvalues.iter() {
        if v < floor {
            return Err(Error::IndefiniteMatrix { eigenvalue: v });
        }
    }
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0).sqrt()).collect();
    let vt = eig.eigenvectors.transpose();
    let mut scaled = eig.eigenvectors;
    for (j, &r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(r);
    }
    let mut out = scaled * vt;
    // enforce exact symmetry for downstream checks
    for r in 0..p {
        for c in 0..r {
            let v = 0.5 * (out[(r, c)] + out[(c, r)]);
            out[(r, c)] = v;
            out[(c, r)] = v;
        }
    }
    Ok(out)
}

/// Fits PCA on the pooled rows of both matrices (centered by the pooled
/// mean) and returns each set's scores in the leading k components.
/// Component signs are fixed so the largest-magnitude loading is
/// positive; ties take the first such index.
pub fn pca_project(
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
    k: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if a.p() != b.p() {
        return Err(Error::DimensionMismatch { left: a.p(), right: b.p() });
    }
    let p = a.p();
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!("k = {k} out of range for p = {p}")));
    }
    let total = a.n() + b.n();
    if total < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: total });
    }

    let mut mean = vec![0.0f64; p];
    for (c, m) in mean.iter_mut().enumerate() {
        let mut s = ExactSum::new();
        for src in [a, b] {
            let data = src.data();
            for i in 0..src.n() {
                s.add(data[i * p + c]);
            }
        }
        *m = s.value() / total as f64;
    }

    let mut cov = DMatrix::zeros(p, p);
    for r in 0..p {
        for c in r..p {
            let mut s = ExactSum::new();
            for src in [a, b] {
                let data = src.data();
                for i in 0..src.n() {
                    s.add((data[i * p + r] - mean[r]) * (data[i * p + c] - mean[c]));
                }
            }
            let v = s.value() / (total - 1) as f64;
            cov[(r, c)] = v;
            cov[(c, r)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let mut components = DMatrix::zeros(p, k);
    for (out_col, &src_col) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(src_col);
        let mut lead = 0;
        for r in 1..p {
            if col[r].abs() > col[lead].abs() {
                lead = r;
            }
        }
        let flip = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..p {
            components[(r, out_col)] = flip * col[r];
        }
    }

    let project = |m: &EmbeddingMatrix| {
        let mut scores = DMatrix::zeros(m.n(), k);
        for i in 0..m.n() {
            let row = m.row(i);
            for j in 0..k {
                let mut acc = CompensatedSum::new();
                for c in 0..p {
                    acc.add((row[c] - mean[c]) * components[(c, j)]);
                }
                scores[(i, j)] = acc.value();
            }
        }
        scores
    };
    Ok((project(a), project(b)))
}
