//! Distribution comparison metrics: the characteristic-score estimator,
//! the closed-form Gaussian Fréchet distance, and tail diagnostics built
//! on the empirical characteristic function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accum::CompensatedSum;
use crate::error::{Error, Result};
use crate::stats::{ecf_value, sym_sqrt};
use crate::types::{validate_pair, EcsPoint, EcsResult, EmbeddingMatrix, FrequencySet, GaussianSummary};

/// Fréchet distance between two Gaussian summaries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrechetResult {
    pub fid: f64,
    pub fid_per_dimension: f64,
    pub p: usize,
}

/// Tail-mass bound diagnostics at one scale s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub s: f64,
    pub bound_exact: f64,
    pub bound_trapezoid: f64,
    pub empirical_tail: f64,
}

/// Characteristic score between two embedding sets at every requested
/// frequency: mean modulus gap of the per-feature empirical CFs,
/// normalized by p and T. Feature columns are processed in parallel and
/// combined in ascending column order, so the result is bit-identical
/// for any worker count.
pub fn ecs(
    real: &EmbeddingMatrix,
    synthetic: &EmbeddingMatrix,
    ts: &FrequencySet,
) -> Result<EcsResult> {
    let (real, synthetic) = validate_pair(real, synthetic)?;
    let p = real.p();
    let gaps: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|col| {
            let a = real.column(col);
            let b = synthetic.column(col);
            ts.values()
                .iter()
                .map(|&t| {
                    let gap = (ecf_value(&a, t) - ecf_value(&b, t)).modulus();
                    gap.min(2.0)
                })
                .collect()
        })
        .collect();

    let per_t = ts
        .values()
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let per_feature: Vec<f64> = gaps.iter().map(|g| g[ti]).collect();
            let mut total = CompensatedSum::new();
            for &g in &per_feature {
                total.add(g);
            }
            EcsPoint { t, ecs_value: total.value() / (p as f64 * t), per_feature }
        })
        .collect();
    Ok(EcsResult { per_t, n: real.n(), m: synthetic.n() })
}

/// Closed-form Fréchet distance:
/// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}).
/// Small negative totals from roundoff (within 1e-8) clip to zero;
/// anything lower reports a numeric failure.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<FrechetResult> {
    let p = a.p();
    if p != b.p() {
        return Err(Error::DimensionMismatch { left: p, right: b.p() });
    }
    let root_a = sym_sqrt(&a.cov)?;
    let mut inner = &root_a * &b.cov * &root_a;
    for r in 0..p {
        for c in 0..r {
            let v = 0.5 * (inner[(r, c)] + inner[(c, r)]);
            inner[(r, c)] = v;
            inner[(c, r)] = v;
        }
    }
    let cross = sym_sqrt(&inner)?;

    let mut total = CompensatedSum::new();
    for (ma, mb) in a.mean.iter().zip(b.mean.iter()) {
        let d = ma - mb;
        total.add(d * d);
    }
    for i in 0..p {
        total.add(a.cov[(i, i)]);
        total.add(b.cov[(i, i)]);
        total.add(-2.0 * cross[(i, i)]);
    }
    let mut fid = total.value();
    if fid < -1e-8 {
        return Err(Error::NumericFailure(format!(
            "Fréchet distance {fid:e} is negative beyond roundoff tolerance"
        )));
    }
    if fid < 0.0 {
        fid = 0.0;
    }
    Ok(FrechetResult { fid, fid_per_dimension: fid / p as f64, p })
}

/// Tail-mass bound at scale s: P(|X| > 2s) is bounded by
/// s * \int_{-1/s}^{1/s} (phi(0) - phi(t)) dt, evaluated on the
/// empirical CF with composite Simpson quadrature, alongside the
/// two-point trapezoid surrogate 2 (1 - Re phi(1/s)) and the observed
/// tail fraction.
pub fn tail_bound(column: &[f64], s: f64, quad_points: usize) -> Result<TailBound> {
    if column.is_empty() {
        return Err(Error::EmptyColumn);
    }
    if !s.is_finite() || s <= 0.0 {
        return Err(Error::InvalidParameter(format!("scale {s} must be a positive real")));
    }
    if quad_points < 3 || quad_points.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "quad_points {quad_points} must be odd and at least 3"
        )));
    }

    let u = 1.0 / s;
    let half = (quad_points - 1) / 2;
    let h = u / half as f64;
    // phi at the positive nodes; negative nodes follow by conjugation and
    // contribute the same real part, node 0 is exactly 1.
    let positive: Vec<f64> = (1..=half)
        .map(|k| ecf_value(column, k as f64 * h).re)
        .collect();

    let mut integral = CompensatedSum::new();
    for (k, &re) in positive.iter().enumerate() {
        // Simpson weights: 4 on odd offsets from the center, 2 on even,
        // 1 at the endpoints; symmetric nodes fold into a factor 2.
        let offset = k + 1;
        let w = if offset == half {
            1.0
        } else if offset % 2 == 1 {
            4.0
        } else {
            2.0
        };
        integral.add(2.0 * w * (1.0 - re));
    }
    let bound_exact = s * integral.value() * h / 3.0;
    if bound_exact < -1e-8 {
        return Err(Error::NumericFailure(format!(
            "tail bound {bound_exact:e} is negative beyond roundoff tolerance"
        )));
    }
    let bound_exact = bound_exact.max(0.0);

    let bound_trapezoid = 2.0 * (1.0 - ecf_value(column, u).re);
    let cut = 2.0 * s;
    let exceed = column.iter().filter(|&&x| x.abs() > cut).count();
    let empirical_tail = exceed as f64 / column.len() as f64;
    Ok(TailBound { s, bound_exact, bound_trapezoid, empirical_tail })
}

/// Residual between the empirical CF at a small t and its Taylor partial
/// sum built from sample moments up to order ell. Diagnostic only.
pub fn moment_taylor_check(column: &[f64], t: f64, ell: usize) -> Result<f64> {
    if column.is_empty() {
        return Err(Error::EmptyColumn);
    }
    if !t.is_finite() || t <= 0.0 || t > 0.1 {
        return Err(Error::InvalidParameter(format!("t {t} must lie in (0, 0.1]")));
    }
    if !(1..=2).contains(&ell) {
        return Err(Error::InvalidParameter(format!("ell {ell} must be 1 or 2")));
    }
    let n = column.len() as f64;
    let mut m1 = CompensatedSum::new();
    let mut m2 = CompensatedSum::new();
    for &x in column {
        m1.add(x);
        if ell == 2 {
            m2.add(x * x);
        }
    }
    let mean = m1.value() / n;
    let re = if ell == 2 { 1.0 - t * t * (m2.value() / n) / 2.0 } else { 1.0 };
    let im = t * mean;
    let phi = ecf_value(column, t);
    Ok((phi.re - re).hypot(phi.im - im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{sample, SeededRng};
    use crate::types::{DistributionSpec, Family, ScaleSpec};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn summary(mean: Vec<f64>, diag: Vec<f64>) -> GaussianSummary {
        let p = mean.len();
        let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
        GaussianSummary::new(mean, cov, p.max(2)).unwrap()
    }

    #[test]
    fn ecs_identical_matrices_is_exactly_zero() {
        let x = sample(&DistributionSpec::standard_normal(4).unwrap(), 500, &SeededRng::new(3)).unwrap();
        let r = ecs(&x, &x, &FrequencySet::default()).unwrap();
        for point in &r.per_t {
            assert_eq!(point.ecs_value, 0.0);
            assert!(point.per_feature.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn ecs_shifted_gaussian_matches_analytic_value() {
        // |e^{-t^2/2} (1 - e^{it})| / t at t = 1 for N(0,1) vs N(1,1)
        let n = 200_000;
        let a = sample(&DistributionSpec::standard_normal(1).unwrap(), n, &SeededRng::new(21)).unwrap();
        let shifted = DistributionSpec::new(
            Family::Normal,
            1,
            vec![1.0],
            ScaleSpec::IdentityCovariance,
        )
        .unwrap();
        let b = sample(&shifted, n, &SeededRng::new(22)).unwrap();
        let r = ecs(&a, &b, &FrequencySet::new(vec![1.0]).unwrap()).unwrap();
        let analytic = (-0.5f64).exp() * 2.0 * 0.5f64.sin(); // 0.581572576425384
        assert!((r.per_t[0].ecs_value - analytic).abs() < 0.01);
    }

    #[test]
    fn ecs_consistency_fields() {
        let a = sample(&DistributionSpec::standard_normal(3).unwrap(), 300, &SeededRng::new(1)).unwrap();
        let b = sample(&DistributionSpec::student_t_unit_covariance(3.0, 3).unwrap(), 200, &SeededRng::new(2)).unwrap();
        let ts = FrequencySet::default();
        let r = ecs(&a, &b, &ts).unwrap();
        assert_eq!((r.n, r.m), (300, 200));
        for point in &r.per_t {
            assert!(point.per_feature.iter().all(|&g| (0.0..=2.0).contains(&g)));
            let mut s = CompensatedSum::new();
            for &g in &point.per_feature {
                s.add(g);
            }
            let recon = s.value() / (3.0 * point.t);
            assert_abs_diff_eq!(point.ecs_value, recon, epsilon = 1e-12 * recon.abs().max(1.0));
            assert!(point.ecs_value >= 0.0 && point.ecs_value <= 2.0 / point.t);
        }
    }

    #[test]
    fn frechet_identical_summaries() {
        let s = summary(vec![0.5, -0.3, 1.0], vec![1.0, 2.0, 0.5]);
        let r = frechet_distance(&s, &s).unwrap();
        assert!(r.fid.abs() <= 1e-10);
        assert_eq!(r.p, 3);
    }

    #[test]
    fn frechet_mean_shift_only() {
        let a = summary(vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]);
        let b = summary(vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]);
        let r = frechet_distance(&a, &b).unwrap();
        assert_abs_diff_eq!(r.fid, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.fid_per_dimension, 1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn frechet_commuting_diagonals() {
        let a = summary(vec![0.0, 0.0], vec![4.0, 9.0]);
        let b = summary(vec![0.0, 0.0], vec![1.0, 25.0]);
        let r = frechet_distance(&a, &b).unwrap();
        // sum of (sigma_i - tau_i)^2
        assert_abs_diff_eq!(r.fid, 1.0 + 4.0, epsilon = 1e-8);
    }

    #[test]
    fn frechet_population_matched_moments() {
        let a = summary(vec![0.0; 4], vec![1.0; 4]);
        let b = summary(vec![0.0; 4], vec![1.0; 4]);
        assert_eq!(frechet_distance(&a, &b).unwrap().fid, 0.0);
    }

    #[test]
    fn frechet_dimension_mismatch() {
        let a = summary(vec![0.0; 2], vec![1.0; 2]);
        let b = summary(vec![0.0; 3], vec![1.0; 3]);
        assert!(matches!(frechet_distance(&a, &b), Err(Error::DimensionMismatch { left: 2, right: 3 })));
    }

    #[test]
    fn tail_bound_zero_column() {
        let b = tail_bound(&[0.0; 32], 2.0, 101).unwrap();
        assert_eq!(b.empirical_tail, 0.0);
        assert!(b.bound_exact.abs() <= 1e-12);
        assert!(b.bound_trapezoid.abs() <= 1e-12);
    }

    #[test]
    fn tail_bound_parameter_checks() {
        assert!(matches!(tail_bound(&[], 1.0, 101), Err(Error::EmptyColumn)));
        assert!(tail_bound(&[1.0], 0.0, 101).is_err());
        assert!(tail_bound(&[1.0], 1.0, 100).is_err());
        assert!(tail_bound(&[1.0], 1.0, 1).is_err());
    }

    #[test]
    fn tail_bound_normal_data_matches_cf_oracle() {
        // For the standard normal CF the quadrature value at s = 1.5 is
        // 0.138772389298839 and P(|Z| > 3) = 0.0026997.
        let x = sample(&DistributionSpec::standard_normal(1).unwrap(), 200_000, &SeededRng::new(17)).unwrap();
        let col = x.column(0);
        let b = tail_bound(&col, 1.5, 101).unwrap();
        assert!((b.bound_exact - 0.138772389298839).abs() < 0.01);
        assert!((b.empirical_tail - 0.0027).abs() < 0.002);
        assert!(b.empirical_tail <= b.bound_exact);
    }

    #[test]
    fn tail_bound_trapezoid_gap_shrinks_with_s() {
        let x = sample(&DistributionSpec::standard_normal(1).unwrap(), 100_000, &SeededRng::new(18)).unwrap();
        let col = x.column(0);
        let gaps: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&s| {
                let b = tail_bound(&col, s, 201).unwrap();
                (b.bound_exact - b.bound_trapezoid).abs()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps {gaps:?}");
    }

    #[test]
    fn taylor_residual_small_for_normal() {
        let x = sample(&DistributionSpec::standard_normal(1).unwrap(), 200_000, &SeededRng::new(19)).unwrap();
        let r = moment_taylor_check(&x.column(0), 0.05, 2).unwrap();
        assert!(r <= 1e-3, "residual {r}");
    }

    #[test]
    fn taylor_residual_zero_for_constant_zero() {
        let r = moment_taylor_check(&[0.0; 10], 0.05, 2).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn taylor_parameter_checks() {
        assert!(moment_taylor_check(&[1.0], 0.2, 2).is_err());
        assert!(moment_taylor_check(&[1.0], 0.05, 3).is_err());
        assert!(moment_taylor_check(&[], 0.05, 2).is_err());
    }
}
