//! Seedable multivariate normal and t samplers, plus the df-sweep
//! replication harness for the score table.

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accum::CompensatedSum;
use crate::error::{Error, Result};
use crate::metrics::ecs;
use crate::types::{DistributionSpec, EmbeddingMatrix, Family, FrequencySet, ScaleSpec};

/// Degrees-of-freedom sweep for the replication table, heaviest tail last.
pub const TABLE1_DF_GRID: [f64; 5] = [100.0, 10.0, 5.0, 3.0, 2.01];

/// Embedding dimension used by the replication table.
pub const TABLE1_P: usize = 32;

/// A 64-bit seed wrapper. Row r of any sample always comes from stream r
/// of a ChaCha8 generator keyed by this seed, so output never depends on
/// worker count or scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededRng {
    seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child seed for the given tag; stable across calls.
    pub fn derive(&self, tag: u64) -> SeededRng {
        SeededRng::new(splitmix64(self.seed ^ splitmix64(tag)))
    }

    fn row_rng(&self, row: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(row);
        rng
    }
}

enum Factor {
    Unit,
    Scalar(f64),
    Lower(DMatrix<f64>),
}

impl Factor {
    /// Writes mean + factor * z into out.
    fn apply(&self, z: &[f64], mean: &[f64], out: &mut [f64], scale: f64) {
        match self {
            Factor::Unit => {
                for (o, (&m, &v)) in out.iter_mut().zip(mean.iter().zip(z.iter())) {
                    *o = m + v * scale;
                }
            }
            Factor::Scalar(s) => {
                for (o, (&m, &v)) in out.iter_mut().zip(mean.iter().zip(z.iter())) {
                    *o = m + v * s * scale;
                }
            }
            Factor::Lower(l) => {
                for (r, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, &v) in z.iter().enumerate().take(r + 1) {
                        acc += l[(r, k)] * v;
                    }
                    *o = mean[r] + acc * scale;
                }
            }
        }
    }
}

/// Draws `count` rows from the spec. Each row reads p standard normals
/// and, for the t family, one gamma variate from its own substream, in
/// that order; results are bit-identical for any worker count.
pub fn sample(spec: &DistributionSpec, count: usize, rng: &SeededRng) -> Result<EmbeddingMatrix> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::EmptyMatrix);
    }
    let p = spec.p;

    let factor = match (&spec.family, &spec.scale) {
        (Family::Normal, ScaleSpec::IdentityCovariance) => Factor::Unit,
        (Family::StudentT { df }, ScaleSpec::IdentityCovariance) => {
            Factor::Scalar(((df - 2.0) / df).sqrt())
        }
        (_, ScaleSpec::Matrix(m)) => {
            let chol = Cholesky::new(m.clone()).ok_or(Error::NonPsdScale)?;
            Factor::Lower(chol.l())
        }
    };
    let gamma = match spec.family {
        Family::Normal => None,
        Family::StudentT { df } => {
            Some((Gamma::new(df / 2.0, 2.0).map_err(|e| {
                Error::InvalidParameter(format!("chi-square shape for df {df}: {e}"))
            })?, df))
        }
    };

    let mut data = vec![0.0f64; count * p];
    data.par_chunks_mut(p).enumerate().for_each_init(
        || vec![0.0f64; p],
        |z, (i, row)| {
            let mut rng = rng.row_rng(i as u64);
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let scale = match &gamma {
                None => 1.0,
                Some((g, df)) => {
                    let draw: f64 = g.sample(&mut rng);
                    (draw / df).sqrt().recip()
                }
            };
            factor.apply(z, &spec.mean, row, scale);
        },
    );
    EmbeddingMatrix::new(count, p, data)
}

/// One cell of the replication table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub df: f64,
    pub t: f64,
    pub mean_ecs: f64,
    /// Standard error over replicates; absent when reps = 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub stderr: Option<f64>,
}

/// Sweeps df over the table grid: per replicate draws a fresh standard
/// normal sample and a fresh unit-covariance t sample (both p = 32, same
/// count) and scores them at each frequency. Rows come out df-descending,
/// frequencies ascending within each df.
pub fn replicate_table1(
    n: usize,
    reps: usize,
    ts: &FrequencySet,
    seed: u64,
) -> Result<Vec<Table1Row>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidParameter("replicate count must be positive".into()));
    }
    let base = SeededRng::new(seed);
    let normal_spec = DistributionSpec::standard_normal(TABLE1_P)?;
    let mut rows = Vec::with_capacity(TABLE1_DF_GRID.len() * ts.len());
    for (di, &df) in TABLE1_DF_GRID.iter().enumerate() {
        let t_spec = DistributionSpec::student_t_unit_covariance(df, TABLE1_P)?;
        let df_seed = base.derive(di as u64);
        let mut per_t_values: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); ts.len()];
        for rep in 0..reps {
            let rep_seed = df_seed.derive(rep as u64);
            let normal = sample(&normal_spec, n, &rep_seed.derive(0))?;
            let heavy = sample(&t_spec, n, &rep_seed.derive(1))?;
            let scored = ecs(&normal, &heavy, ts)?;
            for (slot, point) in per_t_values.iter_mut().zip(scored.per_t.iter()) {
                slot.push(point.ecs_value);
            }
        }
        for (&t, values) in ts.values().iter().zip(per_t_values.iter()) {
            let mut total = CompensatedSum::new();
            for &v in values {
                total.add(v);
            }
            let mean = total.value() / reps as f64;
            let stderr = if reps >= 2 {
                let mut sq = CompensatedSum::new();
                for &v in values {
                    sq.add((v - mean) * (v - mean));
                }
                Some((sq.value() / (reps as f64 - 1.0)).sqrt() / (reps as f64).sqrt())
            } else {
                None
            };
            rows.push(Table1Row { df, t, mean_ecs: mean, stderr });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::gaussian_summary;

    #[test]
    fn sampling_is_bit_identical_across_runs_and_pools() {
        let spec = DistributionSpec::student_t_unit_covariance(5.0, 4).unwrap();
        let rng = SeededRng::new(99);
        let a = sample(&spec, 512, &rng).unwrap();
        let b = sample(&spec, 512, &rng).unwrap();
        assert_eq!(a.data(), b.data());

        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let quad = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let c = single.install(|| sample(&spec, 512, &rng).unwrap());
        let d = quad.install(|| sample(&spec, 512, &rng).unwrap());
        assert_eq!(c.data(), d.data());
        assert_eq!(a.data(), c.data());
    }

    #[test]
    fn row_prefix_is_count_independent() {
        let spec = DistributionSpec::standard_normal(3).unwrap();
        let rng = SeededRng::new(7);
        let small = sample(&spec, 10, &rng).unwrap();
        let large = sample(&spec, 100, &rng).unwrap();
        for i in 0..10 {
            assert_eq!(small.row(i), large.row(i));
        }
    }

    #[test]
    fn normal_sample_moments_match_population() {
        let n = 200_000;
        let spec = DistributionSpec::standard_normal(8).unwrap();
        let x = sample(&spec, n, &SeededRng::new(12)).unwrap();
        let s = gaussian_summary(&x).unwrap();
        let tol = 4.0 / (n as f64).sqrt();
        for &m in &s.mean {
            assert!(m.abs() < tol, "mean entry {m}");
        }
        for i in 0..8 {
            assert!((s.cov[(i, i)] - 1.0).abs() < 0.02, "diag {}", s.cov[(i, i)]);
        }
    }

    #[test]
    fn t5_unit_covariance_moments_converge() {
        let n = 50_000;
        let spec = DistributionSpec::student_t_unit_covariance(5.0, 4).unwrap();
        let x = sample(&spec, n, &SeededRng::new(13)).unwrap();
        let s = gaussian_summary(&x).unwrap();
        for &m in &s.mean {
            assert!(m.abs() < 5.0 / (n as f64).sqrt(), "mean entry {m}");
        }
        for i in 0..4 {
            assert!((s.cov[(i, i)] - 1.0).abs() < 0.25, "diag {}", s.cov[(i, i)]);
        }
    }

    #[test]
    fn heavy_tail_rows_dwarf_normal_rows() {
        let n = 20_000;
        let normal = sample(&DistributionSpec::standard_normal(8).unwrap(), n, &SeededRng::new(14)).unwrap();
        let heavy = sample(
            &DistributionSpec::student_t_unit_covariance(2.01, 8).unwrap(),
            n,
            &SeededRng::new(15),
        )
        .unwrap();
        let max_norm = |x: &EmbeddingMatrix| {
            (0..x.n())
                .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0f64, f64::max)
        };
        assert!(max_norm(&heavy) > 3.0 * max_norm(&normal));
    }

    #[test]
    fn df_two_with_identity_flag_is_invalid() {
        assert!(matches!(
            DistributionSpec::student_t_unit_covariance(2.0, 4),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn explicit_scale_matrix_shapes_the_covariance() {
        let scale = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let spec = DistributionSpec::new(
            Family::Normal,
            2,
            vec![0.0, 0.0],
            ScaleSpec::Matrix(scale.clone()),
        )
        .unwrap();
        let x = sample(&spec, 100_000, &SeededRng::new(16)).unwrap();
        let s = gaussian_summary(&x).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((s.cov[(r, c)] - scale[(r, c)]).abs() < 0.1, "cov {:?}", s.cov);
            }
        }
    }

    #[test]
    fn indefinite_scale_matrix_is_rejected() {
        let scale = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let spec = DistributionSpec::new(
            Family::Normal,
            2,
            vec![0.0, 0.0],
            ScaleSpec::Matrix(scale),
        )
        .unwrap();
        assert!(matches!(sample(&spec, 10, &SeededRng::new(1)), Err(Error::NonPsdScale)));
    }

    #[test]
    fn table_rows_come_out_in_grid_order() {
        let ts = FrequencySet::default();
        let rows = replicate_table1(2000, 2, &ts, 5).unwrap();
        assert_eq!(rows.len(), 10);
        let mut k = 0;
        for &df in &TABLE1_DF_GRID {
            for &t in ts.values() {
                assert_eq!(rows[k].df, df);
                assert_eq!(rows[k].t, t);
                let se = rows[k].stderr.unwrap();
                assert!(se >= 0.0 && se.is_finite());
                k += 1;
            }
        }
        // The heavy-tail end of the sweep scores far above the near-normal end.
        let at_t1 = |df: f64| rows.iter().find(|r| r.df == df && r.t == 1.0).unwrap().mean_ecs;
        assert!(at_t1(2.01) > at_t1(100.0) + 0.1);
    }

    #[test]
    fn single_replicate_has_no_stderr() {
        let rows = replicate_table1(500, 1, &FrequencySet::new(vec![1.0]).unwrap(), 9).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.stderr.is_none()));
    }

    #[test]
    fn zero_counts_are_rejected() {
        let ts = FrequencySet::default();
        assert!(sample(&DistributionSpec::standard_normal(2).unwrap(), 0, &SeededRng::new(1)).is_err());
        assert!(replicate_table1(0, 2, &ts, 1).is_err());
        assert!(replicate_table1(100, 0, &ts, 1).is_err());
    }

    #[test]
    fn derive_is_stable_and_spreads() {
        let a = SeededRng::new(42);
        assert_eq!(a.derive(1).seed(), a.derive(1).seed());
        assert_ne!(a.derive(1).seed(), a.derive(2).seed());
        assert_ne!(a.derive(1).seed(), SeededRng::new(43).derive(1).seed());
    }
}
