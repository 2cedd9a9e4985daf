//! Library for comparing sets of embedding vectors through their
//! empirical characteristic functions. The headline quantity is a
//! frequency-indexed score that stays informative when heavy tails make
//! moment-based distances (Fréchet) unreliable. Also included: Gaussian
//! summary fitting, a CF-based tail-mass bound, multivariate normality
//! tests, seedable normal and t samplers, PCA projection for visual
//! checks, and file formats for matrices and reports.
//!
//! Every operation is deterministic: fixed seeds give bit-identical
//! output for any worker count, and all reductions over data rows use
//! exact or order-canonical summation.

mod accum;
mod error;
mod io;
mod metrics;
mod normality;
mod samplers;
mod stats;
mod types;

pub use accum::{exact_sum, CompensatedSum, ExactSum};
pub use error::{Error, Result};
pub use io::{
    parse_report, read_binary, read_csv, read_matrix, report_to_string, sha256_hex,
    write_atomic, write_binary, write_report, write_scatter, InputRecord, ReportDocument,
    SimulationTable, Timestamps, ECSB_MAGIC,
};
pub use metrics::{ecs, frechet_distance, moment_taylor_check, tail_bound, FrechetResult, TailBound};
pub use normality::{
    henze_zirkler, mardia_kurtosis, NormalityTest, NormalityTestResult, HZ_MAX_ROWS,
    P_VALUE_FLOOR,
};
pub use samplers::{replicate_table1, sample, SeededRng, Table1Row, TABLE1_DF_GRID, TABLE1_P};
pub use stats::{ecf, gaussian_summary, pca_project, sym_sqrt, EcfEstimate};
pub use types::{
    validate_pair, ComplexScalar, DistributionSpec, EcsPoint, EcsResult, EmbeddingMatrix,
    Family, FrequencySet, GaussianSummary, ScaleSpec,
};
