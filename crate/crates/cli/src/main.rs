//! ecscore command line: compare embedding sets, replicate the df sweep,
//! test normality, and emit PCA scatter data. Exit codes: 0 success,
//! 1 internal numeric failure, 2 bad input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use ecscore::{
    ecs, frechet_distance, gaussian_summary, henze_zirkler, mardia_kurtosis, pca_project,
    read_matrix, replicate_table1, tail_bound, write_report, write_scatter, EmbeddingMatrix,
    Error, FrequencySet, InputRecord, NormalityTestResult, ReportDocument, SimulationTable,
    Timestamps,
};

#[derive(Parser)]
#[command(name = "ecscore", version, about = "Characteristic-function metrics for embedding sets")]
struct Cli {
    /// Worker threads; defaults to one per hardware thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Leave timestamps out of reports so repeated runs are byte-identical.
    #[arg(long, global = true)]
    no_timestamps: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Score a real embedding file against a synthetic one.
    Compare {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        /// Frequencies, ascending.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0])]
        t: Vec<f64>,
        /// Any of: ecs, fid.
        #[arg(long, value_delimiter = ',', default_values_t = ["ecs".to_string(), "fid".to_string()])]
        metrics: Vec<String>,
        /// Tail-bound scales evaluated on the real input (flattened).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        tail: Option<Vec<f64>>,
        /// Quadrature nodes for the tail bound; odd, at least 3.
        #[arg(long, default_value_t = 101)]
        quad_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicate the normal-vs-t score table.
    Simulate {
        /// The only simulation offered; must be present.
        #[arg(long)]
        table1: bool,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0])]
        t: Vec<f64>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Override n with the publication-scale 10^6.
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multivariate normality tests on one embedding file.
    Normality {
        #[arg(long)]
        input: PathBuf,
        /// Any of: mardia, hz; run in the order given.
        #[arg(long, value_delimiter = ',', default_values_t = ["mardia".to_string(), "hz".to_string()])]
        tests: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pooled two-component PCA scatter of two embedding files.
    Pca {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(k).build_global().is_err() {
            eprintln!("error: thread pool already initialized");
            return ExitCode::from(2);
        }
    }
    let started = now_string();
    match run(cli.cmd, cli.no_timestamps, started) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_class(&e))
        }
    }
}

fn exit_class(e: &Error) -> u8 {
    match e {
        Error::NotSymmetric
        | Error::IndefiniteMatrix { .. }
        | Error::NumericFailure(_)
        | Error::Json(_) => 1,
        _ => 2,
    }
}

fn now_string() -> String {
    match SystemTime::now().duration_since(UNIX_EPOCH) {
        Ok(d) => format!("{}.{:03}", d.as_secs(), d.subsec_millis()),
        Err(_) => "0.000".to_string(),
    }
}

fn load_input(path: &Path) -> ecscore::Result<(EmbeddingMatrix, InputRecord)> {
    let matrix = read_matrix(path)?;
    let bytes = std::fs::read(path)?;
    let record = InputRecord {
        path: path.display().to_string(),
        sha256: ecscore::sha256_hex(&bytes),
        rows: matrix.n(),
        cols: matrix.p(),
    };
    Ok((matrix, record))
}

fn finish(
    mut doc: ReportDocument,
    out: Option<&Path>,
    no_timestamps: bool,
    started: String,
) -> ecscore::Result<()> {
    if !no_timestamps {
        doc.timestamps = Some(Timestamps { started, finished: now_string() });
    }
    if let Some(path) = out {
        write_report(&doc, path)?;
    }
    Ok(())
}

fn run(cmd: Cmd, no_timestamps: bool, started: String) -> ecscore::Result<()> {
    match cmd {
        Cmd::Compare { real, synthetic, t, metrics, tail, quad_points, out } => {
            for m in &metrics {
                if m != "ecs" && m != "fid" {
                    return Err(Error::InvalidParameter(format!(
                        "unknown metric {m:?}; expected ecs or fid"
                    )));
                }
            }
            let ts = FrequencySet::new(t)?;
            let (real_m, real_rec) = load_input(&real)?;
            let (syn_m, syn_rec) = load_input(&synthetic)?;
            let mut doc = ReportDocument::new(env!("CARGO_PKG_VERSION"));
            doc.inputs = vec![real_rec, syn_rec];

            if metrics.iter().any(|m| m == "ecs") {
                let scored = ecs(&real_m, &syn_m, &ts)?;
                for point in &scored.per_t {
                    println!("T={:.6} ecs={:.6}", point.t, point.ecs_value);
                }
                doc.ecs = Some(scored);
            }
            if metrics.iter().any(|m| m == "fid") {
                let fit_real = gaussian_summary(&real_m)?;
                let fit_syn = gaussian_summary(&syn_m)?;
                if fit_real.p() != fit_syn.p() {
                    return Err(Error::DimensionMismatch {
                        left: fit_real.p(),
                        right: fit_syn.p(),
                    });
                }
                let fr = frechet_distance(&fit_real, &fit_syn)?;
                println!("fid={:.6} fid_per_dimension={:.6}", fr.fid, fr.fid_per_dimension);
                doc.frechet = Some(fr);
            }
            if let Some(scales) = tail {
                let flat = real_m.data();
                let mut bounds = Vec::with_capacity(scales.len());
                for &s in &scales {
                    let b = tail_bound(flat, s, quad_points)?;
                    println!(
                        "s={:.6} bound_exact={:.6} bound_trapezoid={:.6} empirical_tail={:.6}",
                        b.s, b.bound_exact, b.bound_trapezoid, b.empirical_tail
                    );
                    bounds.push(b);
                }
                doc.tail = Some(bounds);
            }
            finish(doc, out.as_deref(), no_timestamps, started)
        }
        Cmd::Simulate { table1, n, reps, t, seed, full_scale, out } => {
            if !table1 {
                return Err(Error::InvalidParameter(
                    "simulate requires --table1 (the only supported study)".into(),
                ));
            }
            let ts = FrequencySet::new(t)?;
            let n = if full_scale { 1_000_000 } else { n };
            let rows = replicate_table1(n, reps, &ts, seed)?;
            println!("df        T         mean_ecs   stderr");
            for row in &rows {
                let se = row
                    .stderr
                    .map(|s| format!("{s:.6}"))
                    .unwrap_or_else(|| "n/a".to_string());
                println!("{:<9} {:<9.4} {:<10.6} {}", row.df, row.t, row.mean_ecs, se);
            }
            let mut doc = ReportDocument::new(env!("CARGO_PKG_VERSION"));
            doc.simulation = Some(SimulationTable { n, reps, rows });
            doc.rng_seed = Some(seed);
            finish(doc, out.as_deref(), no_timestamps, started)
        }
        Cmd::Normality { input, tests, out } => {
            let (matrix, record) = load_input(&input)?;
            let mut results: Vec<NormalityTestResult> = Vec::with_capacity(tests.len());
            for name in &tests {
                let r = match name.as_str() {
                    "mardia" => mardia_kurtosis(&matrix)?,
                    "hz" => henze_zirkler(&matrix)?,
                    other => {
                        return Err(Error::InvalidParameter(format!(
                            "unknown test {other:?}; expected mardia or hz"
                        )))
                    }
                };
                let used = r.n_used.map(|u| format!(" n_used={u}")).unwrap_or_default();
                println!(
                    "{} statistic={:.6} p_value={:.3e} n={} p={}{}",
                    match r.test_name {
                        ecscore::NormalityTest::MardiaKurtosis => "mardia_kurtosis",
                        ecscore::NormalityTest::HenzeZirkler => "henze_zirkler",
                    },
                    r.statistic,
                    r.p_value,
                    r.n,
                    r.p,
                    used
                );
                results.push(r);
            }
            let mut doc = ReportDocument::new(env!("CARGO_PKG_VERSION"));
            doc.inputs = vec![record];
            doc.normality = Some(results);
            finish(doc, out.as_deref(), no_timestamps, started)
        }
        Cmd::Pca { a, b, out } => {
            let (ma, _) = load_input(&a)?;
            let (mb, _) = load_input(&b)?;
            let (sa, sb) = pca_project(&ma, &mb, 2)?;
            write_scatter(&sa, &sb, &out)?;
            println!("wrote {} scatter rows to {}", sa.nrows() + sb.nrows(), out.display());
            Ok(())
        }
    }
}
