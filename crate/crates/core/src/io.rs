//! File ingestion for embedding matrices (CSV and the ECSB binary
//! format) and emission of reports and plot-ready scatter data.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{FrechetResult, TailBound};
use crate::normality::NormalityTestResult;
use crate::samplers::Table1Row;
use crate::types::{EcsResult, EmbeddingMatrix};

/// ECSB header: magic, then row and column counts as u64 little-endian,
/// then row-major f64 little-endian payload.
pub const ECSB_MAGIC: [u8; 6] = *b"ECSB1\n";

const HEADER_LEN: u64 = 6 + 8 + 8;

/// Writes bytes to path through a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_binary(x: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let n = x.n();
    let p = x.p();
    let mut bytes = Vec::with_capacity(HEADER_LEN as usize + x.data().len() * 8);
    bytes.extend_from_slice(&ECSB_MAGIC);
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    bytes.extend_from_slice(&(p as u64).to_le_bytes());
    for v in x.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_binary(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = read_file(path)?;
    if bytes.len() < ECSB_MAGIC.len() || bytes[..ECSB_MAGIC.len()] != ECSB_MAGIC {
        return Err(Error::BadMagic);
    }
    if (bytes.len() as u64) < HEADER_LEN {
        return Err(Error::TruncatedFile { expected: HEADER_LEN, got: bytes.len() as u64 });
    }
    let rows = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    let payload = (rows as u128) * (cols as u128) * 8;
    let expected = HEADER_LEN as u128 + payload;
    let got = bytes.len() as u128;
    if got < expected {
        return Err(Error::TruncatedFile {
            expected: expected.min(u64::MAX as u128) as u64,
            got: got as u64,
        });
    }
    if got > expected {
        return Err(Error::TrailingBytes { extra: (got - expected) as u64 });
    }
    let count = (rows * cols) as usize;
    let mut data = Vec::with_capacity(count);
    for chunk in bytes[HEADER_LEN as usize..].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    EmbeddingMatrix::new(rows as usize, cols as usize, data)
}

/// Reads a rectangular numeric CSV. A single leading header row is
/// skipped when any of its tokens fails to parse as a number; error
/// coordinates are 0-based over data rows, excluding that header.
pub fn read_csv(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::InvalidParameter("file is not UTF-8 text".into()))?;
    let mut lines = text.lines();
    let first = match lines.next() {
        Some(line) => line,
        None => return Err(Error::EmptyMatrix),
    };

    let parse_row = |line: &str| -> std::result::Result<Vec<f64>, usize> {
        line.split(',')
            .enumerate()
            .map(|(col, tok)| tok.trim().parse::<f64>().map_err(|_| col))
            .collect()
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    if let Ok(row) = parse_row(first) {
        rows.push(row); // otherwise the first line is a header
    }
    let offset = rows.len(); // 1 when the first line was data, 0 when header
    for (i, line) in lines.enumerate() {
        let row_index = i + offset;
        let row = parse_row(line).map_err(|col| {
            let expected = rows.first().map(|r| r.len()).unwrap_or(0);
            let got = line.split(',').count();
            if expected != 0 && got != expected {
                Error::RaggedRows { row: row_index, expected, got }
            } else {
                Error::NonNumeric { row: row_index, col }
            }
        })?;
        if let Some(expected) = rows.first().map(|r| r.len()) {
            if row.len() != expected {
                return Err(Error::RaggedRows { row: row_index, expected, got: row.len() });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    EmbeddingMatrix::from_rows(&rows)
}

/// Reads either format, deciding by the 6-byte magic.
pub fn read_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = read_file(path)?;
    if bytes.len() >= ECSB_MAGIC.len() && bytes[..ECSB_MAGIC.len()] == ECSB_MAGIC {
        read_binary(path)
    } else {
        read_csv(path)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started: String,
    pub finished: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationTable {
    pub n: usize,
    pub reps: usize,
    pub rows: Vec<Table1Row>,
}

/// Everything a CLI run reports. Serializes to key-sorted pretty JSON and
/// round-trips losslessly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool_version: String,
    pub inputs: Vec<InputRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ecs: Option<EcsResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frechet: Option<FrechetResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normality: Option<Vec<NormalityTestResult>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tail: Option<Vec<TailBound>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub simulation: Option<SimulationTable>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rng_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timestamps: Option<Timestamps>,
}

impl ReportDocument {
    pub fn new(tool_version: impl Into<String>) -> Self {
        ReportDocument {
            tool_version: tool_version.into(),
            inputs: Vec::new(),
            ecs: None,
            frechet: None,
            normality: None,
            tail: None,
            simulation: None,
            rng_seed: None,
            timestamps: None,
        }
    }
}

/// Key-sorted pretty JSON with a trailing newline.
pub fn report_to_string(doc: &ReportDocument) -> Result<String> {
    let value = serde_json::to_value(doc)?;
    let mut out = serde_json::to_string_pretty(&value)?;
    out.push('\n');
    Ok(out)
}

pub fn parse_report(text: &str) -> Result<ReportDocument> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_report(doc: &ReportDocument, path: &Path) -> Result<()> {
    write_atomic(path, report_to_string(doc)?.as_bytes())
}

/// Plot-ready CSV of the first two score columns, group a rows first.
pub fn write_scatter(
    scores_a: &DMatrix<f64>,
    scores_b: &DMatrix<f64>,
    path: &Path,
) -> Result<()> {
    if scores_a.ncols() < 2 || scores_b.ncols() < 2 {
        return Err(Error::InvalidParameter(format!(
            "scatter needs at least 2 score columns, got {} and {}",
            scores_a.ncols(),
            scores_b.ncols()
        )));
    }
    let mut out = String::from("group,pc1,pc2\n");
    for (label, scores) in [("a", scores_a), ("b", scores_b)] {
        for i in 0..scores.nrows() {
            out.push_str(&format!("{label},{},{}\n", scores[(i, 0)], scores[(i, 1)]));
        }
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{sample, SeededRng};
    use crate::types::DistributionSpec;
    use std::path::PathBuf;

    fn tmp_path(name: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        (dir, path)
    }

    fn write_text(name: &str, text: &str) -> (tempfile::TempDir, PathBuf) {
        let (dir, path) = tmp_path(name);
        fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn csv_plain_two_by_two() {
        let (_dir, p) = write_text("a.csv", "1,2\n3,4\n");
        let m = read_csv(&p).unwrap();
        assert_eq!((m.n(), m.p()), (2, 2));
        assert_eq!(m.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn csv_header_is_skipped() {
        let (_dir, p) = write_text("b.csv", "a,b\n1,2\n");
        let m = read_csv(&p).unwrap();
        assert_eq!((m.n(), m.p()), (1, 2));
        assert_eq!(m.data(), &[1.0, 2.0]);
    }

    #[test]
    fn csv_ragged_second_row() {
        let (_dir, p) = write_text("c.csv", "1,2\n3\n");
        assert!(matches!(
            read_csv(&p),
            Err(Error::RaggedRows { row: 1, expected: 2, got: 1 })
        ));
    }

    #[test]
    fn csv_non_numeric_interior_token() {
        let (_dir, p) = write_text("d.csv", "h1,h2\n1,2\n3,oops\n");
        assert!(matches!(read_csv(&p), Err(Error::NonNumeric { row: 1, col: 1 })));
    }

    #[test]
    fn csv_non_finite_value_has_coordinates() {
        let (_dir, p) = write_text("e.csv", "1,2\n3,inf\n");
        assert!(matches!(read_csv(&p), Err(Error::NonFinite { row: 1, col: 1 })));
    }

    #[test]
    fn csv_crlf_and_spacing_tolerated() {
        let (_dir, p) = write_text("f.csv", "1, 2\r\n3,4\r\n");
        let m = read_csv(&p).unwrap();
        assert_eq!(m.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn csv_header_only_is_empty() {
        let (_dir, p) = write_text("g.csv", "a,b\n");
        assert!(matches!(read_csv(&p), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn csv_missing_file() {
        let res = read_csv(Path::new("/nonexistent/no.csv"));
        assert!(matches!(res, Err(Error::FileNotFound(_))));
    }

    #[test]
    fn binary_one_by_one_is_thirty_bytes() {
        let (_dir, p) = tmp_path("one.ecsb");
        let m = EmbeddingMatrix::new(1, 1, vec![0.0]).unwrap();
        write_binary(&m, &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 30);
        assert_eq!(read_binary(&p).unwrap(), m);
    }

    #[test]
    fn binary_round_trip_is_bit_identical() {
        let x = sample(&DistributionSpec::standard_normal(32).unwrap(), 100, &SeededRng::new(44)).unwrap();
        let (_dir, p) = tmp_path("rt.ecsb");
        write_binary(&x, &p).unwrap();
        let back = read_binary(&p).unwrap();
        assert_eq!(back.data(), x.data());
        assert_eq!((back.n(), back.p()), (x.n(), x.p()));
    }

    #[test]
    fn binary_bad_magic() {
        let (_dir, p) = write_text("bad.ecsb", "XXXXXXXXXXXXXXXXXXXXXXXXXXXXXX");
        assert!(matches!(read_binary(&p), Err(Error::BadMagic)));
    }

    #[test]
    fn binary_truncation_reports_sizes() {
        let x = EmbeddingMatrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let (_dir, p) = tmp_path("trunc.ecsb");
        write_binary(&x, &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            read_binary(&p),
            Err(Error::TruncatedFile { expected: 38, got: 35 })
        ));
    }

    #[test]
    fn binary_trailing_bytes_detected() {
        let x = EmbeddingMatrix::new(1, 1, vec![1.0]).unwrap();
        let (_dir, p) = tmp_path("trail.ecsb");
        write_binary(&x, &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes.extend_from_slice(&[7, 7]);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_binary(&p), Err(Error::TrailingBytes { extra: 2 })));
    }

    #[test]
    fn binary_zero_dimension_rejected() {
        let (_dir, p) = tmp_path("zero.ecsb");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&ECSB_MAGIC);
        bytes.extend_from_slice(&0u64.to_le_bytes());
        bytes.extend_from_slice(&3u64.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_binary(&p), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn sniffing_dispatches_both_formats() {
        let x = EmbeddingMatrix::new(1, 2, vec![1.5, -2.5]).unwrap();
        let (_dir_b, pb) = tmp_path("m.ecsb");
        write_binary(&x, &pb).unwrap();
        assert_eq!(read_matrix(&pb).unwrap(), x);
        let (_dir_c, pc) = write_text("m.csv", "1.5,-2.5\n");
        assert_eq!(read_matrix(&pc).unwrap(), x);
    }

    #[test]
    fn report_round_trips_and_is_stable() {
        let mut doc = ReportDocument::new("0.1.0");
        doc.inputs.push(InputRecord {
            path: "a.csv".into(),
            sha256: sha256_hex(b"abc"),
            rows: 2,
            cols: 2,
        });
        doc.rng_seed = Some(42);
        let text = report_to_string(&doc).unwrap();
        assert!(text.ends_with('\n'));
        let parsed = parse_report(&text).unwrap();
        assert_eq!(parsed, doc);
        assert_eq!(report_to_string(&parsed).unwrap(), text);
        // Key-sorted document: "inputs" precedes "rng_seed" precedes "tool_version".
        let i = text.find("\"inputs\"").unwrap();
        let r = text.find("\"rng_seed\"").unwrap();
        let t = text.find("\"tool_version\"").unwrap();
        assert!(i < r && r < t);
        // Unset optionals stay out of the document entirely.
        assert!(!text.contains("normality"));
    }

    #[test]
    fn sha256_known_answer() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn scatter_two_points_per_group_is_five_lines() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[-1.0, -2.0, -3.0, -4.0]);
        let (_dir, p) = tmp_path("s.csv");
        write_scatter(&a, &b, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "group,pc1,pc2");
        assert_eq!(lines[1], "a,1,2");
        assert_eq!(lines[3], "b,-1,-2");
    }
}
