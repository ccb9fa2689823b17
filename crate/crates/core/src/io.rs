//! LIBSVM data, trace CSV and run summaries.
//!
//! Floats are written with Rust's shortest round-trip formatting (`{:?}`),
//! so every file written here parses back to the identical bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::schemes::{ConvergenceTrace, EventKind, TraceRow};

/// Upper bound on `samples × features` for dense materialization.
pub const MAX_DENSE_ENTRIES: usize = 1 << 28;

pub const TRACE_HEADER: &str = "grad_evals,event,f_value,f_gap,fallback";

/// Dense copy of a LIBSVM file: one row per sample, no scaling applied.
#[derive(Debug, Clone, PartialEq)]
pub struct LibsvmDataset {
    pub features: Matrix,
    pub labels: Vector,
}

impl LibsvmDataset {
    pub fn new(features: Matrix, labels: Vector) -> Result<Self> {
        check_dim(features.nrows(), labels.len())?;
        if labels.iter().any(|l| !l.is_finite()) {
            return Err(Error::Data("labels must be finite".into()));
        }
        Ok(LibsvmDataset { features, labels })
    }

    pub fn samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_finite(token: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_error(line, format!("malformed {what} '{token}'")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_error(line, format!("non-finite {what} '{token}'")))
    }
}

type Record = (f64, Vec<(usize, f64)>);

fn parse_record(text: &str, line: usize) -> Result<Option<Record>> {
    let body = text.split('#').next().unwrap_or("");
    let mut tokens = body.split_whitespace();
    let Some(label) = tokens.next() else {
        return Ok(None);
    };
    let label = parse_finite(label, line, "label")?;
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for token in tokens {
        let (idx, val) = token
            .split_once(':')
            .ok_or_else(|| parse_error(line, format!("malformed token '{token}'")))?;
        let idx: i64 = idx
            .parse()
            .map_err(|_| parse_error(line, format!("malformed index in '{token}'")))?;
        if idx <= 0 {
            return Err(parse_error(line, format!("nonpositive index {idx}")));
        }
        let col = (idx - 1) as usize;
        let val = parse_finite(val, line, "value")?;
        if entries.iter().any(|&(c, _)| c == col) {
            return Err(parse_error(line, format!("duplicate index {idx}")));
        }
        entries.push((col, val));
    }
    Ok(Some((label, entries)))
}

/// Parses `label idx:val …` records; `#` starts a comment, blank lines are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<LibsvmDataset> {
    let mut records = Vec::new();
    let mut dim = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| parse_error(line_no, format!("unreadable line: {e}")))?;
        if let Some(record) = parse_record(&text, line_no)? {
            if let Some(max) = record.1.iter().map(|&(c, _)| c + 1).max() {
                dim = dim.max(max);
            }
            if dim.saturating_mul(records.len() + 1) > MAX_DENSE_ENTRIES {
                return Err(parse_error(
                    line_no,
                    format!("dataset too large to densify ({dim} features)"),
                ));
            }
            records.push(record);
        }
    }
    let mut features = Matrix::zeros(records.len(), dim);
    let mut labels = Vector::zeros(records.len());
    for (row, (label, entries)) in records.into_iter().enumerate() {
        labels[row] = label;
        for (col, val) in entries {
            features[(row, col)] = val;
        }
    }
    Ok(LibsvmDataset { features, labels })
}

pub fn parse_libsvm_str(text: &str) -> Result<LibsvmDataset> {
    parse_libsvm(text.as_bytes())
}

pub fn read_libsvm(path: &Path) -> Result<LibsvmDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_libsvm(BufReader::new(file))
}

/// Writes nonzero entries only; an explicit `n:0` keeps the width when the
/// last column is entirely zero.
pub fn write_libsvm<W: Write>(ds: &LibsvmDataset, mut out: W) -> std::io::Result<()> {
    let n = ds.dim();
    let last_col_empty = n > 0 && ds.features.column(n - 1).iter().all(|v| v.to_bits() == 0);
    for row in 0..ds.samples() {
        write!(out, "{:?}", ds.labels[row])?;
        for col in 0..n {
            let v = ds.features[(row, col)];
            if v.to_bits() != 0 || (row == 0 && col == n - 1 && last_col_empty) {
                write!(out, " {}:{:?}", col + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_libsvm_file(ds: &LibsvmDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_libsvm(ds, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_trace<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:?},{:?},{}",
            r.grad_evals, r.event, r.f_value, r.f_gap, r.fallback
        )?;
    }
    Ok(())
}

pub fn write_trace_file(trace: &ConvergenceTrace, path: &Path) -> Result<()> {
    if trace.events.is_empty() {
        return Err(Error::argument("cannot write an empty trace"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_trace(&trace.rows(), &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRow>> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| parse_error(1, e.to_string()))?
        .ok_or_else(|| parse_error(1, "missing header"))?;
    if header != TRACE_HEADER {
        return Err(parse_error(1, format!("unexpected header '{header}'")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let text = line.map_err(|e| parse_error(line_no, e.to_string()))?;
        let fields: Vec<&str> = text.split(',').collect();
        let [evals, event, f_value, f_gap, fallback] = fields[..] else {
            return Err(parse_error(
                line_no,
                format!("expected 5 fields, got {}", fields.len()),
            ));
        };
        let bad = |what: &str| parse_error(line_no, format!("malformed {what}"));
        rows.push(TraceRow {
            grad_evals: evals.parse().map_err(|_| bad("grad_evals"))?,
            event: event.parse::<EventKind>().map_err(|_| bad("event"))?,
            f_value: f_value.parse().map_err(|_| bad("f_value"))?,
            f_gap: f_gap.parse().map_err(|_| bad("f_gap"))?,
            fallback: fallback.parse().map_err(|_| bad("fallback"))?,
        });
    }
    Ok(rows)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(BufReader::new(file))
}

/// Per-method entry of the `compare` JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub final_gap: f64,
    pub grad_evals: usize,
    pub extrapolations: usize,
    pub fallbacks: usize,
}

impl RunSummary {
    pub fn from_trace(trace: &ConvergenceTrace) -> Self {
        RunSummary {
            method: trace.label.clone(),
            final_gap: trace.final_gap(),
            grad_evals: trace.grad_evals(),
            extrapolations: trace.extrapolations(),
            fallbacks: trace.fallbacks(),
        }
    }
}

pub fn write_summary_file(summaries: &[RunSummary], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summaries).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_summary_file(path: &Path) -> Result<Vec<RunSummary>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, seeded_rng};
    use proptest::prelude::*;
    use rand::Rng;

    fn libsvm_bytes(ds: &LibsvmDataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_libsvm(ds, &mut buf).unwrap();
        buf
    }

    #[test]
    fn parse_example() {
        let ds = parse_libsvm_str("1 1:1 3:2.5\n-1 2:4").unwrap();
        assert_eq!(
            ds.features,
            Matrix::from_row_slice(2, 3, &[1.0, 0.0, 2.5, 0.0, 4.0, 0.0])
        );
        assert_eq!(ds.labels, Vector::from_column_slice(&[1.0, -1.0]));
    }

    #[test]
    fn empty_and_comment_only_streams() {
        let ds = parse_libsvm_str("").unwrap();
        assert_eq!((ds.samples(), ds.dim()), (0, 0));
        let ds = parse_libsvm_str("# header\n\n   \n+1 2:3 # trailing\n").unwrap();
        assert_eq!(ds.features, Matrix::from_row_slice(1, 2, &[0.0, 3.0]));
        assert_eq!(ds.labels[0], 1.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("1 1:1\n1 0:2", 2, "nonpositive"),
            ("1 1:1\n\n1 2:1 2:3", 3, "duplicate"),
            ("x 1:1", 1, "label"),
            ("1 1:1\n1 1-2", 2, "malformed token"),
            ("1 -3:1", 1, "nonpositive"),
        ];
        for (text, line, needle) in cases {
            match parse_libsvm_str(text) {
                Err(Error::Parse { line: l, message }) => {
                    assert_eq!(l, line, "{text:?}");
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn fuzz_corpus_rejected() {
        let corpus = [
            "1 1;2",
            "1 :2",
            "1 1:",
            "1 1:2:3",
            "1 1.5:2",
            "1 a:2",
            "1 1:b",
            "1 0:1",
            "1 -1:1",
            "1 1:1 1:2",
            "nan 1:1",
            "inf 1:1",
            "1 1:nan",
            "1 1:inf",
            "1 1:1e400",
            "1,2 1:1",
            "1 2:1 1:1 2:5",
            "1 1 2",
            "1 99999999999999999999:1",
            "1 :",
            ":",
            "1:1",
            "--1 1:1",
            "1 1:1:",
            "1 +:1",
            "1 1 :1",
            "1 4000000000:1",
        ];
        for record in corpus {
            assert!(
                matches!(parse_libsvm_str(record), Err(Error::Parse { line: 1, .. })),
                "accepted {record:?}"
            );
        }
    }

    #[test]
    fn round_trip_generated_file() {
        let mut rng = seeded_rng(1);
        let mut text = String::new();
        for _ in 0..100 {
            let label: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            text.push_str(&format!("{label}"));
            for idx in 1..=20 {
                if rng.random_bool(0.3) {
                    let v: f64 = rng.random_range(-1e3..1e3);
                    text.push_str(&format!(" {idx}:{v}"));
                }
            }
            text.push('\n');
        }
        let first = parse_libsvm_str(&text).unwrap();
        assert_eq!(first.samples(), 100);
        let bytes = libsvm_bytes(&first);
        let second = parse_libsvm(bytes.as_slice()).unwrap();
        assert_eq!(first, second);
        assert_eq!(bytes, libsvm_bytes(&second));
    }

    #[test]
    fn round_trip_preserves_trailing_zero_column_and_signed_zero() {
        let ds = LibsvmDataset::new(
            Matrix::from_row_slice(2, 3, &[1.0, -0.0, 0.0, 0.0, 2.0, 0.0]),
            Vector::from_column_slice(&[3.5, -1.0]),
        )
        .unwrap();
        let back = parse_libsvm(libsvm_bytes(&ds).as_slice()).unwrap();
        assert_eq!(back.dim(), 3);
        assert_eq!(back.features[(0, 1)].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back, ds);
    }

    fn row(
        grad_evals: usize,
        event: EventKind,
        f_value: f64,
        f_gap: f64,
        fallback: bool,
    ) -> TraceRow {
        TraceRow {
            grad_evals,
            event,
            f_value,
            f_gap,
            fallback,
        }
    }

    #[test]
    fn trace_single_row_format() {
        let mut buf = Vec::new();
        write_trace(&[row(1, EventKind::Gd, 2.0, 1.0, false)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "grad_evals,event,f_value,f_gap,fallback\n1,gd,2.0,1.0,false\n"
        );
    }

    #[test]
    fn trace_round_trip_and_row_count() {
        let mut rng = seeded_rng(2);
        let rows: Vec<TraceRow> = (0..1000)
            .map(|i| {
                let kind = if i % 4 == 3 {
                    EventKind::Extrapolation
                } else {
                    EventKind::Gd
                };
                let gap = 10f64.powf(rng.random_range(-18.0..3.0));
                row(i, kind, gap + 0.1, gap, i % 7 == 0)
            })
            .collect();
        let mut first = Vec::new();
        write_trace(&rows, &mut first).unwrap();
        assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 1001);
        let back = read_trace(first.as_slice()).unwrap();
        assert_eq!(back, rows);
        let mut second = Vec::new();
        write_trace(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn trace_reader_rejects_bad_input() {
        assert!(read_trace("a,b\n".as_bytes()).is_err());
        assert!(read_trace("".as_bytes()).is_err());
        let text = format!("{TRACE_HEADER}\n1,gd,2.0,1.0\n");
        assert!(matches!(
            read_trace(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = format!("{TRACE_HEADER}\n1,jump,2.0,1.0,false\n");
        assert!(read_trace(text.as_bytes()).is_err());
    }

    #[test]
    fn files_report_their_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.svm");
        match read_libsvm(&missing) {
            Err(e @ Error::Io { .. }) => assert!(e.to_string().contains("nope.svm")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn summary_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.json");
        let s = vec![RunSummary {
            method: "dna1".into(),
            final_gap: 1.234e-9,
            grad_evals: 300,
            extrapolations: 100,
            fallbacks: 2,
        }];
        write_summary_file(&s, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for key in [
            "method",
            "final_gap",
            "grad_evals",
            "extrapolations",
            "fallbacks",
        ] {
            assert!(text.contains(&format!("\"{key}\"")));
        }
        assert_eq!(read_summary_file(&path).unwrap(), s);
    }

    proptest! {
        #[test]
        fn parser_never_panics(text in "\\PC{0,80}") {
            let _ = parse_libsvm_str(&text);
        }

        #[test]
        fn dense_round_trip_is_bit_exact(seed in 0u64..10_000, m in 1usize..8, n in 1usize..8) {
            let mut rng = seeded_rng(seed);
            let mut f = gaussian_matrix(&mut rng, m, n);
            f.iter_mut().for_each(|v| if rng.random_bool(0.4) { *v = 0.0 });
            let labels = Vector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
            let ds = LibsvmDataset::new(f, labels).unwrap();
            let back = parse_libsvm(libsvm_bytes(&ds).as_slice()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
