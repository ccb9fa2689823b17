use std::path::Path;
use std::process::{Command, Output};

use dna_accel::io::{read_summary_file, read_trace_file};

fn dna(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dna"))
        .args(args)
        .args(extra)
        .output()
        .expect("spawn dna")
}

#[test]
fn run_reduces_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = dna(
        &[
            "run",
            "--problem",
            "ridge",
            "--synthetic",
            "80,40,1e3",
            "--method",
            "dna1",
            "--iters",
            "60",
            "--out",
        ],
        &[&out],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_trace_file(&out).unwrap();
    assert_eq!(rows[0].grad_evals, 0);
    assert!(rows.last().unwrap().f_gap < rows[0].f_gap);
    assert!(rows.iter().all(|r| r.f_gap >= 0.0));
}

#[test]
fn compare_summary_matches_traces() {
    let dir = tempfile::tempdir().unwrap();
    let o = dna(
        &[
            "compare",
            "--problem",
            "logistic",
            "--synthetic",
            "60,15,1e2",
            "--iters",
            "40",
            "--out",
        ],
        &[dir.path()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summaries = read_summary_file(&dir.path().join("summary.json")).unwrap();
    assert_eq!(summaries.len(), 6);
    for s in &summaries {
        let rows = read_trace_file(&dir.path().join(format!("{}.csv", s.method))).unwrap();
        let last = rows.last().unwrap();
        assert_eq!(last.f_gap, s.final_gap, "{}", s.method);
        assert_eq!(last.grad_evals, s.grad_evals);
    }
}

#[test]
fn invalid_window_is_usage_error() {
    let o = dna(
        &[
            "run",
            "--synthetic",
            "20,5,10",
            "--window",
            "0",
            "--out",
            "/dev/null",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_and_synthetic_are_exclusive() {
    let o = dna(
        &[
            "run",
            "--synthetic",
            "20,5,10",
            "--data",
            "x.svm",
            "--out",
            "/dev/null",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_file_fails() {
    let o = dna(
        &[
            "run",
            "--data",
            "/nonexistent/file.svm",
            "--out",
            "/dev/null",
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generated_dataset_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.svm");
    let out = dir.path().join("t.csv");
    let o = dna(
        &[
            "generate",
            "--problem",
            "ls",
            "--synthetic",
            "50,10,1e2",
            "--seed",
            "3",
            "--out",
        ],
        &[&data],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = dna(
        &[
            "run",
            "--problem",
            "ls",
            "--scheme",
            "offline",
            "--method",
            "dna",
            "--iters",
            "30",
            "--data",
        ],
        &[&data, Path::new("--out"), &out],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!read_trace_file(&out).unwrap().is_empty());
}

#[test]
fn oracle_check_passes() {
    let o = dna(&["oracle-check"], &[]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.lines().filter(|l| l.starts_with("PASS")).count() >= 6,
        "{text}"
    );
}

#[test]
fn bundled_samples_run() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    for (problem, file) in [
        ("ls", "ls_120x30.svm"),
        ("ridge", "ridge_80x40.svm"),
        ("logistic", "logistic_150x20.svm"),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let o = dna(
            &["compare", "--problem", problem, "--iters", "50", "--data"],
            &[&data.join(file), Path::new("--out"), dir.path()],
        );
        assert!(
            o.status.success(),
            "{file}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        for s in read_summary_file(&dir.path().join("summary.json")).unwrap() {
            let rows = read_trace_file(&dir.path().join(format!("{}.csv", s.method))).unwrap();
            assert!(s.final_gap < rows[0].f_gap, "{file} {}", s.method);
        }
    }
}
