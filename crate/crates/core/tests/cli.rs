mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use propcoloc::SummaryDataset;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_propcoloc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn test_args<'a>(a: &'a str, l: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["test", "--assoc", a, "--ld", l, "--n", "5000", "--trait-cor", "0.3"];
    v.extend_from_slice(extra);
    v
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn json_output_is_reproducible_with_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, l) = common::write_dataset(&common::simulated(5000, 20, 0.5, 11), dir.path());
    let args = test_args(p(&a), p(&l), &["--seed", "42", "--json", "--draws", "2000"]);
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, second.stdout);
    let v: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["seed"], 42);
    assert_eq!(v["results"].as_array().unwrap().len(), 4);
}

#[test]
fn tsv_output_has_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let (a, l) = common::write_dataset(&common::simulated(5000, 10, 1.0, 12), dir.path());
    let out = dir.path().join("res.tsv");
    let args = test_args(p(&a), p(&l), &["--seed", "1", "--tsv", "--methods", "full,lm", "--out", p(&out)]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("method\tstatistic"));
}

#[test]
fn missing_file_is_an_input_error() {
    let o = run(&test_args("/nonexistent/a.tsv", "/nonexistent/l.tsv", &[]));
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn unknown_flag_is_an_input_error() {
    assert_eq!(run(&["test", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn singular_ld_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let ld = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.5, 0.5, 1.0, -0.5, 0.5, -0.5, 1.0]);
    let ds = SummaryDataset::new(
        vec!["a".into(), "b".into(), "c".into()],
        DMatrix::from_row_slice(2, 3, &[0.1, 0.05, 0.02, 0.2, 0.1, 0.03]),
        DMatrix::from_element(2, 3, 0.01),
        ld,
        0.0,
        5000,
    )
    .unwrap();
    let (a, l) = common::write_dataset(&ds, dir.path());
    let o = run(&test_args(p(&a), p(&l), &["--prune-r2", "1", "--top-k", "0", "--seed", "1"]));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn lm_alone_reports_missing_trait1_signal() {
    let dir = tempfile::tempdir().unwrap();
    let j = 5;
    let ds = SummaryDataset::new(
        (0..j).map(|i| format!("v{i}")).collect(),
        DMatrix::from_row_slice(2, j, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.1, 0.0, 0.05, 0.02]),
        DMatrix::from_element(2, j, 0.014),
        DMatrix::identity(j, j),
        0.0,
        5000,
    )
    .unwrap();
    let (a, l) = common::write_dataset(&ds, dir.path());
    let o = run(&test_args(p(&a), p(&l), &["--methods", "lm", "--json"]));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "reject_no_trait1_signal");
}

fn write_grid(dir: &Path, body: &str) -> std::path::PathBuf {
    let g = dir.join("grid.json");
    fs::write(&g, body).unwrap();
    g
}

#[test]
fn bad_grids_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.tsv");
    for body in ["[]", "{not json", "[{\"n\": 100}]"] {
        let g = write_grid(dir.path(), body);
        let o = run(&["simulate", "--grid", p(&g), "--out", p(&out)]);
        assert_eq!(o.status.code(), Some(2), "grid {body:?}");
    }
}

#[test]
fn simulation_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_grid(
        dir.path(),
        r#"[{"n": 500, "j": 6, "xi": 1.0, "eta0": 0.5, "replicates": 12, "seed": 3},
            {"n": 1000, "j": 6, "xi": 0.8, "eta0": 1.0, "replicates": 12, "seed": 4}]"#,
    );
    let one = dir.path().join("one.tsv");
    let eight = dir.path().join("eight.tsv");
    let common_args = ["--methods", "full,naive,cond,lm"];
    let a = run(&[&["simulate", "--grid", p(&g), "--out", p(&one), "--parallel", "1"][..], &common_args].concat());
    let b = run(&[&["simulate", "--grid", p(&g), "--out", p(&eight), "--parallel", "8"][..], &common_args].concat());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(fs::read(one).unwrap(), fs::read(eight).unwrap());
}

#[test]
fn unknown_suite_is_an_input_error() {
    assert_eq!(run(&["calibrate", "--suite", "nope"]).status.code(), Some(2));
}
