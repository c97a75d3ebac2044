//! End-to-end runs of the compiled binary on miniature problems.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_echoshape"))
}

fn path(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn arg(p: &Path) -> &str {
    p.to_str().expect("temp paths are valid unicode")
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("failed to spawn echoshape");
    assert!(
        out.status.success(),
        "command {:?} failed with {:?}:\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Generates a small dataset and returns its path.
fn tiny_dataset(dir: &tempfile::TempDir, count: usize, seed: u64) -> PathBuf {
    let ds = path(dir, "tiny.ds");
    run_ok(&[
        "gen-data", "--k", "2", "--M", "2", "--nt", "8", "--nd", "8", "--count",
        &count.to_string(), "--seed", &seed.to_string(), "--out", arg(&ds),
    ]);
    ds
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_dataset(&dir, 6, 3);
    let model = path(&dir, "tiny.model");
    run_ok(&[
        "train", "--dataset", arg(&ds), "--epochs", "5", "--batch", "3", "--out", arg(&model),
    ]);

    let pred = path(&dir, "pred.csv");
    run_ok(&["predict", "--model", arg(&model), "--dataset", arg(&ds), "--out", arg(&pred)]);
    let text = fs::read_to_string(&pred).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "index,relative_error,c0,c1,c2,c3,c4");

    let rec = path(&dir, "rec.json");
    run_ok(&[
        "reconstruct", "--method", "gn", "--dataset", arg(&ds), "--index", "1", "--out",
        arg(&rec),
    ]);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&rec).unwrap()).unwrap();
    assert_eq!(doc["method"], "GN");
    assert_eq!(doc["index"], 1);
    assert!(doc["relative_error"].as_f64().unwrap() < 1e-6);
    assert_eq!(doc["estimate"].as_array().unwrap().len(), 5);
}

#[test]
fn noisy_generation_changes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let clean = path(&dir, "clean.ds");
    let noisy = path(&dir, "noisy.ds");
    let base = &[
        "gen-data", "--k", "2", "--M", "1", "--nt", "8", "--nd", "8", "--count", "2", "--seed",
        "9",
    ];
    run_ok(&[base, &["--out", arg(&clean)][..]].concat());
    run_ok(&[base, &["--noise-sigma", "0.05", "--out", arg(&noisy)][..]].concat());
    let a = fs::read(&clean).unwrap();
    let b = fs::read(&noisy).unwrap();
    assert_eq!(a.len(), b.len());
    assert_ne!(a, b);
}

#[test]
fn usage_errors_exit_with_code_two() {
    let out = bin().args(["gen-data", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_dataset(&dir, 1, 5);
    let out = bin()
        .args(["reconstruct", "--method", "dl", "--dataset", arg(&ds)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "dl without a model is a usage error");
}

#[test]
fn corrupt_inputs_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = path(&dir, "bad.ds");
    fs::write(&bad, b"garbage").unwrap();
    let out = bin()
        .args(["reconstruct", "--method", "gn", "--dataset", arg(&bad)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn benchmark_reruns_are_bytewise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ds = tiny_dataset(&dir, 6, 3);
    let model = path(&dir, "tiny.model");
    run_ok(&[
        "train", "--dataset", arg(&ds), "--epochs", "5", "--batch", "3", "--out", arg(&model),
    ]);

    let mut outputs = Vec::new();
    for name in ["bench1", "bench2"] {
        let out_dir = path(&dir, name);
        run_ok(&[
            "benchmark", "--k", "2", "--M", "2", "--n-cases", "1", "--seed", "11",
            "--classical-n", "12", "--model", arg(&model), "--out-dir", arg(&out_dir),
        ]);
        outputs.push(out_dir);
    }

    let cases = fs::read_to_string(outputs[0].join("cases.csv")).unwrap();
    assert!(cases.starts_with("case,GN,LSM prediction,LSM refined,DL prediction,DL refined\n"));
    assert_eq!(cases.lines().count(), 2);
    for file in ["cases.csv", "summary.csv", "report.json"] {
        let a = fs::read(outputs[0].join(file)).unwrap();
        let b = fs::read(outputs[1].join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn scaling_reports_a_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "scaling.csv");
    run_ok(&[
        "scaling", "--k-list", "11", "--eps-v", "1", "--n-val", "2", "--epochs", "2", "--batch",
        "4", "--train-grid", "4", "--dims", "8", "--out", arg(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text, "M,k,n_train_threshold\n1,11,4\n");
    let trace = fs::read_to_string(out.with_extension("trace.csv")).unwrap();
    assert!(trace.starts_with("M,k,n_train,validation_error\n"));
    assert_eq!(trace.lines().count(), 2);
}
