mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpmf_core::cli::ModelFile;
use mpmf_core::dataset::{write_sparse, Dataset};
use mpmf_core::synthetic::synthetic_moments;
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use common::*;

fn mpmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpmf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Gaussian clusters, one per label, written as LIBSVM text.
fn write_clusters(
    path: &Path,
    seed: u64,
    centers: &[(i64, [f64; 2])],
    per_class: usize,
) -> PathBuf {
    let mut r = rng(seed);
    let id = DMatrix::identity(2, 2);
    let mut x = DMatrix::zeros(centers.len() * per_class, 2);
    let mut labels = Vec::new();
    for (k, (label, c)) in centers.iter().enumerate() {
        let rows = gaussian_rows(&mut r, per_class, &DVector::from_column_slice(c), &id);
        x.rows_mut(k * per_class, per_class).copy_from(&rows);
        labels.extend(std::iter::repeat_n(*label, per_class));
    }
    std::fs::write(path, write_sparse(&Dataset::new(x, labels).unwrap())).unwrap();
    path.to_path_buf()
}

fn binary_file(dir: &Path, name: &str, seed: u64) -> PathBuf {
    write_clusters(
        &dir.join(name),
        seed,
        &[(1, [2.0, 1.0]), (-1, [-1.0, -1.5])],
        40,
    )
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn unknown_measure_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = binary_file(dir.path(), "train.libsvm", 1);
    let out = mpmf(&[
        "train",
        "--data",
        s(&data),
        "--measure",
        "auc",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown measure"));
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = binary_file(dir.path(), "train.libsvm", 2);
    let out = mpmf(&[
        "train",
        "--data",
        s(&data),
        "--positive-label",
        "1",
        "--measure",
        "gm",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = stdout_json(&out);
    assert_eq!(summary["measure"], "gm");
    assert!(summary["rounds"].as_u64().unwrap() >= 1);

    let model =
        ModelFile::from_json(&std::fs::read_to_string(dir.path().join("model.json")).unwrap())
            .unwrap();
    assert!(matches!(model, ModelFile::Linear(_)));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("round,alpha_p,alpha_n,q_before,q_after,lambda,inner_steps\n"));

    let preds = dir.path().join("pred.csv");
    let model_path = dir.path().join("model.json");
    let out = mpmf(&[
        "predict",
        "--model",
        s(&model_path),
        "--data",
        s(&data),
        "--out",
        s(&preds),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&preds).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,score,label");
    assert_eq!(lines.len(), 81);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        let score: f64 = fields[1].parse().unwrap();
        assert_eq!(fields[2], if score > 0.0 { "1" } else { "-1" });
    }
}

#[test]
fn wider_test_data_is_a_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = binary_file(dir.path(), "train.libsvm", 3);
    assert_eq!(
        mpmf(&[
            "train",
            "--data",
            s(&data),
            "--positive-label",
            "1",
            "--out",
            s(dir.path())
        ])
        .status
        .code(),
        Some(0)
    );
    let wide = dir.path().join("wide.libsvm");
    std::fs::write(&wide, "1 1:0.5 3:2\n-1 2:1\n").unwrap();
    let model = dir.path().join("model.json");
    let out = mpmf(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&wide),
        "--out",
        s(&dir.path().join("p.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn kernel_flag_writes_a_kernel_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = binary_file(dir.path(), "train.libsvm", 4);
    let out = mpmf(&[
        "train",
        "--data",
        s(&data),
        "--positive-label",
        "1",
        "--kernel",
        "rbf",
        "--subsample",
        "20",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("model.json")).unwrap();
    let json: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["type"], "kernel");
    assert_eq!(json["kernel"]["kind"], "rbf");
    assert!(json["kernel"]["gamma"].as_f64().unwrap() > 0.0);
    match ModelFile::from_json(&text).unwrap() {
        ModelFile::Kernel(m) => assert_eq!(m.dual_weights.len(), 40),
        other => panic!("unexpected model {other:?}"),
    }
}

#[test]
fn moments_file_trains_without_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("moments.json");
    std::fs::write(&path, synthetic_moments(0.5).unwrap().to_json()).unwrap();
    let out = mpmf(&[
        "train",
        "--moments",
        s(&path),
        "--measure",
        "f1",
        "--grid-step",
        "0.01",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = stdout_json(&out);
    assert!((summary["alpha_p"].as_f64().unwrap() - 0.1646).abs() < 0.01);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"mu_p\": [1.0]}").unwrap();
    let out = mpmf(&["train", "--moments", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn baseline_model_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = binary_file(dir.path(), "train.libsvm", 5);
    let out = mpmf(&[
        "train",
        "--data",
        s(&data),
        "--positive-label",
        "1",
        "--baseline",
        "mpm",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("model.json")).unwrap();
    let ModelFile::Mpm(m) = ModelFile::from_json(&text).unwrap() else {
        panic!("expected a baseline model");
    };
    assert!(m.alpha_star > 0.5);
    assert!((m.model.alpha_p - (1.0 - m.alpha_star)).abs() < 1e-12);
}

#[test]
fn one_vs_all_reports_every_class() {
    let dir = tempfile::tempdir().unwrap();
    let centers = [(1, [3.0, 0.0]), (2, [-2.0, 2.5]), (3, [-2.0, -2.5])];
    let train = write_clusters(&dir.path().join("train.libsvm"), 6, &centers, 30);
    let test = write_clusters(&dir.path().join("test.libsvm"), 7, &centers, 20);
    let metrics = dir.path().join("metrics.json");
    let out = mpmf(&[
        "evaluate",
        "--data",
        s(&train),
        "--test",
        s(&test),
        "--one-vs-all",
        "--tune-bias",
        "0.3",
        "--out",
        s(&metrics),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    let classes = doc["classes"].as_array().unwrap();
    assert_eq!(classes.len(), 3);
    let labels: Vec<i64> = classes
        .iter()
        .map(|c| c["positive_label"].as_i64().unwrap())
        .collect();
    assert_eq!(labels, vec![1, 2, 3]);
    for c in classes {
        assert_eq!(c["measures"].as_object().unwrap().len(), 8);
        assert!(c["tuned"]["threshold"].is_number());
    }
    let f1: Vec<f64> = classes
        .iter()
        .map(|c| c["measures"]["f1"]["value"].as_f64().unwrap())
        .collect();
    let mean = f1.iter().sum::<f64>() / 3.0;
    assert!((doc["macro"]["f1"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!(doc["macro_tuned"]["f1"].is_number());
    assert!(mean > 0.8);
}

#[test]
fn bench_writes_one_row_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let data = binary_file(dir.path(), "a.libsvm", 8);
    let csv = dir.path().join("bench.csv");
    let out = mpmf(&[
        "bench",
        "--data",
        s(&data),
        "--positive-label",
        "1",
        "--measures",
        "am,f1",
        "--repeats",
        "1",
        "--out",
        s(&csv),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("a.libsvm,am,1,"));
    assert!(lines[1].ends_with(",true"));

    let missing = dir.path().join("missing.libsvm");
    let out = mpmf(&[
        "bench",
        "--data",
        s(&missing),
        "--positive-label",
        "1",
        "--out",
        s(&csv),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = binary_file(dir.path(), "train.libsvm", 9);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "data = {}\npositive_label = 1\nmeasure = jac\nmax_rounds = 3\n",
            s(&data)
        ),
    )
    .unwrap();
    let out = mpmf(&[
        "train",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--measure",
        "hm",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = stdout_json(&out);
    assert_eq!(summary["measure"], "hm");
    assert!(summary["rounds"].as_u64().unwrap() <= 3);
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(mpmf(&["--help"]).status.code(), Some(0));
    assert_eq!(mpmf(&["frobnicate"]).status.code(), Some(2));
}
