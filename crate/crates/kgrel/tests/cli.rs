//! End-to-end tests of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

use kgrel::checkpoint::load_checkpoint;
use kgrel::models::{init_params, Dims, ModelKind};

fn fixture_dir() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/tiny")
        .display()
        .to_string()
}

fn kgrel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgrel"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn train_zero_epochs_equals_seeded_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("init.ckpt");
    let dataset = fixture_dir();
    let output = kgrel(&[
        "train", "--dataset", &dataset, "--model", "distmult", "--dim-entity", "6",
        "--epochs", "0", "--seed", "9", "--out", out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let (params, meta) = load_checkpoint(&out).unwrap();
    // fixture has 10 entities and 3 relations
    let dims = Dims { d_e: 6, d_r: 30, n_e: 10, n_r: 3 };
    assert_eq!(meta.dims, dims);
    assert_eq!(params, init_params(ModelKind::DistMult, dims, 9));
}

#[test]
fn config_file_values_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    // epochs=50 in the file loses against --epochs 0 on the command line
    std::fs::write(&cfg, "model=distmult\ndim-entity=6\nepochs=50\nseed=9\n").unwrap();
    let out = dir.path().join("cfg.ckpt");
    let dataset = fixture_dir();
    let output = kgrel(&[
        "train", "--config", cfg.to_str().unwrap(), "--dataset", &dataset,
        "--epochs", "0", "--out", out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let (params, _) = load_checkpoint(&out).unwrap();
    let dims = Dims { d_e: 6, d_r: 30, n_e: 10, n_r: 3 };
    assert_eq!(params, init_params(ModelKind::DistMult, dims, 9));
}

#[test]
fn unknown_flag_fails_with_diagnostic() {
    let output = kgrel(&["eval", "--no-such-flag"]);
    assert!(!output.status.success());
    assert!(!output.stderr.is_empty());
}

#[test]
fn missing_dataset_fails_with_diagnostic() {
    let output = kgrel(&[
        "analyze", "--dataset", "/nonexistent/nowhere", "--which", "khs",
    ]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("error"), "{stderr}");
}

#[test]
fn analyze_symmetry_requires_tucker_checkpoint() {
    let dataset = fixture_dir();
    // no checkpoint at all
    let output = kgrel(&["analyze", "--dataset", &dataset, "--which", "symmetry"]);
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.to_lowercase().contains("tucker"), "{stderr}");

    // non-TuckER checkpoint is rejected the same way
    let ckpt = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny-mure.ckpt");
    let output = kgrel(&[
        "analyze", "--dataset", &dataset, "--which", "symmetry",
        "--ckpt", ckpt.to_str().unwrap(),
    ]);
    assert!(!output.status.success());
}

#[test]
fn eval_deterministic_across_thread_counts() {
    let dataset = fixture_dir();
    let ckpt = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny-mure.ckpt");
    let run = |threads: &str| {
        let output = Command::new(env!("CARGO_BIN_EXE_kgrel"))
            .args([
                "eval", "--dataset", &dataset, "--ckpt", ckpt.to_str().unwrap(),
            ])
            .env("KGREL_THREADS", threads)
            .output()
            .unwrap();
        assert!(output.status.success());
        output.stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn resplit_nell_default_holdout_sizes() {
    let data_dir = tempfile::tempdir().unwrap();
    // 45k synthetic triples across the three input splits
    let write_split = |name: &str, start: usize, count: usize| {
        // (i % 1000, i / 1000) is unique per i, so no duplicate triples
        let body: String = (start..start + count)
            .map(|i| format!("e{}\tr{}\tf{}\n", i % 1000, i % 7, i / 1000))
            .collect();
        std::fs::write(data_dir.path().join(name), body).unwrap();
    };
    write_split("train.txt", 0, 41_000);
    write_split("valid.txt", 41_000, 2_000);
    write_split("test.txt", 43_000, 2_000);
    let out_dir = data_dir.path().join("resplit");
    let output = kgrel(&[
        "resplit-nell", "--dataset", data_dir.path().to_str().unwrap(),
        "--seed", "1", "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let count_lines = |name: &str| {
        std::fs::read_to_string(out_dir.join(name))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(count_lines("valid.txt"), 20_000);
    assert_eq!(count_lines("test.txt"), 20_000);
    assert_eq!(count_lines("train.txt"), 45_000 - 40_000);
}

#[test]
fn resplit_nell_too_small_is_rejected() {
    let dataset = fixture_dir();
    let out = tempfile::tempdir().unwrap();
    let output = kgrel(&[
        "resplit-nell", "--dataset", &dataset,
        "--out", out.path().to_str().unwrap(),
    ]);
    assert!(!output.status.success());
    assert!(!output.stderr.is_empty());
}
