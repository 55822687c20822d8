//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn rnmsr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rnmsr"))
        .current_dir(dir)
        .env_remove("RNMSR_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_exits_zero_and_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = rnmsr(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));

    let out = rnmsr(dir.path(), &["train", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--dim",
        "--eta",
        "--gnn-iters",
        "--no-iirl",
        "--seq-graph",
        "--no-gbp-r",
        "--no-gbp-d",
        "--no-gbp",
        "--l2",
        "--dropout",
        "--batch-size",
    ] {
        assert!(text.contains(flag), "train --help missing {flag}");
    }
    for default in [
        "default: 100",
        "default: 0.001",
        "default: 0.25",
        "default: 6",
    ] {
        assert!(text.contains(default), "train --help missing {default:?}");
    }
}

#[test]
fn unknown_subcommand_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = rnmsr(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = rnmsr(
        dir.path(),
        &["train", "--data", "x", "--out-dir", "y", "--bogus"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_pipeline_runs_on_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let out = rnmsr(
        dir,
        &[
            "synth",
            "--out",
            "sessions.tsv",
            "--sessions",
            "250",
            "--items",
            "40",
            "--min-len",
            "3",
            "--max-len",
            "7",
            "--repeat-rate",
            "0.5",
            "--seed",
            "5",
        ],
    );
    assert_success(&out, "synth");
    assert!(dir.join("sessions.tsv").exists());
    assert!(dir.join("sessions.tsv.run.json").exists());

    let out = rnmsr(
        dir,
        &[
            "preprocess",
            "--input",
            "sessions.tsv",
            "--out-dir",
            "data",
            "--holdout-secs",
            "7200",
            "--seed",
            "5",
        ],
    );
    assert_success(&out, "preprocess");
    for file in [
        "vocab.tsv",
        "train.txt",
        "valid.txt",
        "test.txt",
        "run.json",
    ] {
        assert!(dir.join("data").join(file).exists(), "missing data/{file}");
    }

    let out = rnmsr(
        dir,
        &["stats", "--input", "sessions.tsv", "--format", "csv"],
    );
    assert_success(&out, "stats");
    let csv = String::from_utf8_lossy(&out.stdout);
    let header = csv.lines().next().expect("stats header");
    assert!(header.starts_with("pattern,count,A%"));
    assert!(header.ends_with("sum%,new%"));
    assert!(csv.lines().count() > 3);

    let out = rnmsr(
        dir,
        &[
            "train",
            "--data",
            "data",
            "--out-dir",
            "run",
            "--dim",
            "12",
            "--epochs",
            "2",
            "--batch-size",
            "50",
            "--dropout",
            "0",
            "--seed",
            "5",
        ],
    );
    assert_success(&out, "train");
    assert!(dir.join("run/checkpoint.ckpt").exists());
    assert!(dir.join("run/epochs.ldjson").exists());
    let ldjson = std::fs::read_to_string(dir.join("run/epochs.ldjson")).unwrap();
    assert_eq!(ldjson.lines().count(), 2);
    for line in ldjson.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("train_loss").is_some());
    }
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run/run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "train");
    assert_eq!(run["seed"], 5);
    assert_eq!(run["config"]["train"]["model"]["dim"], 12);

    let out = rnmsr(
        dir,
        &[
            "evaluate",
            "--data",
            "data",
            "--checkpoint",
            "run/checkpoint.ckpt",
            "--split",
            "valid",
            "--out-dir",
            "eval",
        ],
    );
    assert_success(&out, "evaluate");
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("eval/metrics.json")).unwrap())
            .unwrap();
    assert!(metrics["pairs"].as_u64().unwrap() > 0);
    assert!(dir.join("eval/metrics.csv").exists());

    let out = rnmsr(
        dir,
        &[
            "evaluate",
            "--data",
            "data",
            "--baseline",
            "pop",
            "--split",
            "valid",
            "--out-dir",
            "eval-pop",
        ],
    );
    assert_success(&out, "evaluate pop");

    let out = rnmsr(
        dir,
        &[
            "recommend",
            "--data",
            "data",
            "--checkpoint",
            "run/checkpoint.ckpt",
            "--session",
            "i1,i2,i1",
            "--topk",
            "7",
        ],
    );
    assert_success(&out, "recommend");
    let rec = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = rec.lines().collect();
    assert_eq!(lines.len(), 7);
    let mut last = f64::INFINITY;
    for line in &lines {
        let (_, prob) = line.split_once('\t').expect("id<TAB>prob");
        let p: f64 = prob.parse().unwrap();
        assert!(p <= last, "probabilities not descending");
        last = p;
    }

    let out = rnmsr(
        dir,
        &[
            "dump-attention",
            "--data",
            "data",
            "--checkpoint",
            "run/checkpoint.ckpt",
            "--session",
            "i1,i2,i1",
        ],
    );
    assert_success(&out, "dump-attention");
    let dump = String::from_utf8_lossy(&out.stdout);
    assert!(dump.contains("mode weights"));
    assert!(dump.contains("pattern: A\u{2192}B\u{2192}A"));
    let weights: Vec<f64> = dump
        .lines()
        .find(|l| l.starts_with("mode weights"))
        .unwrap()
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect();
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-3);
}

#[test]
fn ablate_emits_six_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_success(
        &rnmsr(
            dir,
            &[
                "synth",
                "--out",
                "s.tsv",
                "--sessions",
                "120",
                "--items",
                "30",
                "--min-len",
                "3",
                "--max-len",
                "5",
                "--repeat-rate",
                "0.5",
                "--seed",
                "3",
            ],
        ),
        "synth",
    );
    assert_success(
        &rnmsr(
            dir,
            &[
                "preprocess",
                "--input",
                "s.tsv",
                "--out-dir",
                "data",
                "--holdout-secs",
                "20000",
                "--seed",
                "3",
            ],
        ),
        "preprocess",
    );
    let out = rnmsr(
        dir,
        &[
            "ablate",
            "--data",
            "data",
            "--out-dir",
            "ab",
            "--dim",
            "8",
            "--epochs",
            "1",
            "--batch-size",
            "100",
            "--dropout",
            "0",
            "--cutoffs",
            "20",
            "--seed",
            "3",
        ],
    );
    assert_success(&out, "ablate");
    let csv = std::fs::read_to_string(dir.join("ab/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7, "header + six variants:\n{csv}");
    assert_eq!(lines[0], "variant,p@20,mrr@20,ndcg@20");
    for label in [
        "w/o IIRL",
        "w/o SSG",
        "w/o GBP-r",
        "w/o GBP-d",
        "w/o GBP",
        "full",
    ] {
        assert!(csv.contains(label), "missing variant {label}");
    }
}

#[test]
fn config_file_resolves_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_success(
        &rnmsr(
            dir,
            &[
                "synth",
                "--out",
                "s.tsv",
                "--sessions",
                "100",
                "--items",
                "25",
                "--min-len",
                "3",
                "--max-len",
                "5",
                "--repeat-rate",
                "0.4",
                "--seed",
                "1",
            ],
        ),
        "synth",
    );
    assert_success(
        &rnmsr(
            dir,
            &[
                "preprocess",
                "--input",
                "s.tsv",
                "--out-dir",
                "data",
                "--holdout-secs",
                "10000",
                "--seed",
                "1",
            ],
        ),
        "preprocess",
    );
    std::fs::write(dir.join("run.conf"), "dim = 24\nepochs = 1\nseed = 9\n").unwrap();
    let out = rnmsr(
        dir,
        &[
            "train",
            "--data",
            "data",
            "--out-dir",
            "run",
            "--config",
            "run.conf",
            "--dim",
            "8",
            "--dropout",
            "0",
        ],
    );
    assert_success(&out, "train with config");
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run/run.json")).unwrap()).unwrap();
    // Flag beats file; file beats default.
    assert_eq!(run["config"]["train"]["model"]["dim"], 8);
    assert_eq!(run["config"]["train"]["epochs"], 1);
    assert_eq!(run["seed"], 9);

    std::fs::write(dir.join("bad.conf"), "nonsense_key = 1\n").unwrap();
    let out = rnmsr(
        dir,
        &[
            "train",
            "--data",
            "data",
            "--out-dir",
            "run2",
            "--config",
            "bad.conf",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
}

#[test]
fn env_seed_is_the_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for name in ["a.tsv", "b.tsv"] {
        let out = Command::new(env!("CARGO_BIN_EXE_rnmsr"))
            .current_dir(dir)
            .env("RNMSR_SEED", "77")
            .args([
                "synth",
                "--out",
                name,
                "--sessions",
                "40",
                "--items",
                "20",
                "--min-len",
                "2",
                "--max-len",
                "5",
                "--repeat-rate",
                "0.3",
            ])
            .output()
            .unwrap();
        assert_success(&out, "synth with env seed");
    }
    let a = std::fs::read_to_string(dir.join("a.tsv")).unwrap();
    let b = std::fs::read_to_string(dir.join("b.tsv")).unwrap();
    assert_eq!(a, b, "same env seed must generate identical logs");
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("a.tsv.run.json")).unwrap())
            .unwrap();
    assert_eq!(run["seed"], 77);
}
