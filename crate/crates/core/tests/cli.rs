//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn mvas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvas"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn synth(dir: &Path, seed: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "--seed",
        seed,
        "synth",
        "--radius",
        "0.4",
        "--views",
        "6",
        "--width",
        "32",
        "--height",
        "32",
        "--out",
        path(dir),
    ];
    args.extend_from_slice(extra);
    mvas(&args)
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    train_for(data, out, "3", extra)
}

fn train_for(data: &Path, out: &Path, iterations: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "--seed",
        "3",
        "train",
        "--data",
        path(data),
        "--out",
        path(out),
        "--iterations",
        iterations,
        "--batch-size",
        "64",
        "--width",
        "16",
        "--frequencies",
        "4",
        "--dilation",
        "2",
    ];
    args.extend_from_slice(extra);
    mvas(&args)
}

#[test]
fn full_pipeline_succeeds_and_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let (data, run, recon) = (
        tmp.path().join("data"),
        tmp.path().join("run"),
        tmp.path().join("recon"),
    );
    assert_eq!(code(&synth(&data, "1", &[])), 0);
    assert!(data.join("manifest.json").is_file());

    let out = train(&data, &run, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.ckpt", "loss.csv", "config.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "header plus one row per iteration");

    let out = mvas(&[
        "reconstruct",
        "--checkpoint",
        path(&run.join("model.ckpt")),
        "--data",
        path(&data),
        "--resolution",
        "24",
        "--out",
        path(&recon),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(recon.join("mesh.obj").is_file());

    let out = mvas(&["eval", "--pred", path(&recon), "--gt", path(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(recon.join("metrics.json")).unwrap())
            .unwrap();
    for key in ["chamfer", "fscore", "mae_deg"] {
        assert!(metrics[key].as_f64().is_some_and(f64::is_finite), "{key}");
    }
}

#[test]
fn ground_truth_evaluated_against_itself_is_perfect() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&synth(&data, "1", &[])), 0);
    let report = tmp.path().join("self.json");
    let out = mvas(&[
        "eval",
        "--pred",
        path(&data),
        "--gt",
        path(&data),
        "--out",
        path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(m["chamfer"].as_f64(), Some(0.0));
    assert_eq!(m["fscore"].as_f64(), Some(1.0));
    assert_eq!(m["mae_deg"].as_f64(), Some(0.0));
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = TempDir::new().unwrap();
    let dirs: Vec<_> = (0..2).map(|i| tmp.path().join(format!("d{i}"))).collect();
    for d in &dirs {
        assert_eq!(code(&synth(d, "5", &["--ambiguity", "pi-random"])), 0);
    }
    for f in [
        "manifest.json",
        "cameras.json",
        "view_000.azm",
        "view_005.msk",
    ] {
        assert_eq!(
            std::fs::read(dirs[0].join(f)).unwrap(),
            std::fs::read(dirs[1].join(f)).unwrap(),
            "{f}"
        );
    }
    let runs: Vec<_> = (0..2).map(|i| tmp.path().join(format!("r{i}"))).collect();
    for r in &runs {
        assert_eq!(code(&train(&dirs[0], r, &[])), 0);
    }
    for f in ["loss.csv", "model.ckpt"] {
        assert_eq!(
            std::fs::read(runs[0].join(f)).unwrap(),
            std::fs::read(runs[1].join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn different_seeds_change_ambiguous_maps() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&synth(&a, "1", &["--ambiguity", "pi-random"])), 0);
    assert_eq!(code(&synth(&b, "2", &["--ambiguity", "pi-random"])), 0);
    assert_ne!(
        std::fs::read(a.join("view_000.azm")).unwrap(),
        std::fs::read(b.join("view_000.azm")).unwrap()
    );
}

#[test]
fn input_errors_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nothing");
    assert_eq!(code(&train(&missing, &tmp.path().join("run"), &[])), 2);
    assert_eq!(
        code(&synth(&tmp.path().join("two"), "1", &["--rig", "two-view"])),
        2
    );
    assert_eq!(
        code(&mvas(&[
            "--threads",
            "0",
            "normalize-cameras",
            "--data",
            "x",
            "--out",
            "y"
        ])),
        2
    );
    assert_eq!(code(&mvas(&["no-such-command"])), 2);

    let data = tmp.path().join("data");
    assert_eq!(code(&synth(&data, "1", &[])), 0);
    let config = tmp.path().join("bad.json");
    std::fs::write(&config, r#"{"batch_size": 0}"#).unwrap();
    let out = mvas(&[
        "--config",
        path(&config),
        "train",
        "--data",
        path(&data),
        "--out",
        path(&tmp.path().join("run")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn diverging_training_exits_with_code_three() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&synth(&data, "1", &[])), 0);
    let run = tmp.path().join("run");
    let out = train_for(&data, &run, "20", &["--lr", "1e300"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("loss.csv").is_file());
}

#[test]
fn analysis_commands_run_on_a_dataset() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&synth(&data, "1", &[])), 0);
    let report = tmp.path().join("rank.json");
    let out = mvas(&[
        "tsc-analyze",
        "--data",
        path(&data),
        "--grid",
        "3",
        "--grid-half",
        "0.3",
        "--json",
        path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rows.as_array().map(Vec::len), Some(27));

    let normalized = tmp.path().join("norm");
    let out = mvas(&[
        "normalize-cameras",
        "--data",
        path(&data),
        "--out",
        path(&normalized),
        "--scale-ratio",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(normalized.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["normalization"]["scale_ratio"].as_f64(), Some(2.0));
}
