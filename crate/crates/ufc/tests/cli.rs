use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ufc::core::ufc::{decide, report_from_predictions};
use ufc::formats;

fn ufc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ufc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Small enough to run the whole pipeline in about a second.
fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        r#"output_dir = "{out}"
members = 3
sweep_members = [1, 3]
{extra}

[network]
conv_channels = [4, 8]
feature_dim = 16

[training]
batch_size = 32
epochs = 2

[scenario]
duration = 20.0
source_wind_speeds = [0.0, 5.0]
training_flights = 1

[scenario.target]
calibration_flights = [2, 0, 0, 0, 0]
evaluation_flights = 1
"#,
        out = dir.join("run").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) {
    let out = ufc(args);
    assert_eq!(
        code(&out),
        0,
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Every regular file below `dir` with its bytes, sorted by relative path.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn version_lists_formats() {
    let out = ufc(&["--version"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.starts_with(&format!("ufc {}", env!("CARGO_PKG_VERSION"))),
        "{text}"
    );
    assert!(text.contains("model version 1"));
    assert!(text.contains("ufc-ensemble/1") && text.contains("ufc-dataset/1"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "members = 0\n").unwrap();
    assert_eq!(
        code(&ufc(&["simulate", "--config", bad.to_str().unwrap()])),
        2
    );
    std::fs::write(&bad, "not toml at all [").unwrap();
    assert_eq!(
        code(&ufc(&["simulate", "--config", bad.to_str().unwrap()])),
        2
    );
    // Usage errors come from the argument parser with the same code.
    assert_eq!(code(&ufc(&["evaluate", "--threshold", "-1"])), 2);

    let missing = dir.path().join("nothing");
    assert_eq!(
        code(&ufc(&["simulate", "--config", missing.to_str().unwrap()])),
        4
    );
    assert_eq!(
        code(&ufc(&[
            "evaluate",
            "--output",
            missing.to_str().unwrap(),
            "--threshold",
            "none"
        ])),
        4
    );

    let diverging = tiny_config(dir.path(), "");
    let text = std::fs::read_to_string(&diverging)
        .unwrap()
        .replace("epochs = 2", "epochs = 2\nlearning_rate = 1e300");
    std::fs::write(&diverging, text).unwrap();
    let c = diverging.to_str().unwrap();
    run_ok(&["simulate", "--config", c]);
    let out = ufc(&["train", "--config", c, "--members", "1"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("member 0"));
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = tiny_config(a.path(), "");
    let cb = tiny_config(b.path(), "");
    run_ok(&["simulate", "--config", ca.to_str().unwrap(), "--jobs", "1"]);
    run_ok(&["simulate", "--config", cb.to_str().unwrap(), "--jobs", "3"]);
    let ta = tree(&a.path().join("run/dataset"));
    assert!(ta.len() > 3);
    assert_eq!(ta, tree(&b.path().join("run/dataset")));

    let c = tempfile::tempdir().unwrap();
    let cc = tiny_config(c.path(), "");
    run_ok(&["simulate", "--config", cc.to_str().unwrap(), "--seed", "7"]);
    assert_ne!(ta, tree(&c.path().join("run/dataset")));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "threshold_grid = [0.7]");
    let c = config.to_str().unwrap();
    let run = dir.path().join("run");
    run_ok(&["simulate", "--config", c]);
    run_ok(&["train", "--config", c, "--jobs", "1"]);
    run_ok(&["calibrate", "--config", c]);
    run_ok(&["evaluate", "--config", c]);
    run_ok(&["sweep", "--config", c]);

    // Member training does not depend on the thread count.
    let other = dir.path().join("other.json");
    run_ok(&["train", "--config", c, "--jobs", "3"]);
    std::fs::rename(run.join("ensemble.json"), &other).unwrap();
    run_ok(&["train", "--config", c, "--jobs", "1"]);
    assert_eq!(
        std::fs::read(&other).unwrap(),
        std::fs::read(run.join("ensemble.json")).unwrap()
    );

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("ensemble.json")).unwrap()).unwrap();
    assert_eq!(manifest["count"], 3);
    for m in manifest["members"].as_array().unwrap() {
        assert!(m["final_loss"]["total"].as_f64().unwrap().is_finite());
    }

    // A single-value grid is the calibrated threshold.
    let threshold = formats::read_threshold(&run.join("threshold.json")).unwrap();
    assert_eq!(threshold.threshold, 0.7);
    assert_eq!(threshold.members, 3);

    let report = formats::read_report(&run.join("report_target.json"))
        .unwrap()
        .report;
    assert_eq!(report.threshold, 0.7);
    assert!(run.join("report_target.txt").exists());
    let sweep = formats::read_sweep(&run.join("sweep_target.json")).unwrap();
    assert_eq!(sweep.table.member_counts, vec![1, 3]);
    assert_eq!(sweep.table.thresholds.len(), 8);
    let n3 = sweep.table.cell(3, f64::INFINITY).unwrap();
    assert_eq!(n3.accuracy, report.unfiltered_accuracy);

    // Accept-all reproduces the unfiltered matrix.
    run_ok(&["evaluate", "--config", c, "--threshold", "none"]);
    let all = formats::read_report(&run.join("report_target.json"))
        .unwrap()
        .report;
    assert_eq!(all.accepted_matrix, all.unfiltered_matrix);
    assert_eq!(all.unfiltered_matrix, report.unfiltered_matrix);
    assert_eq!(all.accuracy, all.unfiltered_accuracy);

    // Traces: one row per window, decisions follow the threshold.
    run_ok(&[
        "trace",
        "--config",
        c,
        "--flight",
        "0",
        "--threshold",
        "0.9",
    ]);
    let data = formats::read_dataset(&run.join("dataset")).unwrap();
    let flight = data.flight(0).unwrap();
    let rows = formats::read_trace(&run.join("traces/flight_0000.csv")).unwrap();
    assert_eq!(rows.len(), flight.rows.len() - 15);
    assert_eq!(rows[0].time, 16.0 * flight.dt);
    let (_, ensemble) = formats::read_ensemble(&run.join("ensemble.json")).unwrap();
    let expected = ufc::core::ufc::trace_flight(&ensemble, flight, 15, 0.9).unwrap();
    assert_eq!(rows, expected);
    for r in &rows {
        assert_eq!(r.decision.is_accepted(), r.entropy < 0.9);
    }

    // The held-out report matches a direct library computation.
    let held_out = data.evaluation(ufc::core::sim::Domain::Target);
    let samples: Vec<_> = held_out.samples.iter().collect();
    let preds = ensemble.predict_batch(&samples).unwrap();
    let direct = report_from_predictions(&preds, &held_out.labels(), 0.7).unwrap();
    assert_eq!(direct, report);
    assert_eq!(decide(&preds[0], 0.7).entropy, preds[0].entropy);
}

#[test]
fn sweep_larger_than_pool_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "");
    let c = config.to_str().unwrap();
    run_ok(&["simulate", "--config", c]);
    run_ok(&["train", "--config", c, "--members", "1"]);
    let out = ufc(&["sweep", "--config", c]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}
