use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bulksurf::checkpoint::Checkpoint;

fn bulksurf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bulksurf")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

/// Data rows of a CSV file as parsed floats, skipping the version and header lines.
fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

const EQUILIBRIUM: &str = r#"{
  "geometry": {"kind": "disk", "n_r": 6, "n_theta": 12},
  "model": {"alpha": 2, "beta": 1, "d_v": 0.5, "epsilon": 0.01},
  "time": {"dt": 0.01, "t_end": 0.1},
  "initial": {"preset": "equilibrium"}
}"#;

#[test]
fn solve_on_equilibrium_keeps_every_row() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), EQUILIBRIUM);
    let out = tmp.path().join("out");
    let res = bulksurf(&["solve", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let rows = csv_rows(&out.join("trajectory.csv"));
    assert_eq!(rows.len(), 11);
    for row in &rows[1..] {
        for (k, (a, b)) in row.iter().zip(&rows[0]).enumerate().skip(1) {
            assert!((a - b).abs() <= 1e-12, "column {k}: {a} vs {b}");
        }
    }
    let cp = Checkpoint::read(&out.join("final_state.json")).unwrap();
    assert_eq!(cp.schema, 1);
    assert!((cp.t - 0.1).abs() < 1e-15);
}

#[test]
fn malformed_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for text in [
        r#"{"geometry": {"kind": "interval", "n_bulk": 16}, "model": {"alpha": 0}}"#,
        r#"{"geometry": {"kind": "interval", "n_bulk": 16},"#,
        r#"{"geometry": {"kind": "interval", "n_bulk": 16}, "model": {"d_v": 1.0}}"#,
    ] {
        let config = write_config(tmp.path(), text);
        let res = bulksurf(&["solve", "--config", &config, "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(2));
        assert!(!out.exists());
    }
}

#[test]
fn validation_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"geometry": {"kind": "interval", "n_bulk": 16}, "model": {"alpha": 0, "epsilon": -1}}"#,
    );
    let res = bulksurf(&["solve", "--config", &config, "--out", tmp.path().join("o").to_str().unwrap()]);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("model.alpha"), "{err}");
    assert!(err.contains("model.epsilon"), "{err}");
}

#[test]
fn solver_failure_leaves_a_failure_record() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"geometry": {"kind": "interval", "n_bulk": 32},
            "model": {"alpha": 3, "beta": 1, "epsilon": 1e-9},
            "time": {"dt": 1.0, "t_end": 2.0, "newton_max_iter": 1, "damping": "none"},
            "initial": {"preset": "incompatible-jump"}}"#,
    );
    let out = tmp.path().join("out");
    let res = bulksurf(&["solve", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("failure.json")).unwrap()).unwrap();
    assert_eq!(record["error"], "NewtonDiverged");
    assert!(record["time"].as_f64().is_some());
    assert!(!out.join("trajectory.csv").exists());
}

#[test]
fn sweep_outputs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"geometry": {"kind": "interval", "n_bulk": 32},
            "model": {"alpha": 1, "beta": 1},
            "time": {"dt": 0.001, "t_end": 0.1},
            "initial": {"preset": "compatible-positive"},
            "experiment": {"eps_list": [0.001, 0.1, 0.01, 0.0001]}}"#,
    );
    let mut reports = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let out = tmp.path().join(name);
        let res = bulksurf(&["sweep-eps", "--config", &config, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert!(summary["slope"].as_f64().unwrap() >= 0.45);
        reports.push(fs::read(out.join("report.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let params: Vec<f64> = csv_rows(&tmp.path().join("a/report.csv")).iter().map(|r| r[0]).collect();
    assert_eq!(params, [0.1, 0.01, 0.001, 0.0001]);
}

#[test]
fn resumed_solve_matches_an_unbroken_one() {
    let tmp = tempfile::tempdir().unwrap();
    let base = r#"{"geometry": {"kind": "disk", "n_r": 4, "n_theta": 8},
        "model": {"alpha": 1, "beta": 2, "d_v": 0.3, "epsilon": 0.05, "trace_order": 1},
        "time": {"dt": 0.01, "t_end": T_END},
        "initial": {"preset": "incompatible-jump"}}"#;
    let run = |t_end: &str, out: &str, resume: Option<&Path>| {
        let config = write_config(tmp.path(), &base.replace("T_END", t_end));
        let out = tmp.path().join(out);
        let mut args = vec!["solve", "--config", &config, "--out", out.to_str().unwrap()];
        let resume = resume.map(|p| p.to_string_lossy().into_owned());
        if let Some(r) = &resume {
            args.extend(["--resume", r.as_str()]);
        }
        let res = bulksurf(&args);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        Checkpoint::read(&out.join("final_state.json")).unwrap()
    };
    let whole = run("0.2", "whole", None);
    let half = run("0.1", "half", None);
    let rest = run("0.2", "rest", Some(&tmp.path().join("half/final_state.json")));
    assert_eq!(half.t, 0.1);
    for (a, b) in rest.u.iter().chain(&rest.v).zip(whole.u.iter().chain(&whole.v)) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn resume_rejects_a_foreign_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), EQUILIBRIUM);
    let out = tmp.path().join("first");
    assert!(bulksurf(&["solve", "--config", &config, "--out", out.to_str().unwrap()]).status.success());
    let other = write_config(
        tmp.path(),
        r#"{"geometry": {"kind": "interval", "n_bulk": 8}, "initial": {"preset": "equilibrium"}}"#,
    );
    let cp = out.join("final_state.json");
    let res = bulksurf(&[
        "solve",
        "--config",
        &other,
        "--out",
        tmp.path().join("second").to_str().unwrap(),
        "--resume",
        cp.to_str().unwrap(),
    ]);
    assert!(!res.status.success());
}

#[test]
fn every_command_runs_on_a_small_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        r#"{"geometry": {"kind": "interval", "n_bulk": 16},
            "model": {"alpha": 2, "beta": 2, "epsilon": 0.1, "delta": 0.1},
            "time": {"dt": 0.01, "t_end": 0.05},
            "initial": {"u": "1 + 0.1*cos(pi*x)", "v": "1 + 0.1*cos(pi*x)"},
            "experiment": {"modes": 8, "mms_levels": [8, 16, 32], "mms_dts": [0.02, 0.01, 0.005],
                           "eps_list": [0.1, 0.01, 0.001], "delta_list": [0.1, 0.01, 0.001]}}"#,
    );
    let expected: [(&str, &[&str]); 5] = [
        ("limit", &["final_state.json", "trajectory.csv"]),
        ("sweep-eps", &["report.csv", "summary.json"]),
        ("sweep-delta", &["report.csv", "summary.json"]),
        ("galerkin", &["final_state.json", "summary.json", "trajectory.csv"]),
        ("mms", &["report.csv", "summary.json"]),
    ];
    for (cmd, files) in expected {
        let out = tmp.path().join(cmd);
        let res = bulksurf(&[cmd, "--config", &config, "--out", out.to_str().unwrap()]);
        let mut names: Vec<String> =
            fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
        names.sort();
        assert!(res.status.success() || cmd == "mms", "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
        if res.status.success() {
            assert_eq!(names, files, "{cmd}");
        } else {
            assert_eq!(names, ["failure.json"], "{cmd}");
        }
    }
}
