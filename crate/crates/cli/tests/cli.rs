//! End-to-end contract tests for the `wod` binary: exit codes, diagnostics,
//! determinism of file artifacts, and agreement between command pairs that
//! promise the same numbers (detect vs. fit+score, eval vs. a one-cell tune).

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn wod() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wod"));
    cmd.env_remove("WOD_CONFIG");
    cmd
}

fn run(args: &[&str]) -> Output {
    wod().args(args).output().expect("failed to spawn wod")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout was not utf-8")
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr was not utf-8")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "expected exit {code}; stderr:\n{}",
        stderr_str(out)
    );
}

/// The small labeled benchmark every test works from, generated by the
/// binary itself so the tests exercise `synth` on the way in.
fn bench_csv(dir: &Path) -> PathBuf {
    let path = dir.join("bench.csv");
    let out = run(&[
        "synth",
        "--inliers",
        "190",
        "--outliers",
        "10",
        "--seed",
        "7",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    path
}

const BASE_SETS: &[&str] = &[
    "--set",
    "cluster.k=2",
    "--set",
    "weighting.bins=8",
    "--set",
    "threshold.policy=quantile",
    "--set",
    "threshold.q=0.95",
];

#[test]
fn help_and_version_exit_zero() {
    assert_exit(&run(&["--help"]), 0);
    assert_exit(&run(&["--version"]), 0);
    assert_exit(&run(&["detect", "--help"]), 0);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["defect"]);
    assert_exit(&out, 1);
}

#[test]
fn unknown_config_key_is_named_in_the_diagnostic() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let out = run(&["detect", "--input", data.to_str().unwrap(), "--set", "cluster.nope=1"]);
    assert_exit(&out, 1);
    let err = stderr_str(&out);
    assert!(err.contains("nope"), "diagnostic should name the bad key: {err}");
    assert!(err.contains("config error"), "should classify as a config error: {err}");
}

#[test]
fn missing_input_is_a_data_error() {
    let out = run(&["detect", "--input", "/nonexistent/rows.csv"]);
    assert_exit(&out, 2);
    assert!(stderr_str(&out).contains("data error"));
}

#[test]
fn singular_covariance_is_a_numeric_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("const.csv");
    std::fs::write(&path, "a,b\n1,2\n1,2\n1,2\n1,2\n1,2\n").unwrap();
    let out = run(&[
        "detect",
        "--input",
        path.to_str().unwrap(),
        "--set",
        "cluster.k=1",
        "--set",
        "cluster.ridge=0.0",
        "--set",
        "weighting.scheme=uniform",
    ]);
    assert_exit(&out, 3);
    assert!(stderr_str(&out).contains("numeric error"));
}

#[test]
fn malformed_set_flag_is_rejected() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let out = run(&["detect", "--input", data.to_str().unwrap(), "--set", "cluster.k"]);
    assert_exit(&out, 1);
    assert!(stderr_str(&out).contains("PATH=VALUE"));
}

#[test]
fn detect_artifacts_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let mut artifacts = Vec::new();
    for round in 0..2 {
        let scores = dir.path().join(format!("scores{round}.csv"));
        let report = dir.path().join(format!("report{round}.json"));
        let mut args = vec!["detect", "--input", data.to_str().unwrap(), "--label-column", "label"];
        args.extend_from_slice(BASE_SETS);
        args.extend_from_slice(&["--scores", scores.to_str().unwrap(), "--report", report.to_str().unwrap()]);
        assert_exit(&run(&args), 0);
        artifacts.push((std::fs::read(&scores).unwrap(), std::fs::read(&report).unwrap()));
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "scores CSV must be deterministic");
    assert_eq!(artifacts[0].1, artifacts[1].1, "report JSON must be deterministic");
}

#[test]
fn fit_then_score_reproduces_detect_scores() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let detect_scores = dir.path().join("detect.csv");
    let mut args = vec!["detect", "--input", data.to_str().unwrap(), "--label-column", "label"];
    args.extend_from_slice(BASE_SETS);
    args.extend_from_slice(&["--scores", detect_scores.to_str().unwrap()]);
    assert_exit(&run(&args), 0);

    let model = dir.path().join("model.json");
    let mut args = vec!["fit", "--input", data.to_str().unwrap(), "--label-column", "label"];
    args.extend_from_slice(BASE_SETS);
    args.extend_from_slice(&["--model", model.to_str().unwrap()]);
    assert_exit(&run(&args), 0);

    let score_scores = dir.path().join("score.csv");
    let out = run(&[
        "score",
        "--model",
        model.to_str().unwrap(),
        "--input",
        data.to_str().unwrap(),
        "--label-column",
        "label",
        "--scores",
        score_scores.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);

    assert_eq!(
        std::fs::read(&detect_scores).unwrap(),
        std::fs::read(&score_scores).unwrap(),
        "scoring through a saved model must reproduce detect exactly"
    );
}

#[test]
fn model_json_survives_a_parse_and_reserialize_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let model_path = dir.path().join("model.json");
    let mut args = vec!["fit", "--input", data.to_str().unwrap()];
    args.extend_from_slice(BASE_SETS);
    args.extend_from_slice(&["--model", model_path.to_str().unwrap()]);
    assert_exit(&run(&args), 0);

    let text = std::fs::read_to_string(&model_path).unwrap();
    let model = wod_core::PipelineModel::from_json(&text).unwrap();
    let again = wod_core::report::canonical_json(&model).unwrap();
    assert_eq!(text.trim_end_matches('\n'), again);
}

#[test]
fn scores_csv_conserves_rows() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let scores = dir.path().join("scores.csv");
    let mut args = vec!["detect", "--input", data.to_str().unwrap(), "--label-column", "label"];
    args.extend_from_slice(BASE_SETS);
    args.extend_from_slice(&["--scores", scores.to_str().unwrap()]);
    assert_exit(&run(&args), 0);

    let text = std::fs::read_to_string(&scores).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "row_id,score,flag");
    assert_eq!(lines.len(), 1 + 200, "one line per input row plus the header");
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        assert!(fields[1].parse::<f64>().unwrap().is_finite());
        assert!(fields[2] == "0" || fields[2] == "1");
    }
}

#[test]
fn report_lands_on_stdout_when_no_path_is_given() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let mut args = vec!["detect", "--input", data.to_str().unwrap(), "--label-column", "label"];
    args.extend_from_slice(BASE_SETS);
    let out = run(&args);
    assert_exit(&out, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["command"], "detect");
    assert_eq!(report["dataset"]["rows"], 200);
    assert!(report["metrics"]["auc"].as_f64().unwrap() > 0.9);
    assert!(stderr_str(&out).contains("timing"), "timing belongs on stderr");
}

#[test]
fn tune_with_a_single_cell_agrees_with_eval() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let mut args = vec!["eval", "--input", data.to_str().unwrap(), "--label-column", "label"];
    args.extend_from_slice(BASE_SETS);
    let out = run(&args);
    assert_exit(&out, 0);
    let eval: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    let eval_f1 = eval["cv"]["mean"]["f1"].as_f64().unwrap();

    let mut args = vec!["tune", "--input", data.to_str().unwrap(), "--label-column", "label"];
    args.extend_from_slice(BASE_SETS);
    args.extend_from_slice(&["--set", "tune.grid.weighting.bins=[8]"]);
    let out = run(&args);
    assert_exit(&out, 0);
    let tune: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(tune["grid"]["total_cells"], 1);
    assert_eq!(tune["grid"]["best_score"].as_f64().unwrap(), eval_f1);
}

#[test]
fn synth_is_deterministic_and_seed_sensitive() {
    let a = run(&["synth", "--inliers", "30", "--outliers", "5", "--seed", "3"]);
    let b = run(&["synth", "--inliers", "30", "--outliers", "5", "--seed", "3"]);
    let c = run(&["synth", "--inliers", "30", "--outliers", "5", "--seed", "4"]);
    assert_exit(&a, 0);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn weights_column_and_scheme_must_agree() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("weighted.csv");
    std::fs::write(&path, "a,b,w\n1,2,1.0\n2,3,0.5\n3,4,2.0\n5,6,1.5\n7,8,1.0\n").unwrap();

    // column without the scheme
    let out = run(&["detect", "--input", path.to_str().unwrap(), "--weights-column", "w", "--set", "cluster.k=1"]);
    assert_exit(&out, 1);
    assert!(stderr_str(&out).contains("external"));

    // scheme without the column
    let out = run(&["detect", "--input", path.to_str().unwrap(), "--set", "weighting.scheme=external", "--set", "cluster.k=1"]);
    assert_exit(&out, 1);

    // both together
    let out = run(&[
        "detect",
        "--input",
        path.to_str().unwrap(),
        "--weights-column",
        "w",
        "--set",
        "weighting.scheme=external",
        "--set",
        "cluster.k=1",
    ]);
    assert_exit(&out, 0);
}

#[test]
fn wod_config_env_var_supplies_the_default_config() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let cfg_path = dir.path().join("wod.toml");
    std::fs::write(
        &cfg_path,
        "[cluster]\nk = 2\n[weighting]\nbins = 8\n[threshold]\npolicy = \"quantile\"\nq = 0.95\n",
    )
    .unwrap();

    let out = wod()
        .args(["detect", "--input", data.to_str().unwrap(), "--label-column", "label"])
        .env("WOD_CONFIG", &cfg_path)
        .output()
        .unwrap();
    assert_exit(&out, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["config"]["cluster"]["k"], 2);

    // an explicit --config wins over the environment
    let other = dir.path().join("other.toml");
    std::fs::write(&other, "[cluster]\nk = 3\n").unwrap();
    let out = wod()
        .args([
            "detect",
            "--input",
            data.to_str().unwrap(),
            "--label-column",
            "label",
            "--config",
            other.to_str().unwrap(),
        ])
        .env("WOD_CONFIG", &cfg_path)
        .output()
        .unwrap();
    assert_exit(&out, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["config"]["cluster"]["k"], 3);
}

#[test]
fn stream_emits_one_canonical_verdict_per_window() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let csv = std::fs::read_to_string(&data).unwrap();
    let body: String = csv
        .lines()
        .skip(1)
        .map(|line| {
            let mut fields = line.split(',');
            format!("{},{}\n", fields.next().unwrap(), fields.next().unwrap())
        })
        .collect();

    let mut child = wod()
        .args([
            "stream",
            "--capacity",
            "50",
            "--set",
            "cluster.k=2",
            "--set",
            "weighting.bins=4",
            "--set",
            "threshold.policy=quantile",
            "--set",
            "threshold.q=0.9",
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(body.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_exit(&out, 0);

    let verdicts: Vec<serde_json::Value> = stdout_str(&out)
        .lines()
        .map(|line| serde_json::from_str(line).unwrap())
        .collect();
    assert_eq!(verdicts.len(), 4, "200 rows / 50 per tumbling window");
    for (w, verdict) in verdicts.iter().enumerate() {
        assert_eq!(verdict["window"], w as u64);
        assert_eq!(verdict["row_ids"].as_array().unwrap().len(), 50);
        assert_eq!(verdict["row_ids"][0], (w * 50) as u64);
    }
}

#[test]
fn stream_rejects_non_numeric_rows_with_position() {
    let mut child = wod()
        .args(["stream", "--capacity", "4", "--set", "cluster.k=1"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"1,2\nx,4\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert_exit(&out, 2);
    let err = stderr_str(&out);
    assert!(err.contains("row 1"), "diagnostic should locate the bad row: {err}");
}

#[test]
fn transform_normalizes_and_keeps_labels() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let out = run(&[
        "transform",
        "--input",
        data.to_str().unwrap(),
        "--label-column",
        "label",
        "--set",
        "normalize.method=zscore",
    ]);
    assert_exit(&out, 0);
    let text = stdout_str(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,label");
    assert_eq!(lines.len(), 201);

    // z-scored columns have mean ~0
    let mut sums = [0.0f64; 2];
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        sums[0] += fields[0].parse::<f64>().unwrap();
        sums[1] += fields[1].parse::<f64>().unwrap();
    }
    assert!(sums[0].abs() / 200.0 < 1e-9);
    assert!(sums[1].abs() / 200.0 < 1e-9);
}

#[test]
fn score_set_overrides_apply_on_top_of_the_model_config() {
    let dir = TempDir::new().unwrap();
    let data = bench_csv(dir.path());
    let model = dir.path().join("model.json");
    let mut args = vec!["fit", "--input", data.to_str().unwrap()];
    args.extend_from_slice(BASE_SETS);
    args.extend_from_slice(&["--model", model.to_str().unwrap()]);
    assert_exit(&run(&args), 0);

    let out = run(&[
        "score",
        "--model",
        model.to_str().unwrap(),
        "--input",
        data.to_str().unwrap(),
        "--set",
        "threshold.q=0.5",
    ]);
    assert_exit(&out, 0);
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&out)).unwrap();
    assert_eq!(report["config"]["threshold"]["q"], 0.5);
    assert_eq!(report["flagged"], 100, "half the rows sit above the median score");
    assert_eq!(report["model_ref"].as_str().unwrap(), model.to_str().unwrap());
}
