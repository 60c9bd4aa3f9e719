//! End-to-end checks of the `lcr` binary: exit codes, report plumbing,
//! config-file precedence and reproducibility of whole pipeline runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn lcr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Small but non-trivial dataset shared by the pipeline tests.
fn tiny_csv(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.csv");
    let out = lcr(&[
        "gen-data",
        "--preset",
        "ml100k",
        "--users",
        "80",
        "--items",
        "120",
        "--ratings",
        "2400",
        "--min-degree",
        "5",
        "--seed",
        "7",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "gen-data failed: {}", stderr(&out));
    path
}

fn rmse_line(report: &str) -> &str {
    report
        .lines()
        .find(|l| l.starts_with("rmse = "))
        .expect("report carries an rmse line")
}

fn config_value<'a>(report: &'a str, key: &str) -> &'a str {
    let prefix = format!("{key} = ");
    report
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("report echoes {key}"))
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&lcr(&["--help"])), 0);
    assert_eq!(code(&lcr(&["--version"])), 0);
    assert_eq!(code(&lcr(&["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    // Unknown flag, unknown subcommand, missing required setting.
    assert_eq!(code(&lcr(&["train", "--no-such-flag"])), 1);
    assert_eq!(code(&lcr(&["no-such-command"])), 1);
    let out = lcr(&["train"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("data"), "names the missing key: {}", stderr(&out));
}

#[test]
fn missing_input_file_exits_two() {
    let out = lcr(&["train", "--data", "/nonexistent/ratings.csv", "--format", "csv"]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
}

#[test]
fn divergent_training_exits_three() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let model = dir.path().join("diverged.bin");
    let out = lcr(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--model",
        "bmf",
        "--gamma",
        "5.0",
        "--epochs",
        "10",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("gamma"), "blames the step size: {}", stderr(&out));
}

#[test]
fn gen_data_is_seeded() {
    let dir = TempDir::new().unwrap();
    let a = tiny_csv(dir.path());
    let a_bytes = fs::read(&a).unwrap();
    fs::remove_file(&a).unwrap();
    let b = tiny_csv(dir.path());
    assert_eq!(a_bytes, fs::read(&b).unwrap(), "same seed, same file");

    let other = dir.path().join("other.csv");
    let out = lcr(&[
        "gen-data",
        "--preset",
        "ml100k",
        "--users",
        "80",
        "--items",
        "120",
        "--ratings",
        "2400",
        "--min-degree",
        "5",
        "--seed",
        "8",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_ne!(a_bytes, fs::read(&other).unwrap(), "different seed, different file");
}

/// Splitting up front, then training and scoring the exported sides, must
/// reproduce `compare --reps 1` digit for digit.
#[test]
fn split_train_eval_matches_compare() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let train = dir.path().join("train.csv");
    let probe = dir.path().join("probe.csv");
    let out = lcr(&[
        "ingest",
        "--data",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--split",
        "0.8",
        "--seed",
        "42",
        "--train-out",
        train.to_str().unwrap(),
        "--probe-out",
        probe.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "ingest: {}", stderr(&out));

    let model = dir.path().join("bmf.bin");
    let out = lcr(&[
        "train",
        "--data",
        train.to_str().unwrap(),
        "--format",
        "csv",
        "--model",
        "bmf",
        "--epochs",
        "10",
        "--seed",
        "42",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "train: {}", stderr(&out));

    let out = lcr(&[
        "eval",
        "--data",
        probe.to_str().unwrap(),
        "--format",
        "csv",
        "--model-file",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "eval: {}", stderr(&out));
    let eval_rmse = rmse_line(&stdout(&out)).to_string();

    let out = lcr(&[
        "compare",
        "--data",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--model",
        "bmf",
        "--split",
        "0.8",
        "--reps",
        "1",
        "--epochs",
        "10",
        "--seed",
        "42",
    ]);
    assert_eq!(code(&out), 0, "compare: {}", stderr(&out));
    assert_eq!(rmse_line(&stdout(&out)), eval_rmse);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let mut files = Vec::new();
    let mut reports = Vec::new();
    for name in ["a.bin", "b.bin"] {
        let model = dir.path().join(name);
        let report = dir.path().join(format!("{name}.report"));
        let out = lcr(&[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--format",
            "csv",
            "--model",
            "lcr",
            "--components",
            "3",
            "--epochs",
            "5",
            "--seed",
            "11",
            "--out",
            model.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "train: {}", stderr(&out));
        files.push(fs::read(&model).unwrap());
        reports.push(fs::read_to_string(&report).unwrap());
    }
    assert_eq!(files[0], files[1], "model files must match byte for byte");
    // Reports differ only in wall time and the destination path.
    let stable = |r: &str| -> Vec<String> {
        r.lines()
            .filter(|l| !l.starts_with("wall_time_s.") && !l.starts_with("out = "))
            .map(str::to_string)
            .collect()
    };
    assert_eq!(stable(&reports[0]), stable(&reports[1]));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        "# shared experiment settings\nepochs = 7\nfactors = 4\nseed = 9\n",
    )
    .unwrap();

    let model = dir.path().join("m.bin");
    let base = [
        "train",
        "--data",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--model",
        "bmf",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ];
    let out = lcr(&base);
    assert_eq!(code(&out), 0, "train: {}", stderr(&out));
    let report = stdout(&out);
    assert_eq!(config_value(&report, "epochs"), "7");
    assert_eq!(config_value(&report, "factors"), "4");
    assert_eq!(config_value(&report, "seed"), "9");

    let mut flagged = base.to_vec();
    flagged.extend(["--epochs", "3"]);
    let out = lcr(&flagged);
    assert_eq!(code(&out), 0);
    let report = stdout(&out);
    assert_eq!(config_value(&report, "epochs"), "3", "flag beats config file");
    assert_eq!(config_value(&report, "factors"), "4");
}

#[test]
fn unreadable_config_line_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "epochs 7\n").unwrap();
    let model = dir.path().join("m.bin");
    let out = lcr(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
    assert!(
        stderr(&out).contains(":1: expected key = value"),
        "points at the line: {}",
        stderr(&out)
    );
}

#[test]
fn sweep_writes_a_tab_separated_table() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let table = dir.path().join("sweep.tsv");
    let out = lcr(&[
        "sweep-components",
        "--data",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--c-values",
        "2,3",
        "--epochs",
        "3",
        "--seed",
        "5",
        "--out",
        table.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "sweep: {}", stderr(&out));
    let text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "c\trmse");
    assert_eq!(lines.len(), 3);
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split('\t').collect();
        assert_eq!(cells.len(), 2);
        assert!(cells[1].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn decomposition_dump_conserves_each_rating() {
    let dir = TempDir::new().unwrap();
    let data = tiny_csv(dir.path());
    let out = lcr(&[
        "dump-decomposition",
        "--data",
        data.to_str().unwrap(),
        "--format",
        "csv",
        "--components",
        "3",
        "--epochs",
        "3",
        "--seed",
        "2",
    ]);
    assert_eq!(code(&out), 0, "dump: {}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "user\titem\trating\tw_1\tw_2\tw_3\tr_1\tr_2\tr_3"
    );
    let mut rows = 0usize;
    for line in lines {
        let cells: Vec<f64> = line
            .split('\t')
            .skip(2)
            .map(|c| c.parse().expect("numeric cell"))
            .collect();
        let (rating, weights, shares) = (cells[0], &cells[1..4], &cells[4..7]);
        // Cells carry six decimals, so sums are exact only to that grain.
        let w_sum: f64 = weights.iter().sum();
        let r_sum: f64 = shares.iter().sum();
        assert!((w_sum - 1.0).abs() < 2e-6, "{line}");
        assert!((r_sum - rating).abs() < 2e-6, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 2400);
}
