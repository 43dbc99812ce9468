//! End-to-end tests of the `lpnet` binary: exit codes, artifact layout,
//! determinism across runs, and the IDX ingestion path.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;

use lpnet::data::{write_idx_images, write_idx_labels};
use lpnet::experiment::METRICS_HEADER;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lpnet"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn lpnet")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A small all-synthetic configuration that trains in well under a second.
const TINY_CONF: &str = "\
dims = 6 6 6
iterations = 3
seed = 0
mode = syn
batch_fraction = 1.0
rho = 0.5
gamma = 1.0
synthetic_dim = 6
synthetic_classes = 2
synthetic_samples = 6
synthetic_separation = 3.0
synthetic_spread = 0.5
synthetic_seed = 7
[level 1]
lambda1 = 0.2
lambda2 = 0.5
lambda3 = 0.2
lambda4 = 0
lambda5 = 0.5
lambda_b = 0
lambda_f = 1
[level 2]
lambda1 = 0.2
lambda2 = 0.5
lambda3 = 0.2
lambda4 = 0
lambda5 = 0.5
lambda_b = 0
lambda_f = 1
";

fn write_tiny_conf(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.conf");
    fs::write(&path, TINY_CONF).unwrap();
    path
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unknown_flag_is_a_config_error() {
    let out = run(&["train", "--config", "x.conf", "--bogus"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_subcommand_is_a_config_error() {
    assert_eq!(code(&run(&[])), 2);
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--config",
        dir.path().join("nope.conf").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    fs::write(&path, "dims = 6 six 6\n").unwrap();
    let out = run(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_writes_artifacts_and_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_tiny_conf(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");

    for out_dir in [&out_a, &out_b] {
        let out = run(&[
            "train",
            "--config",
            conf.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("final_accuracy:"));
    }
    let third = run(&[
        "train",
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "99",
        "--out",
        out_c.to_str().unwrap(),
    ]);
    assert_eq!(code(&third), 0);

    let metrics = fs::read_to_string(out_a.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), METRICS_HEADER);
    // 3 iterations x 2 levels of data rows after the header.
    assert_eq!(metrics.lines().count(), 1 + 3 * 2);
    assert!(out_a.join("summary.json").exists());
    assert!(out_a.join("metrics.jsonl").exists());

    let wa = fs::read(out_a.join("weights.lpnet")).unwrap();
    let wb = fs::read(out_b.join("weights.lpnet")).unwrap();
    let wc = fs::read(out_c.join("weights.lpnet")).unwrap();
    assert_eq!(wa, wb, "same seed must reproduce the archive bitwise");
    assert_ne!(wa, wc, "a different seed must change the learned weights");
}

#[test]
fn eval_and_inspect_round_trip_through_the_archive() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_tiny_conf(dir.path());
    let out_dir = dir.path().join("run");
    let trained = run(&[
        "train",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&trained), 0);

    // Eval defaults to OUT/weights.lpnet.
    let eval = run(&[
        "eval",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&eval), 0, "stderr: {}", String::from_utf8_lossy(&eval.stderr));
    assert!(stdout(&eval).contains("accuracy:"));

    // A missing archive is a runtime error, not a usage error.
    let missing = run(&[
        "eval",
        "--config",
        conf.to_str().unwrap(),
        "--archive",
        dir.path().join("absent.lpnet").to_str().unwrap(),
    ]);
    assert_eq!(code(&missing), 1);

    let inspect = run(&[
        "inspect-archive",
        out_dir.join("weights.lpnet").to_str().unwrap(),
    ]);
    assert_eq!(code(&inspect), 0);
    let text = stdout(&inspect);
    assert!(text.contains("levels: 2"));
    assert!(text.contains("dims: 6 6 6"));
    assert!(text.contains("checksum:"));

    // Truncated archives must be rejected at runtime.
    let garbled = dir.path().join("garbled.lpnet");
    let mut bytes = fs::read(out_dir.join("weights.lpnet")).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&garbled, bytes).unwrap();
    assert_eq!(code(&run(&["inspect-archive", garbled.to_str().unwrap()])), 1);
}

#[test]
fn theorem1_writes_goal_values() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("t1.conf");
    fs::write(
        &conf,
        "\
dims = 8 8 8
iterations = 5
seed = 0
mode = syn
batch_fraction = 1.0
rho = 0.5
gamma = 0.8
tie_backward = false
epsilon = 1e-9
synthetic_dim = 8
synthetic_classes = 2
synthetic_samples = 10
synthetic_separation = 0.15
synthetic_spread = 0.08
goal_level = 2
goal_lambda0 = 0.05
goal_lambda1 = 0.05
goal_sweeps = 2
[level 1]
lambda1 = 0.05
lambda4 = 0
[level 2]
lambda1 = 0.05
lambda4 = 0
",
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let out = run(&[
        "theorem1",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("final_goal_value:"));
    assert!(text.contains("first_below_epsilon:"));
    // One goal value per iteration in the emitted CSV.
    let csv_path = text
        .lines()
        .find_map(|l| l.strip_prefix("goal_values: "))
        .expect("goal_values path in output");
    let csv = fs::read_to_string(csv_path).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn idx_files_round_trip_through_training() {
    let dir = tempfile::tempdir().unwrap();
    let n = 12; // 2 classes x 6 samples, 2x2-pixel images
    let images = Array2::from_shape_fn((4, n), |(i, j)| {
        if j % 2 == 0 {
            ((i * 40 + 20) % 256) as f64
        } else {
            ((i * 30 + 150) % 256) as f64
        }
    });
    let labels: Vec<usize> = (0..n).map(|j| j % 2).collect();
    let img_path = dir.path().join("imgs.idx3");
    let lbl_path = dir.path().join("lbls.idx1");
    write_idx_images(&img_path, images.view(), 2, 2).unwrap();
    write_idx_labels(&lbl_path, &labels).unwrap();

    let conf = dir.path().join("idx.conf");
    fs::write(
        &conf,
        format!(
            "\
dims = 4 4
iterations = 2
seed = 0
mode = syn
batch_fraction = 1.0
normalize = true
train_images = {img}
train_labels = {lbl}
test_images = {img}
test_labels = {lbl}
[level 1]
lambda1 = 0.2
lambda2 = 0.5
lambda3 = 0.2
lambda4 = 0
lambda5 = 0.5
lambda_b = 0
lambda_f = 1
",
            img = img_path.display(),
            lbl = lbl_path.display(),
        ),
    )
    .unwrap();

    let out_dir = dir.path().join("run");
    let trained = run(&[
        "train",
        "--config",
        conf.to_str().unwrap(),
        "--subset",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&trained),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&trained.stderr)
    );
    assert!(out_dir.join("weights.lpnet").exists());

    let eval = run(&[
        "eval",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&eval), 0);
    assert!(stdout(&eval).contains("accuracy:"));
}
