//! Seeded experiment runner: trains per configuration and writes the
//! weight archive, CSV + line-delimited metrics, and a summary record.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::archive::save_network;
use crate::config::ExperimentConfig;
use crate::data::{class_major_labels, load_idx, normalize, synthetic_gaussians};
use crate::error::{LpError, Result};
use crate::knn::knn_evaluate;
use crate::model::{build_network, Network, RepresentationSet};
use crate::training::{theorem1_experiment, train, IterationMetrics, TrainState};
use crate::transforms::forward_pass;

/// Fixed CSV metrics header; one row per (iteration, level).
pub const METRICS_HEADER: &str =
    "iteration,level,r1,r2,r3,a_term,u_term,total,goal_error,risk_mean,elapsed_ms";

/// Labeled train/test split ready for training and evaluation.
pub struct ExperimentData {
    pub train: RepresentationSet,
    pub train_labels: Vec<usize>,
    pub test: Option<RepresentationSet>,
    pub test_labels: Vec<usize>,
}

/// Loads the data named by the configuration: IDX files when paths are
/// given, otherwise the synthetic Gaussian generator.
pub fn load_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    if let (Some(imgs), Some(lbls)) = (&cfg.train_images, &cfg.train_labels) {
        let raw = load_idx(imgs, lbls)?;
        let per_class = match cfg.subset_per_class {
            Some(n) => n,
            None => *raw
                .class_histogram()
                .iter()
                .filter(|&&c| c > 0)
                .min()
                .ok_or_else(|| LpError::Config("empty training dataset".into()))?,
        };
        let mut balanced = raw.balance(per_class)?;
        if cfg.normalize {
            balanced = normalize(balanced);
        }
        let train = balanced.to_representation_set()?;
        let train_labels = class_major_labels(&train);

        let (test, test_labels) = match (&cfg.test_images, &cfg.test_labels) {
            (Some(ti), Some(tl)) => {
                let mut t = load_idx(ti, tl)?.balance(per_class)?;
                if cfg.normalize {
                    t = normalize(t);
                }
                let set = t.to_representation_set()?;
                let labels = class_major_labels(&set);
                (Some(set), labels)
            }
            _ => (None, Vec::new()),
        };
        return Ok(ExperimentData {
            train,
            train_labels,
            test,
            test_labels,
        });
    }
    if let Some(s) = &cfg.synthetic {
        let per_class = cfg.subset_per_class.unwrap_or(s.samples_per_class);
        let train = synthetic_gaussians(
            s.dim,
            s.num_classes,
            per_class,
            s.separation,
            s.spread,
            s.seed,
        )?;
        let train_labels = class_major_labels(&train);
        let test = synthetic_gaussians(
            s.dim,
            s.num_classes,
            per_class,
            s.separation,
            s.spread,
            s.seed.wrapping_add(1),
        )?;
        let test_labels = class_major_labels(&test);
        return Ok(ExperimentData {
            train,
            train_labels,
            test: Some(test),
            test_labels,
        });
    }
    Err(LpError::Config(
        "configuration names neither IDX paths nor synthetic data".into(),
    ))
}

fn write_metrics_row<W: Write>(w: &mut W, it: &IterationMetrics) -> Result<()> {
    for lm in &it.levels {
        let o = &lm.objective;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            it.iteration,
            lm.level,
            o.r1,
            o.r2,
            o.r3,
            o.a_term,
            o.u_term,
            o.total,
            lm.goal_error,
            lm.risk_mean,
            it.elapsed_ms
        )?;
    }
    Ok(())
}

fn write_metrics_record<W: Write>(w: &mut W, it: &IterationMetrics) -> Result<()> {
    let levels: Vec<String> = it
        .levels
        .iter()
        .map(|lm| {
            let o = &lm.objective;
            format!(
                "{{\"level\":{},\"r1\":{},\"r2\":{},\"r3\":{},\"a_term\":{},\"u_term\":{},\"total\":{},\"goal_error\":{},\"risk_mean\":{}}}",
                lm.level, o.r1, o.r2, o.r3, o.a_term, o.u_term, o.total, lm.goal_error, lm.risk_mean
            )
        })
        .collect();
    writeln!(
        w,
        "{{\"iteration\":{},\"elapsed_ms\":{},\"levels\":[{}]}}",
        it.iteration,
        it.elapsed_ms,
        levels.join(",")
    )?;
    Ok(())
}

/// The k-NN evaluation protocol: training representations are the node-L
/// generalized-transform outputs kept in the training state, test
/// representations come from a plain forward sweep of the learned sNTs.
pub fn evaluate_state(
    state: &TrainState,
    data: &ExperimentData,
    k: usize,
) -> Result<Option<f64>> {
    let Some(test) = &data.test else {
        return Ok(None);
    };
    let levels = state.net.num_levels();
    let train_reps = state.y[levels - 1].view();
    let passed = forward_pass(&state.net, test, levels)?;
    let test_reps = passed[levels].view();
    let acc = knn_evaluate(
        train_reps,
        &data.train_labels,
        test_reps,
        &data.test_labels,
        k,
    )?;
    Ok(Some(acc))
}

/// Evaluation from a stored network only: both sides use the sNT forward
/// sweep, since the archive does not carry training-time representations.
pub fn evaluate_network(net: &Network, data: &ExperimentData, k: usize) -> Result<Option<f64>> {
    let Some(test) = &data.test else {
        return Ok(None);
    };
    let levels = net.num_levels();
    let train_reps = forward_pass(net, &data.train, levels)?;
    let test_reps = forward_pass(net, test, levels)?;
    let acc = knn_evaluate(
        train_reps[levels].view(),
        &data.train_labels,
        test_reps[levels].view(),
        &data.test_labels,
        k,
    )?;
    Ok(Some(acc))
}

/// Artifact paths produced by a run.
pub struct RunArtifacts {
    pub archive: PathBuf,
    pub metrics_csv: PathBuf,
    pub metrics_records: PathBuf,
    pub summary: PathBuf,
    pub accuracy: Option<f64>,
}

/// Trains per the configuration and writes `weights.lpnet`, `metrics.csv`,
/// `metrics.jsonl`, and `summary.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let data = load_data(cfg)?;
    if data.train.dim() != cfg.dims[0] {
        return Err(LpError::Config(format!(
            "data dimension {} does not match dims[0] = {}",
            data.train.dim(),
            cfg.dims[0]
        )));
    }
    let hyper = cfg.hyper();
    let net = build_network(&cfg.dims, &hyper, &cfg.goal_map())?;
    let state = train(net, &data.train, &hyper)?;

    let archive = out_dir.join("weights.lpnet");
    save_network(&state.net, &archive)?;

    let metrics_csv = out_dir.join("metrics.csv");
    let metrics_records = out_dir.join("metrics.jsonl");
    {
        let mut csv = BufWriter::new(File::create(&metrics_csv)?);
        writeln!(csv, "{METRICS_HEADER}")?;
        let mut jsonl = BufWriter::new(File::create(&metrics_records)?);
        for it in &state.metrics {
            write_metrics_row(&mut csv, it)?;
            write_metrics_record(&mut jsonl, it)?;
        }
        csv.flush()?;
        jsonl.flush()?;
    }

    let accuracy = evaluate_state(&state, &data, cfg.knn_k)?;
    let summary = out_dir.join("summary.json");
    {
        let mut w = BufWriter::new(File::create(&summary)?);
        let acc = match accuracy {
            Some(a) => format!("{a}"),
            None => "null".into(),
        };
        writeln!(
            w,
            "{{\"config_hash\":\"{:016x}\",\"seed\":{},\"iterations\":{},\"final_accuracy\":{}}}",
            cfg.hash, cfg.seed, cfg.iterations, acc
        )?;
        w.flush()?;
    }
    Ok(RunArtifacts {
        archive,
        metrics_csv,
        metrics_records,
        summary,
        accuracy,
    })
}

/// Runs the single-goal forward-propagation experiment and writes its
/// per-iteration goal values as CSV next to the usual artifacts.
pub fn run_theorem1(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(PathBuf, Vec<f64>, Option<usize>, bool)> {
    std::fs::create_dir_all(out_dir)?;
    let goal = cfg
        .goal
        .as_ref()
        .ok_or_else(|| LpError::Config("theorem1 requires goal_level in the config".into()))?;
    let data = load_data(cfg)?;
    if data.train.dim() != cfg.dims[0] {
        return Err(LpError::Config(format!(
            "data dimension {} does not match dims[0] = {}",
            data.train.dim(),
            cfg.dims[0]
        )));
    }
    let hyper = cfg.hyper();
    let net = build_network(&cfg.dims, &hyper, &cfg.goal_map())?;
    let report = theorem1_experiment(net, &data.train, &hyper, goal.level, cfg.epsilon)?;

    let path = out_dir.join("theorem1.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "iteration,goal_value")?;
    for (i, v) in report.goal_values.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, v)?;
    }
    w.flush()?;
    save_network(&report.final_state.net, &out_dir.join("weights.lpnet"))?;
    Ok((
        path,
        report.goal_values,
        report.first_below,
        report.hypothesis_violated,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> ExperimentConfig {
        ExperimentConfig::parse_str(
            "dims = 6 6 6\n\
             iterations = 3\n\
             batch_fraction = 1.0\n\
             rho = 0.0\n\
             synthetic_dim = 6\n\
             synthetic_classes = 2\n\
             synthetic_samples = 4\n\
             goal_level = 2\n\
             goal_lambda0 = 0.1\n\
             goal_lambda1 = 0.2\n\
             [level 1]\n\
             lambda1 = 0.1\n\
             lambda2 = 0.5\n\
             lambda3 = 0\n\
             lambda4 = 0\n\
             lambda5 = 0.5\n\
             lambda0 = 0\n\
             [level 2]\n\
             lambda1 = 0.1\n\
             lambda2 = 0.5\n\
             lambda3 = 0\n\
             lambda4 = 0\n\
             lambda5 = 0.5\n\
             lambda0 = 0.1\n",
        )
        .unwrap()
    }

    #[test]
    fn artifacts_exist_and_rerun_is_byte_identical() {
        let cfg = toy_config();
        let dir = tempfile::tempdir().unwrap();
        let out1 = dir.path().join("a");
        let out2 = dir.path().join("b");
        let r1 = run_experiment(&cfg, &out1).unwrap();
        let r2 = run_experiment(&cfg, &out2).unwrap();
        for p in [&r1.archive, &r1.metrics_csv, &r1.metrics_records, &r1.summary] {
            assert!(p.exists(), "{p:?} missing");
        }
        let a = std::fs::read(&r1.archive).unwrap();
        let b = std::fs::read(&r2.archive).unwrap();
        assert_eq!(a, b);
        let head = std::fs::read_to_string(&r1.metrics_csv).unwrap();
        assert!(head.starts_with(METRICS_HEADER));
        // 3 iterations x 2 levels + header.
        assert_eq!(head.lines().count(), 7);
    }

    #[test]
    fn missing_data_is_a_config_error() {
        let cfg = ExperimentConfig::parse_str("dims = 4 4\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            run_experiment(&cfg, dir.path()),
            Err(LpError::Config(_))
        ));
    }
}
