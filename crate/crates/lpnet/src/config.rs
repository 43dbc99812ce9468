//! Flat key-value experiment configuration with per-level sections.
//!
//! ```text
//! dims = 784 784 784 784 784
//! iterations = 120
//! mode = syn
//!
//! [level 1]
//! lambda2 = 34
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{LpError, Result};
use crate::model::{GoalSpec, HyperParams, LevelLambdas, Mode};

/// Synthetic Gaussian data parameters.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub separation: f64,
    pub spread: f64,
    pub seed: u64,
}

/// A goal placed at one node level.
#[derive(Debug, Clone)]
pub struct GoalConfig {
    pub level: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub sweeps: usize,
}

/// Partial per-level lambda overrides.
#[derive(Debug, Clone, Default)]
pub struct LevelOverride {
    pub l0: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub l3: Option<f64>,
    pub l4: Option<f64>,
    pub l5: Option<f64>,
    pub lb: Option<f64>,
    pub lf: Option<f64>,
}

/// A parsed experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dims: Vec<usize>,
    pub iterations: usize,
    pub seed: u64,
    pub mode: Mode,
    pub rho: f64,
    pub batch_fraction: f64,
    pub bernoulli_p: f64,
    pub knn_k: usize,
    pub gamma: f64,
    pub tie_backward: bool,
    pub cycles: usize,
    pub parallel: bool,
    pub goal_stage_two: bool,
    pub enforce_monotonic: bool,
    pub normalize: bool,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub subset_per_class: Option<usize>,
    pub synthetic: Option<SyntheticSpec>,
    pub goal: Option<GoalConfig>,
    pub epsilon: f64,
    pub levels: BTreeMap<usize, LevelOverride>,
    /// FNV-1a hash of the raw config text.
    pub hash: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dims: Vec::new(),
            iterations: 120,
            seed: 0,
            mode: Mode::Synchronous,
            rho: 0.5,
            batch_fraction: 0.15,
            bernoulli_p: 0.5,
            knn_k: 3,
            gamma: 1.0,
            tie_backward: true,
            cycles: 1,
            parallel: true,
            goal_stage_two: false,
            enforce_monotonic: false,
            normalize: true,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            subset_per_class: None,
            synthetic: None,
            goal: None,
            epsilon: 1e-3,
            levels: BTreeMap::new(),
            hash: 0,
        }
    }
}

fn cfg_err(line_no: usize, msg: impl std::fmt::Display) -> LpError {
    LpError::Config(format!("line {line_no}: {msg}"))
}

fn parse_scalar<T: std::str::FromStr>(line_no: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| cfg_err(line_no, format!("invalid value {v:?} for {key}")))
}

fn parse_bool(line_no: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(cfg_err(line_no, format!("invalid boolean {v:?} for {key}"))),
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl ExperimentConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig {
            hash: fnv1a(text.as_bytes()),
            ..ExperimentConfig::default()
        };
        // Deferred goal/synthetic fields until all keys are seen.
        let mut goal: (Option<usize>, f64, f64, usize) = (None, 34.0, 0.1, 3);
        let mut syn: (Option<usize>, usize, usize, f64, f64, u64) =
            (None, 3, 40, 5.0, 1.0, 0);
        let mut section: Option<usize> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let inner = rest
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(line_no, "unterminated section header"))?
                    .trim();
                let level = inner
                    .strip_prefix("level")
                    .map(str::trim)
                    .ok_or_else(|| cfg_err(line_no, format!("unknown section {inner:?}")))?;
                section = Some(parse_scalar(line_no, "level", level)?);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(line_no, format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());

            if let Some(level) = section {
                let entry = cfg.levels.entry(level).or_default();
                let slot = match key {
                    "lambda0" => &mut entry.l0,
                    "lambda1" => &mut entry.l1,
                    "lambda2" => &mut entry.l2,
                    "lambda3" => &mut entry.l3,
                    "lambda4" => &mut entry.l4,
                    "lambda5" => &mut entry.l5,
                    "lambda_b" => &mut entry.lb,
                    "lambda_f" => &mut entry.lf,
                    _ => return Err(cfg_err(line_no, format!("unknown level key {key:?}"))),
                };
                *slot = Some(parse_scalar(line_no, key, value)?);
                continue;
            }

            match key {
                "dims" => {
                    cfg.dims = value
                        .split_whitespace()
                        .map(|v| parse_scalar(line_no, "dims", v))
                        .collect::<Result<_>>()?;
                }
                "iterations" => cfg.iterations = parse_scalar(line_no, key, value)?,
                "seed" => cfg.seed = parse_scalar(line_no, key, value)?,
                "mode" => {
                    cfg.mode = match value {
                        "syn" => Mode::Synchronous,
                        "asyn" => Mode::Asynchronous,
                        _ => {
                            return Err(cfg_err(
                                line_no,
                                format!("mode must be syn or asyn, got {value:?}"),
                            ))
                        }
                    }
                }
                "rho" => cfg.rho = parse_scalar(line_no, key, value)?,
                "batch_fraction" => cfg.batch_fraction = parse_scalar(line_no, key, value)?,
                "bernoulli_p" => cfg.bernoulli_p = parse_scalar(line_no, key, value)?,
                "knn_k" => cfg.knn_k = parse_scalar(line_no, key, value)?,
                "gamma" => cfg.gamma = parse_scalar(line_no, key, value)?,
                "tie_backward" => cfg.tie_backward = parse_bool(line_no, key, value)?,
                "cycles" => cfg.cycles = parse_scalar(line_no, key, value)?,
                "parallel" => cfg.parallel = parse_bool(line_no, key, value)?,
                "goal_stage_two" => cfg.goal_stage_two = parse_bool(line_no, key, value)?,
                "enforce_monotonic" => cfg.enforce_monotonic = parse_bool(line_no, key, value)?,
                "normalize" => cfg.normalize = parse_bool(line_no, key, value)?,
                "train_images" => cfg.train_images = Some(PathBuf::from(value)),
                "train_labels" => cfg.train_labels = Some(PathBuf::from(value)),
                "test_images" => cfg.test_images = Some(PathBuf::from(value)),
                "test_labels" => cfg.test_labels = Some(PathBuf::from(value)),
                "subset_per_class" => {
                    cfg.subset_per_class = Some(parse_scalar(line_no, key, value)?)
                }
                "epsilon" => cfg.epsilon = parse_scalar(line_no, key, value)?,
                "goal_level" => goal.0 = Some(parse_scalar(line_no, key, value)?),
                "goal_lambda0" => goal.1 = parse_scalar(line_no, key, value)?,
                "goal_lambda1" => goal.2 = parse_scalar(line_no, key, value)?,
                "goal_sweeps" => goal.3 = parse_scalar(line_no, key, value)?,
                "synthetic_dim" => syn.0 = Some(parse_scalar(line_no, key, value)?),
                "synthetic_classes" => syn.1 = parse_scalar(line_no, key, value)?,
                "synthetic_samples" => syn.2 = parse_scalar(line_no, key, value)?,
                "synthetic_separation" => syn.3 = parse_scalar(line_no, key, value)?,
                "synthetic_spread" => syn.4 = parse_scalar(line_no, key, value)?,
                "synthetic_seed" => syn.5 = parse_scalar(line_no, key, value)?,
                _ => return Err(cfg_err(line_no, format!("unknown key {key:?}"))),
            }
        }

        if let Some(level) = goal.0 {
            cfg.goal = Some(GoalConfig {
                level,
                lambda0: goal.1,
                lambda1: goal.2,
                sweeps: goal.3,
            });
        }
        if let Some(dim) = syn.0 {
            cfg.synthetic = Some(SyntheticSpec {
                dim,
                num_classes: syn.1,
                samples_per_class: syn.2,
                separation: syn.3,
                spread: syn.4,
                seed: syn.5,
            });
        }
        if cfg.dims.len() < 2 {
            return Err(LpError::Config(
                "dims must list the input dimension and at least one node level".into(),
            ));
        }
        Ok(cfg)
    }

    /// Defaults: `lambda0`, `lambda2..lambda5` are 34, the threshold-role
    /// `lambda1` is `M_l / (2 l)`, and both propagation weights are 1;
    /// every value is overridable per level.
    pub fn level_lambdas(&self, l: usize) -> LevelLambdas {
        let m_l = self.dims[l] as f64;
        let ov = self.levels.get(&l).cloned().unwrap_or_default();
        LevelLambdas {
            l0: ov.l0.unwrap_or(34.0),
            l1: ov.l1.unwrap_or(m_l / (2.0 * l as f64)),
            l2: ov.l2.unwrap_or(34.0),
            l3: ov.l3.unwrap_or(34.0),
            l4: ov.l4.unwrap_or(34.0),
            l5: ov.l5.unwrap_or(34.0),
            lb: ov.lb.unwrap_or(1.0),
            lf: ov.lf.unwrap_or(1.0),
        }
    }

    pub fn hyper(&self) -> HyperParams {
        let levels = self.dims.len() - 1;
        HyperParams {
            lambdas: (1..=levels).map(|l| self.level_lambdas(l)).collect(),
            gamma: self.gamma,
            rho: self.rho,
            batch_fraction: self.batch_fraction,
            iterations: self.iterations,
            mode: self.mode,
            bernoulli_p: self.bernoulli_p,
            knn_k: self.knn_k,
            seed: self.seed,
            tie_backward: self.tie_backward,
            cycles: self.cycles,
            goal_stage_two: self.goal_stage_two,
            enforce_monotonic: self.enforce_monotonic,
            parallel: self.parallel,
        }
    }

    pub fn goal_map(&self) -> BTreeMap<usize, GoalSpec> {
        let mut map = BTreeMap::new();
        if let Some(g) = &self.goal {
            map.insert(
                g.level,
                GoalSpec::DynamicGoal {
                    lambda0: g.lambda0,
                    lambda1: g.lambda1,
                    sweeps: g.sweeps,
                },
            );
        }
        map
    }
}
