//! Network topology, representation storage and parameter containers.
//!
//! A chain network has node levels `0..=L`. Level 0 holds the input data.
//! The forward weight `A_{l-1}` (shape `M_l x M_{l-1}`) maps level `l-1` to
//! level `l` and is stored on the level-`l` node. The backward weight `B_l`
//! (shape `M_l x M_{l+1}`) reconstructs level `l` from level `l+1`; in
//! tied mode `B_l` is never stored and every read resolves to `A_l^T`.

use std::collections::BTreeMap;

use ndarray::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LpError, Result};

/// Column index of sample `k` of class `c` (both 1-based) in a `C*K` layout.
pub fn column_index(c: usize, k: usize, num_classes: usize, samples_per_class: usize) -> Result<usize> {
    if c < 1 || c > num_classes {
        return Err(LpError::Index(format!(
            "class {c} out of range 1..={num_classes}"
        )));
    }
    if k < 1 || k > samples_per_class {
        return Err(LpError::Index(format!(
            "sample {k} out of range 1..={samples_per_class}"
        )));
    }
    Ok((c - 1) * samples_per_class + (k - 1))
}

/// An `M x (C*K)` matrix of per-sample column vectors with class/sample
/// indexing. Columns of class `c` occupy the contiguous block
/// `(c-1)*K .. c*K`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    data: Array2<f64>,
    num_classes: usize,
    samples_per_class: usize,
}

impl RepresentationSet {
    pub fn new(data: Array2<f64>, num_classes: usize, samples_per_class: usize) -> Result<Self> {
        if num_classes == 0 || samples_per_class == 0 {
            return Err(LpError::Param(
                "num_classes and samples_per_class must be positive".into(),
            ));
        }
        if data.ncols() != num_classes * samples_per_class {
            return Err(LpError::Shape(format!(
                "expected {} columns ({} classes x {} samples), got {}",
                num_classes * samples_per_class,
                num_classes,
                samples_per_class,
                data.ncols()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(LpError::Param("non-finite entry in representation set".into()));
        }
        Ok(Self {
            data,
            num_classes,
            samples_per_class,
        })
    }

    pub fn zeros(dim: usize, num_classes: usize, samples_per_class: usize) -> Self {
        Self {
            data: Array2::zeros((dim, num_classes * samples_per_class)),
            num_classes,
            samples_per_class,
        }
    }

    /// Replaces the payload, keeping the class layout.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        Self::new(data, self.num_classes, self.samples_per_class)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_columns(&self) -> usize {
        self.data.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples_per_class(&self) -> usize {
        self.samples_per_class
    }

    pub fn column_index(&self, c: usize, k: usize) -> Result<usize> {
        column_index(c, k, self.num_classes, self.samples_per_class)
    }

    /// 1-based class of column `j`.
    pub fn class_of(&self, j: usize) -> usize {
        j / self.samples_per_class + 1
    }

    /// 1-based sample-within-class of column `j`.
    pub fn sample_of(&self, j: usize) -> usize {
        j % self.samples_per_class + 1
    }

    pub fn column(&self, c: usize, k: usize) -> Result<ArrayView1<'_, f64>> {
        Ok(self.data.column(self.column_index(c, k)?))
    }
}

/// The goal choice for one node level.
#[derive(Debug, Clone)]
pub enum GoalSpec {
    /// No goal: `G_l = 0` everywhere it is read.
    NoGoal,
    /// A predefined, fixed goal matrix.
    FixedGoal(RepresentationSet),
    /// Goal recomputed from `Q_l = A_{l-1} U_{l-1}` by sparse discriminative
    /// projection.
    DynamicGoal {
        /// Discrimination weight.
        lambda0: f64,
        /// Sparsity weight.
        lambda1: f64,
        /// Jacobi passes of the projection solve.
        sweeps: usize,
    },
}

impl GoalSpec {
    pub fn is_no_goal(&self) -> bool {
        matches!(self, GoalSpec::NoGoal)
    }
}

/// Per-sample generalized-transform parameters: thresholds `t`, normalizers
/// `n`, correction `nu` and the shared sparsity weight `lambda1`.
///
/// With `t = 0`, `nu = 0`, `n = 1` the generalized transform collapses to
/// the plain sparsifying transform with threshold `lambda1`.
#[derive(Debug, Clone)]
pub struct GntParams {
    pub t: Array1<f64>,
    pub n: Array1<f64>,
    pub nu: Array1<f64>,
    pub lambda1: f64,
}

impl GntParams {
    pub fn new(t: Array1<f64>, n: Array1<f64>, nu: Array1<f64>, lambda1: f64) -> Result<Self> {
        if t.len() != n.len() || t.len() != nu.len() {
            return Err(LpError::Shape(format!(
                "gNT parameter lengths differ: t={}, n={}, nu={}",
                t.len(),
                n.len(),
                nu.len()
            )));
        }
        if lambda1 < 0.0 {
            return Err(LpError::Param(format!("lambda1 = {lambda1} must be >= 0")));
        }
        if t.iter().any(|&v| v < 0.0) {
            return Err(LpError::Param("threshold vector t must be >= 0".into()));
        }
        if n.iter().any(|&v| v <= 0.0) {
            return Err(LpError::Param("normalizer vector n must be > 0".into()));
        }
        Ok(Self { t, n, nu, lambda1 })
    }

    /// The sNT-equivalent parameters for threshold `tau`.
    pub fn snt_equivalent(dim: usize, tau: f64) -> Result<Self> {
        Self::new(Array1::zeros(dim), Array1::ones(dim), Array1::zeros(dim), tau)
    }

    /// Effective threshold `p = t + lambda1 * 1`.
    pub fn p(&self) -> Array1<f64> {
        &self.t + self.lambda1
    }
}

/// Regularization weights for one node level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelLambdas {
    /// Discrimination weight.
    pub l0: f64,
    /// Sparsity weight; doubles as the sNT threshold at test time.
    pub l1: f64,
    /// Frobenius (ridge) weight on the forward map.
    pub l2: f64,
    /// Orthogonality weight.
    pub l3: f64,
    /// Log-determinant (conditioning) weight.
    pub l4: f64,
    /// Forward/backward weight-similarity weight.
    pub l5: f64,
    /// Backward local-propagation weight.
    pub lb: f64,
    /// Forward local-propagation weight.
    pub lf: f64,
}

impl LevelLambdas {
    pub fn zeros() -> Self {
        Self {
            l0: 0.0,
            l1: 0.0,
            l2: 0.0,
            l3: 0.0,
            l4: 0.0,
            l5: 0.0,
            lb: 0.0,
            lf: 0.0,
        }
    }

    /// The quadratic shift `pi = l2 + l5 - l3`; computed, never stored.
    pub fn pi(&self) -> f64 {
        self.l2 + self.l5 - self.l3
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda0", self.l0),
            ("lambda1", self.l1),
            ("lambda2", self.l2),
            ("lambda3", self.l3),
            ("lambda4", self.l4),
            ("lambda5", self.l5),
            ("lambda_b", self.lb),
            ("lambda_f", self.lf),
        ] {
            if !(v >= 0.0) {
                return Err(LpError::Param(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Whether stage one waits for all updated weights or mixes current and
/// previous weights with a Bernoulli mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Synchronous,
    Asynchronous,
}

/// All training hyperparameters.
#[derive(Debug, Clone)]
pub struct HyperParams {
    /// Per level `1..=L`.
    pub lambdas: Vec<LevelLambdas>,
    /// Data-term scaling in the forward-weight estimate (stands in for
    /// the opaque product `kappa * eta`).
    pub gamma: f64,
    /// Step size of the batch online weight update, in `(0, 1]`.
    pub rho: f64,
    /// Fraction of training columns used per weight-estimation step.
    pub batch_fraction: f64,
    pub iterations: usize,
    pub mode: Mode,
    /// `P(psi(l) = +1)` in asynchronous mode.
    pub bernoulli_p: f64,
    pub knn_k: usize,
    pub seed: u64,
    pub tie_backward: bool,
    /// Alternating cycles per node subset per outer iteration.
    pub cycles: usize,
    /// Recompute dynamic goals in stage two (after the weight update)
    /// instead of stage one.
    pub goal_stage_two: bool,
    /// Abort with a diagnostic if an alternating cycle increases the local
    /// objective beyond `1e-6` relative. Meaningful with full batches.
    pub enforce_monotonic: bool,
    /// Run stage two with one worker per node level.
    pub parallel: bool,
}

impl HyperParams {
    /// Identical lambdas at every level; remaining knobs at their defaults.
    pub fn uniform(levels: usize, lambdas: LevelLambdas) -> Self {
        Self {
            lambdas: vec![lambdas; levels],
            gamma: 1.0,
            rho: 0.5,
            batch_fraction: 0.15,
            iterations: 120,
            mode: Mode::Synchronous,
            bernoulli_p: 0.5,
            knn_k: 3,
            seed: 0,
            tie_backward: true,
            cycles: 1,
            goal_stage_two: false,
            enforce_monotonic: false,
            parallel: true,
        }
    }

    pub fn level(&self, l: usize) -> &LevelLambdas {
        &self.lambdas[l - 1]
    }

    pub fn validate(&self, levels: usize) -> Result<()> {
        if self.lambdas.len() != levels {
            return Err(LpError::Param(format!(
                "expected {} per-level lambda sets, got {}",
                levels,
                self.lambdas.len()
            )));
        }
        for l in &self.lambdas {
            l.validate()?;
        }
        if !(self.rho >= 0.0 && self.rho <= 1.0) {
            return Err(LpError::Param(format!("rho = {} must be in [0, 1]", self.rho)));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(LpError::Param(format!(
                "batch_fraction = {} must be in (0, 1]",
                self.batch_fraction
            )));
        }
        if !(self.bernoulli_p > 0.0 && self.bernoulli_p <= 1.0) {
            return Err(LpError::Param(format!(
                "bernoulli_p = {} must be in (0, 1]",
                self.bernoulli_p
            )));
        }
        if self.gamma < 0.0 {
            return Err(LpError::Param(format!("gamma = {} must be >= 0", self.gamma)));
        }
        if self.knn_k == 0 || self.cycles == 0 {
            return Err(LpError::Param("knn_k and cycles must be positive".into()));
        }
        Ok(())
    }
}

/// Weights, threshold and goal of one node level.
#[derive(Debug, Clone)]
pub struct NodeParams {
    /// Node level `l` in `1..=L`.
    pub level: usize,
    /// `A_{l-1}`, shape `(M_l, M_{l-1})`.
    pub forward: Array2<f64>,
    /// `B_l`, shape `(M_l, M_{l+1})`; `None` when tied (resolves to
    /// `A_l^T`) or at the last level.
    pub backward: Option<Array2<f64>>,
    /// sNT threshold `tau_l`.
    pub threshold: f64,
    pub goal: GoalSpec,
}

/// A chain transform network.
#[derive(Debug, Clone)]
pub struct Network {
    input_dim: usize,
    nodes: Vec<NodeParams>,
    /// `B_0` (shape `(M_0, M_1)`) when untied; tied mode resolves `A_0^T`.
    b0: Option<Array2<f64>>,
    tie_backward: bool,
}

impl Network {
    pub fn num_levels(&self) -> usize {
        self.nodes.len()
    }

    /// `M_0..M_L`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(self.nodes.iter().map(|n| n.forward.nrows()));
        d
    }

    pub fn tie_backward(&self) -> bool {
        self.tie_backward
    }

    pub fn node(&self, level: usize) -> &NodeParams {
        &self.nodes[level - 1]
    }

    pub fn node_mut(&mut self, level: usize) -> &mut NodeParams {
        &mut self.nodes[level - 1]
    }

    /// `A_{l-1}` for `level` in `1..=L`.
    pub fn forward_weight(&self, level: usize) -> ArrayView2<'_, f64> {
        self.nodes[level - 1].forward.view()
    }

    pub fn set_forward_weight(&mut self, level: usize, a: Array2<f64>) {
        self.nodes[level - 1].forward = a;
    }

    /// Resolved `B_l` for `l` in `0..L`. Tied networks return a transposed
    /// view of `A_l`; nothing is materialized.
    pub fn backward_weight(&self, l: usize) -> Option<ArrayView2<'_, f64>> {
        if l >= self.num_levels() {
            return None;
        }
        if self.tie_backward {
            // A_l is stored on the level-(l+1) node.
            Some(self.nodes[l].forward.t())
        } else if l == 0 {
            self.b0.as_ref().map(|b| b.view())
        } else {
            self.nodes[l - 1].backward.as_ref().map(|b| b.view())
        }
    }

    pub fn set_backward_weight(&mut self, l: usize, b: Array2<f64>) -> Result<()> {
        if self.tie_backward {
            return Err(LpError::Param(
                "cannot set a backward weight on a tied network".into(),
            ));
        }
        if l == 0 {
            self.b0 = Some(b);
        } else {
            self.nodes[l - 1].backward = Some(b);
        }
        Ok(())
    }

    pub fn threshold(&self, level: usize) -> f64 {
        self.nodes[level - 1].threshold
    }

    pub fn b0(&self) -> Option<&Array2<f64>> {
        self.b0.as_ref()
    }

    pub(crate) fn from_parts(
        input_dim: usize,
        nodes: Vec<NodeParams>,
        b0: Option<Array2<f64>>,
        tie_backward: bool,
    ) -> Self {
        Self {
            input_dim,
            nodes,
            b0,
            tie_backward,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let normal = StandardNormal;
    Array2::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

/// Builds a chain network with i.i.d. standard Gaussian weights drawn from
/// `hyper.seed`. Draw order is `A_0..A_{L-1}` then, when untied,
/// `B_0..B_{L-1}`; equal inputs give bitwise-equal weights.
pub fn build_network(
    dims: &[usize],
    hyper: &HyperParams,
    goal_levels: &BTreeMap<usize, GoalSpec>,
) -> Result<Network> {
    if dims.len() < 2 {
        return Err(LpError::Topology(format!(
            "need at least 2 dimensions (input plus one node), got {}",
            dims.len()
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(LpError::Topology("zero dimension in network".into()));
    }
    let levels = dims.len() - 1;
    hyper.validate(levels)?;
    for (&l, _) in goal_levels {
        if l < 1 || l > levels {
            return Err(LpError::Topology(format!(
                "goal level {l} outside 1..={levels}"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut nodes = Vec::with_capacity(levels);
    for l in 1..=levels {
        let forward = gaussian(&mut rng, dims[l], dims[l - 1]);
        let goal = goal_levels.get(&l).cloned().unwrap_or(GoalSpec::NoGoal);
        if let GoalSpec::FixedGoal(g) = &goal {
            if g.dim() != dims[l] {
                return Err(LpError::Shape(format!(
                    "fixed goal at level {l} has dim {}, expected {}",
                    g.dim(),
                    dims[l]
                )));
            }
        }
        nodes.push(NodeParams {
            level: l,
            forward,
            backward: None,
            threshold: hyper.level(l).l1,
            goal,
        });
    }
    let mut b0 = None;
    if !hyper.tie_backward {
        // B_l has shape (M_l, M_{l+1}).
        for l in 0..levels {
            let b = gaussian(&mut rng, dims[l], dims[l + 1]);
            if l == 0 {
                b0 = Some(b);
            } else {
                nodes[l - 1].backward = Some(b);
            }
        }
    }
    Ok(Network::from_parts(dims[0], nodes, b0, hyper.tie_backward))
}
