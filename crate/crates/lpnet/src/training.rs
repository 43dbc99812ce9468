//! Two-stage synchronous/asynchronous training: forward propagation with
//! the available weights, parallel decoupled per-node solves, and batch
//! online weight smoothing.

use std::time::Instant;

use ndarray::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{LpError, Result};
use crate::goal::{aggregates_for_class, DiscriminationAggregates};
use crate::model::{GoalSpec, HyperParams, Mode, Network, RepresentationSet};
use crate::solvers::{
    bwe_objective, estimate_backward_weight, estimate_forward_weight, eval_objective_local,
    fwe_objective, BweInputs, FweInputs, LocalContext, ObjectiveBreakdown,
};
use crate::transforms::snt_apply_matrix;

/// The Bernoulli activity mask of one asynchronous iteration.
#[derive(Debug, Clone)]
pub struct AsyncMask {
    /// One entry per node level, `+1` active / `-1` hold.
    pub psi: Vec<i8>,
}

impl AsyncMask {
    pub fn all_active(levels: usize) -> Self {
        Self {
            psi: vec![1; levels],
        }
    }

    pub fn draw(levels: usize, p: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            psi: (0..levels)
                .map(|_| if rng.random_bool(p) { 1 } else { -1 })
                .collect(),
        }
    }

    pub fn active(&self, level: usize) -> bool {
        self.psi[level - 1] == 1
    }
}

/// Per-level record of one completed iteration.
#[derive(Debug, Clone)]
pub struct LevelMetrics {
    pub level: usize,
    pub objective: ObjectiveBreakdown,
    /// `0.5 ||U_l - G_l||_F^2` (with `G_l = 0` for goal-free levels).
    pub goal_error: f64,
    /// Mean per-sample empirical risk at `Y_l`.
    pub risk_mean: f64,
}

/// One completed outer iteration.
#[derive(Debug, Clone)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub elapsed_ms: u128,
    pub levels: Vec<LevelMetrics>,
}

/// Full training state: weights at steps `t` and `t-1`, current
/// representations and the metrics history.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub net: Network,
    pub prev: Network,
    /// `U_0..U_L`.
    pub u: Vec<RepresentationSet>,
    /// `Y_1..Y_L` (index `l - 1`).
    pub y: Vec<RepresentationSet>,
    /// `G_1..G_L` (index `l - 1`); `None` for goal-free levels.
    pub goals: Vec<Option<RepresentationSet>>,
    pub iteration: usize,
    pub metrics: Vec<IterationMetrics>,
}

impl TrainState {
    pub fn level_count(&self) -> usize {
        self.net.num_levels()
    }
}

struct LevelUpdate {
    level: usize,
    y: Array2<f64>,
    a: Array2<f64>,
    b: Option<Array2<f64>>,
    risk_mean: f64,
}

fn check_finite(state: &TrainState, iteration: usize) -> Result<()> {
    for l in 1..=state.level_count() {
        if !state.net.forward_weight(l).iter().all(|v| v.is_finite()) {
            return Err(LpError::Divergence {
                iteration,
                detail: format!("non-finite entry in A_{}", l - 1),
            });
        }
        if !state.u[l].data().iter().all(|v| v.is_finite())
            || !state.y[l - 1].data().iter().all(|v| v.is_finite())
        {
            return Err(LpError::Divergence {
                iteration,
                detail: format!("non-finite representation at level {l}"),
            });
        }
    }
    Ok(())
}

/// Stage one: forward propagation using the weight version selected by the
/// mask (`+1` reads step-`t` weights, `-1` step-`t-1`), plus dynamic goal
/// recomputation. Returns the per-level linear outputs `Q_l` alongside.
fn stage_one(
    state: &mut TrainState,
    data: &RepresentationSet,
    mask: &AsyncMask,
    hyper: &HyperParams,
) -> Result<()> {
    let levels = state.level_count();
    state.u[0] = data.clone();
    for l in 1..=levels {
        let a = if mask.active(l) {
            state.net.forward_weight(l)
        } else {
            state.prev.forward_weight(l)
        };
        let q = a.dot(state.u[l - 1].data());
        state.u[l] = data.with_data(snt_apply_matrix(q.view(), state.net.threshold(l))?)?;
        if !hyper.goal_stage_two {
            refresh_goal(state, l, &q, data)?;
        }
    }
    Ok(())
}

fn refresh_goal(
    state: &mut TrainState,
    l: usize,
    q: &Array2<f64>,
    data: &RepresentationSet,
) -> Result<()> {
    if let GoalSpec::DynamicGoal {
        lambda0,
        lambda1,
        sweeps,
    } = state.net.node(l).goal
    {
        let q_set = data.with_data(q.clone())?;
        state.goals[l - 1] = Some(crate::goal::solve_goal(&q_set, lambda0, lambda1, sweeps)?);
    } else if let GoalSpec::FixedGoal(g) = &state.net.node(l).goal {
        if state.goals[l - 1].is_none() {
            state.goals[l - 1] = Some(g.clone());
        }
    }
    Ok(())
}

fn goal_view<'a>(state: &'a TrainState, l: usize) -> Option<ArrayView2<'a, f64>> {
    if l == 0 || l > state.level_count() {
        return None;
    }
    state.goals[l - 1].as_ref().map(|g| g.view())
}

fn select_columns(m: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(1), idx)
}

/// Solves the decoupled subset of one node level against frozen stage-one
/// representations: representation step on all columns, then forward and
/// backward weight estimation on the batch columns.
fn solve_subset(
    state: &TrainState,
    hyper: &HyperParams,
    l: usize,
    batch: &[usize],
) -> Result<LevelUpdate> {
    let lam = hyper.level(l);
    let levels = state.level_count();
    let a = state.net.forward_weight(l);
    let b = state.net.backward_weight(l);
    let u_prev = state.u[l - 1].view();
    let u_next = (l < levels).then(|| state.u[l + 1].view());
    let g_prev = goal_view(state, l - 1);
    let g_next = goal_view(state, l + 1);

    // nu = lambda_f B (U_next - G_next) - lambda_b A (U_prev - G_prev).
    let ge_prev = match &g_prev {
        Some(g) => &u_prev - g,
        None => u_prev.to_owned(),
    };
    let mut nu = a.dot(&ge_prev).mapv(|v| -lam.lb * v);
    let mut z_fe: Option<Array2<f64>> = None;
    if let (Some(b), Some(u_next)) = (&b, &u_next) {
        let ge_next = match &g_next {
            Some(g) => u_next - g,
            None => u_next.to_owned(),
        };
        let prop = b.dot(&ge_next);
        nu += &prop.mapv(|v| lam.lf * v);
        z_fe = Some(prop);
    }

    // x = A U_prev + B U_next; the interior second branch folds an extra
    // 1/2 into the quadratic normalizer so the closed form minimizes both
    // fidelity halves at once.
    let q = a.dot(&u_prev);
    let mut x = q.clone();
    let mut n_base = 0.0;
    if let (Some(b), Some(u_next)) = (&b, &u_next) {
        x += &b.dot(u_next);
        n_base = 0.5;
    }

    // Discrimination at the goal-carrying node enters through frozen
    // other-class aggregates of the previous Y_l.
    let discriminates = matches!(
        state.net.node(l).goal,
        GoalSpec::DynamicGoal { lambda0, .. } if lambda0 > 0.0
    ) && state.u[0].num_classes() > 1;
    let m = x.nrows();
    let k = state.u[0].samples_per_class();
    let mut y_new = Array2::zeros(x.raw_dim());
    let mut risk = 0.0;
    let mut agg: Option<DiscriminationAggregates> = None;
    for (j, xcol) in x.columns().into_iter().enumerate() {
        let (tp, tm, n_extra): (
            Option<&Array1<f64>>,
            Option<&Array1<f64>>,
            Option<&Array1<f64>>,
        );
        let stored;
        if discriminates {
            if j % k == 0 || agg.is_none() {
                agg = Some(aggregates_for_class(&state.y[l - 1], j / k + 1));
            }
            stored = agg.as_ref().unwrap();
            tp = Some(&stored.d_plus);
            tm = Some(&stored.d_minus);
            n_extra = Some(&stored.n_agg);
        } else {
            tp = None;
            tm = None;
            n_extra = None;
        }
        let l0 = lam.l0;
        for i in 0..m {
            let n_i = n_base + l0 * n_extra.map_or(0.0, |v| v[i]);
            let divisor = 1.0 + 2.0 * n_i;
            let bval = xcol[i] - nu[[i, j]];
            let t_plus = lam.l1 + l0 * tp.map_or(0.0, |v| v[i]);
            let t_minus = lam.l1 + l0 * tm.map_or(0.0, |v| v[i]);
            let y = if bval - t_plus > 0.0 {
                (bval - t_plus) / divisor
            } else if bval + t_minus < 0.0 {
                (bval + t_minus) / divisor
            } else {
                0.0
            };
            y_new[[i, j]] = y;
            let t_risk = if y >= 0.0 { t_plus - lam.l1 } else { t_minus - lam.l1 };
            risk += t_risk * y.abs() + nu[[i, j]] * y + n_i * y * y;
        }
    }
    let risk_mean = risk / x.ncols() as f64;

    // Forward-weight estimation on the batch, with a descent guard on its
    // own objective.
    let u_prev_b = select_columns(u_prev, batch);
    let y_b = select_columns(y_new.view(), batch);
    let g_prev_b = g_prev.as_ref().map(|g| select_columns(g.view(), batch));
    let z_fe_b = z_fe.as_ref().map(|z| select_columns(z.view(), batch));
    let b_prev = state.net.backward_weight(l - 1);
    let fwe = FweInputs {
        u_prev: u_prev_b.view(),
        y: y_b.view(),
        g_prev: g_prev_b.as_ref().map(|g| g.view()),
        z_fe: z_fe_b.as_ref().map(|z| z.view()),
        b_prev: b_prev.as_ref().map(|b| b.reborrow()),
    };
    let a_new = match estimate_forward_weight(&fwe, lam, hyper.gamma) {
        Ok(cand) => {
            let at_cand = fwe_objective(&fwe, lam, hyper.gamma, cand.view())?;
            let at_cur = fwe_objective(&fwe, lam, hyper.gamma, a.view())?;
            if at_cand <= at_cur {
                cand
            } else {
                a.to_owned()
            }
        }
        // An indefinite surrogate kernel means no trustworthy candidate;
        // keeping the current weight preserves the descent guarantee.
        Err(LpError::Conditioning(_)) => a.to_owned(),
        Err(e) => return Err(e),
    };

    // Backward-weight estimation (exact); skipped for tied networks and at
    // the last level.
    let mut b_new = None;
    if !state.net.tie_backward() && l < levels {
        let u_next_b = select_columns(u_next.unwrap(), batch);
        let q_b = a_new.dot(&u_prev_b);
        let g_next_b = g_next.as_ref().map(|g| select_columns(g.view(), batch));
        let a_next = state.net.forward_weight(l + 1);
        let bwe = BweInputs {
            u_next: u_next_b.view(),
            y: y_b.view(),
            q: q_b.view(),
            a_next,
            g_next: g_next_b.as_ref().map(|g| g.view()),
        };
        let cand = estimate_backward_weight(&bwe, lam.l5, lam.lf)?;
        if hyper.enforce_monotonic {
            let cur = state.net.backward_weight(l).unwrap();
            let at_cand = bwe_objective(&bwe, lam.l5, lam.lf, cand.view())?;
            let at_cur = bwe_objective(&bwe, lam.l5, lam.lf, cur.view())?;
            if at_cand > at_cur + 1e-6 * (1.0 + at_cur.abs()) {
                return Err(LpError::Ascent {
                    iteration: state.iteration + 1,
                    level: l,
                    detail: format!("backward step rose from {at_cur} to {at_cand}"),
                });
            }
        }
        b_new = Some(cand);
    }

    Ok(LevelUpdate {
        level: l,
        y: y_new,
        a: a_new,
        b: b_new,
        risk_mean,
    })
}

fn local_context<'a>(state: &'a TrainState, l: usize) -> LocalContext<'a> {
    let levels = state.level_count();
    LocalContext {
        y: state.y[l - 1].view(),
        u_prev: state.u[l - 1].view(),
        u_next: (l < levels).then(|| state.u[l + 1].view()),
        g_prev: goal_view(state, l - 1),
        g_next: goal_view(state, l + 1),
        a: state.net.forward_weight(l),
        b: state.net.backward_weight(l),
        b_prev: state.net.backward_weight(l - 1),
        a_next: (l < levels).then(|| state.net.forward_weight(l + 1)),
        discrimination: match state.net.node(l).goal {
            GoalSpec::DynamicGoal { lambda0, .. } if lambda0 > 0.0 => Some((
                state.u[0].num_classes(),
                state.u[0].samples_per_class(),
            )),
            _ => None,
        },
    }
}

fn level_metrics(state: &TrainState, hyper: &HyperParams, risks: &[f64]) -> Result<Vec<LevelMetrics>> {
    let mut out = Vec::with_capacity(state.level_count());
    for l in 1..=state.level_count() {
        let objective = eval_objective_local(&local_context(state, l), hyper.level(l))?;
        let goal_error = match &state.goals[l - 1] {
            Some(g) => 0.5
                * (state.u[l].data() - g.data())
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>(),
            None => 0.5 * state.u[l].data().iter().map(|v| v * v).sum::<f64>(),
        };
        out.push(LevelMetrics {
            level: l,
            objective,
            goal_error,
            risk_mean: risks[l - 1],
        });
    }
    Ok(out)
}

/// Runs `hyper.iterations` outer iterations of the two-stage strategy and
/// returns the final state with the full metrics history. `observer` is
/// called after every completed iteration.
pub fn train_with(
    net: Network,
    data: &RepresentationSet,
    hyper: &HyperParams,
    mut observer: impl FnMut(&TrainState) -> Result<()>,
) -> Result<TrainState> {
    let levels = net.num_levels();
    hyper.validate(levels)?;
    if data.dim() != net.dims()[0] {
        return Err(LpError::Topology(format!(
            "data has {} rows, network expects {}",
            data.dim(),
            net.dims()[0]
        )));
    }

    // Independent streams keep the mask and batch draws decoupled, so the
    // synchronous and asynchronous-at-p-one trajectories coincide bitwise.
    let mut mask_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    mask_rng.set_stream(1);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    batch_rng.set_stream(2);

    let n_cols = data.num_columns();
    let batch_size = ((hyper.batch_fraction * n_cols as f64).round() as usize).clamp(1, n_cols);

    let mut state = TrainState {
        prev: net.clone(),
        net,
        u: vec![data.clone(); levels + 1],
        y: vec![data.clone(); levels],
        goals: vec![None; levels],
        iteration: 0,
        metrics: Vec::new(),
    };
    // Shape the initial representations with a synchronous stage one.
    {
        let mask = AsyncMask::all_active(levels);
        stage_one(&mut state, data, &mask, hyper)?;
        for l in 1..=levels {
            state.y[l - 1] = state.u[l].clone();
        }
    }

    for iter in 0..hyper.iterations {
        let start = Instant::now();
        let mask = match hyper.mode {
            Mode::Synchronous => AsyncMask::all_active(levels),
            Mode::Asynchronous => AsyncMask::draw(levels, hyper.bernoulli_p, &mut mask_rng),
        };

        stage_one(&mut state, data, &mask, hyper)?;

        let mut batch: Vec<usize> =
            rand::seq::index::sample(&mut batch_rng, n_cols, batch_size).into_vec();
        batch.sort_unstable();

        let active: Vec<usize> = (1..=levels).filter(|&l| mask.active(l)).collect();
        let mut risks = vec![0.0; levels];

        let before: Vec<Option<ObjectiveBreakdown>> = if hyper.enforce_monotonic {
            (1..=levels)
                .map(|l| {
                    if mask.active(l) {
                        eval_objective_local(&local_context(&state, l), hyper.level(l)).map(Some)
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<_>>()?
        } else {
            vec![None; levels]
        };

        let iter_start = state.net.clone();
        for _cycle in 0..hyper.cycles {
            let updates: Vec<LevelUpdate> = if hyper.parallel {
                active
                    .par_iter()
                    .map(|&l| solve_subset(&state, hyper, l, &batch))
                    .collect::<Result<Vec<_>>>()?
            } else {
                active
                    .iter()
                    .map(|&l| solve_subset(&state, hyper, l, &batch))
                    .collect::<Result<Vec<_>>>()?
            };
            let old = state.net.clone();
            for up in updates {
                let l = up.level;
                state.y[l - 1] = data.with_data(up.y)?;
                risks[l - 1] = up.risk_mean;
                // Batch online smoothing A <- A_sol - rho (A_sol - A_old).
                let a_old = old.forward_weight(l);
                let a = &up.a - &(&up.a - &a_old).mapv(|v| hyper.rho * v);
                state.net.set_forward_weight(l, a);
                if let Some(b_sol) = up.b {
                    let b_old = old.backward_weight(l).unwrap().to_owned();
                    let b = &b_sol - &(&b_sol - &b_old).mapv(|v| hyper.rho * v);
                    state.net.set_backward_weight(l, b)?;
                }
            }
        }
        state.prev = iter_start;

        if hyper.goal_stage_two {
            for l in 1..=levels {
                let q = state.net.forward_weight(l).dot(state.u[l - 1].data());
                refresh_goal(&mut state, l, &q, data)?;
            }
        }

        if hyper.enforce_monotonic {
            for &l in &active {
                let after = eval_objective_local(&local_context(&state, l), hyper.level(l))?;
                let base = before[l - 1].as_ref().unwrap();
                if after.total > base.total + 1e-6 * (1.0 + base.total.abs()) {
                    return Err(LpError::Ascent {
                        iteration: iter + 1,
                        level: l,
                        detail: format!(
                            "local objective rose from {} to {}",
                            base.total, after.total
                        ),
                    });
                }
            }
        }

        state.iteration = iter + 1;
        check_finite(&state, iter + 1)?;
        let levels_metrics = level_metrics(&state, hyper, &risks)?;
        state.metrics.push(IterationMetrics {
            iteration: iter + 1,
            elapsed_ms: start.elapsed().as_millis(),
            levels: levels_metrics,
        });
        observer(&state)?;
    }
    Ok(state)
}

/// [`train_with`] without an observer.
pub fn train(net: Network, data: &RepresentationSet, hyper: &HyperParams) -> Result<TrainState> {
    train_with(net, data, hyper, |_| Ok(()))
}

/// Propagates `G_{l_G}` forward to the last level with the learned sNTs.
pub fn propagate_goal(state: &TrainState, l_g: usize) -> Result<Array2<f64>> {
    let levels = state.level_count();
    let g = state.goals[l_g - 1]
        .as_ref()
        .ok_or_else(|| LpError::Context(format!("no goal stored at level {l_g}")))?;
    let mut d = g.data().clone();
    for l in l_g + 1..=levels {
        let q = state.net.forward_weight(l).dot(&d);
        d = snt_apply_matrix(q.view(), state.net.threshold(l))?;
    }
    Ok(d)
}

/// Per-iteration report of the Theorem-1 experiment.
#[derive(Debug, Clone)]
pub struct Theorem1Report {
    /// `G(D_L, U_L) = 0.5 ||D_L - U_L||_F^2` per iteration.
    pub goal_values: Vec<f64>,
    /// First 1-based iteration with value below the requested epsilon.
    pub first_below: Option<usize>,
    /// True when `lambda_b` or `lambda_f` is zero at the goal level (the
    /// theorem's hypothesis is violated).
    pub hypothesis_violated: bool,
    pub final_state: TrainState,
}

/// Trains with a goal only at level `l_g` and tracks how well the forward
/// propagation of that goal matches the last-level representations.
pub fn theorem1_experiment(
    net: Network,
    data: &RepresentationSet,
    hyper: &HyperParams,
    l_g: usize,
    epsilon: f64,
) -> Result<Theorem1Report> {
    let levels = net.num_levels();
    if l_g < 1 || l_g > levels {
        return Err(LpError::Topology(format!(
            "goal level {l_g} outside 1..={levels}"
        )));
    }
    if net.node(l_g).goal.is_no_goal() {
        return Err(LpError::Context(format!(
            "level {l_g} carries no goal specification"
        )));
    }
    for l in 1..=levels {
        if l != l_g && !net.node(l).goal.is_no_goal() {
            return Err(LpError::Context(
                "the experiment requires a goal at exactly one level".into(),
            ));
        }
    }
    let lam = hyper.level(l_g);
    let hypothesis_violated = lam.lb == 0.0 || lam.lf == 0.0;

    let mut goal_values = Vec::with_capacity(hyper.iterations);
    let final_state = train_with(net, data, hyper, |state| {
        let d = propagate_goal(state, l_g)?;
        let u_l = state.u[state.level_count()].data();
        let v = 0.5 * (&d - u_l).iter().map(|x| x * x).sum::<f64>();
        goal_values.push(v);
        Ok(())
    })?;
    let first_below = goal_values
        .iter()
        .position(|&v| v <= epsilon)
        .map(|i| i + 1);
    Ok(Theorem1Report {
        goal_values,
        first_below,
        hypothesis_violated,
        final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_gaussians;
    use crate::model::{build_network, LevelLambdas};
    use std::collections::BTreeMap;

    fn toy_hyper(levels: usize) -> HyperParams {
        let lambdas = LevelLambdas {
            l1: 0.2,
            l2: 0.5,
            l5: 0.5,
            lb: 1.0,
            lf: 1.0,
            ..LevelLambdas::zeros()
        };
        let mut h = HyperParams::uniform(levels, lambdas);
        h.iterations = 4;
        h.batch_fraction = 0.5;
        h.rho = 0.3;
        h
    }

    fn toy_goals() -> BTreeMap<usize, GoalSpec> {
        let mut goals = BTreeMap::new();
        goals.insert(
            2,
            GoalSpec::DynamicGoal {
                lambda0: 0.1,
                lambda1: 0.2,
                sweeps: 2,
            },
        );
        goals
    }

    fn weights_equal(a: &Network, b: &Network) -> bool {
        (1..=a.num_levels()).all(|l| {
            a.forward_weight(l)
                .iter()
                .zip(b.forward_weight(l).iter())
                .all(|(x, y)| x.to_bits() == y.to_bits())
        })
    }

    #[test]
    fn metrics_length_equals_iterations_and_is_deterministic() {
        let hyper = toy_hyper(2);
        let data = synthetic_gaussians(6, 2, 5, 4.0, 0.5, 3).unwrap();
        let net = build_network(&[6, 6, 6], &hyper, &toy_goals()).unwrap();
        let s1 = train(net.clone(), &data, &hyper).unwrap();
        assert_eq!(s1.metrics.len(), hyper.iterations);
        assert_eq!(s1.iteration, hyper.iterations);
        let s2 = train(net, &data, &hyper).unwrap();
        assert!(weights_equal(&s1.net, &s2.net));
    }

    #[test]
    fn synchronous_equals_asynchronous_at_p_one() {
        let mut sync = toy_hyper(3);
        sync.mode = Mode::Synchronous;
        let mut asyn = sync.clone();
        asyn.mode = Mode::Asynchronous;
        asyn.bernoulli_p = 1.0;
        let data = synthetic_gaussians(5, 2, 4, 4.0, 0.5, 9).unwrap();
        let net = build_network(&[5, 5, 5, 5], &sync, &toy_goals()).unwrap();
        let a = train(net.clone(), &data, &sync).unwrap();
        let b = train(net, &data, &asyn).unwrap();
        assert!(weights_equal(&a.net, &b.net));
    }

    #[test]
    fn parallel_equals_serial() {
        let mut par = toy_hyper(3);
        par.mode = Mode::Asynchronous;
        par.parallel = true;
        let mut ser = par.clone();
        ser.parallel = false;
        let data = synthetic_gaussians(5, 2, 4, 4.0, 0.5, 11).unwrap();
        let net = build_network(&[5, 5, 5, 5], &par, &toy_goals()).unwrap();
        let a = train(net.clone(), &data, &par).unwrap();
        let b = train(net, &data, &ser).unwrap();
        assert!(weights_equal(&a.net, &b.net));
        for (ma, mb) in a.metrics.iter().zip(&b.metrics) {
            for (la, lb) in ma.levels.iter().zip(&mb.levels) {
                assert_eq!(la.objective.total.to_bits(), lb.objective.total.to_bits());
            }
        }
    }

    #[test]
    fn untied_backward_weights_are_updated() {
        let mut hyper = toy_hyper(2);
        hyper.tie_backward = false;
        let data = synthetic_gaussians(4, 2, 4, 4.0, 0.5, 5).unwrap();
        let net = build_network(&[4, 4, 4], &hyper, &BTreeMap::new()).unwrap();
        let b_init = net.backward_weight(1).unwrap().to_owned();
        let state = train(net, &data, &hyper).unwrap();
        let b_final = state.net.backward_weight(1).unwrap();
        assert!(b_init
            .iter()
            .zip(b_final.iter())
            .any(|(x, y)| (x - y).abs() > 1e-12));
    }

    #[test]
    fn theorem1_rejects_missing_or_multiple_goals() {
        let hyper = toy_hyper(2);
        let data = synthetic_gaussians(4, 2, 3, 4.0, 0.5, 7).unwrap();
        let net = build_network(&[4, 4, 4], &hyper, &BTreeMap::new()).unwrap();
        assert!(theorem1_experiment(net, &data, &hyper, 1, 1e-3).is_err());

        let mut goals = toy_goals();
        goals.insert(
            1,
            GoalSpec::DynamicGoal {
                lambda0: 0.0,
                lambda1: 0.1,
                sweeps: 1,
            },
        );
        let net = build_network(&[4, 4, 4], &hyper, &goals).unwrap();
        assert!(theorem1_experiment(net, &data, &hyper, 2, 1e-3).is_err());
    }

    #[test]
    fn theorem1_reports_goal_values_per_iteration() {
        let hyper = toy_hyper(2);
        let data = synthetic_gaussians(4, 2, 3, 4.0, 0.5, 7).unwrap();
        let net = build_network(&[4, 4, 4], &hyper, &toy_goals()).unwrap();
        let report = theorem1_experiment(net, &data, &hyper, 2, 1e9).unwrap();
        assert_eq!(report.goal_values.len(), hyper.iterations);
        assert_eq!(report.first_below, Some(1));
        assert!(!report.hypothesis_violated);
    }
}
