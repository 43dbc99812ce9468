//! Goal estimation (problem P_G), error vectors, discrimination
//! aggregates and the local-propagation quantities.

use ndarray::prelude::*;

use crate::error::{LpError, Result};
use crate::model::RepresentationSet;
use crate::transforms::snt_apply_matrix;

/// Goal and transform error matrices of one node level.
#[derive(Debug, Clone)]
pub struct ErrorPair {
    /// `U_l - G_l`; equals `U_l` when there is no goal.
    pub goal_error: Array2<f64>,
    /// `Y_l - Q_l` with `Q_l = A_{l-1} U_{l-1}`.
    pub transform_error: Array2<f64>,
}

/// Per-coordinate sums over other-class columns used by the goal solve:
/// positive parts, negative parts and squares.
#[derive(Debug, Clone)]
pub struct DiscriminationAggregates {
    pub d_plus: Array1<f64>,
    pub d_minus: Array1<f64>,
    pub n_agg: Array1<f64>,
}

fn check_same_shape(name: &str, a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(LpError::Shape(format!(
            "{name}: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `(U_l - G_l, Y_l - Q_l)`. A `None` goal reads as `G_l = 0`.
pub fn compute_errors(
    u: ArrayView2<'_, f64>,
    g: Option<ArrayView2<'_, f64>>,
    y: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
) -> Result<ErrorPair> {
    check_same_shape("Y vs Q", &y, &q)?;
    let goal_error = match g {
        Some(g) => {
            check_same_shape("U vs G", &u, &g)?;
            &u - &g
        }
        None => u.to_owned(),
    };
    Ok(ErrorPair {
        goal_error,
        transform_error: &y - &q,
    })
}

fn trace_inner(x: &ArrayView2<'_, f64>, y: &Array2<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

/// `R_3 = lambda_f * F_f + lambda_b * F_b` with
/// `F_b = Tr(te' A ge_prev)` and `F_f = Tr(te' B ge_next)`.
/// A missing neighbor (`None`) contributes zero.
pub fn local_propagation(
    transform_error: ArrayView2<'_, f64>,
    backward_pair: Option<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)>,
    forward_pair: Option<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)>,
    lambda_b: f64,
    lambda_f: f64,
) -> Result<(f64, f64, f64)> {
    let f_b = match backward_pair {
        Some((a, ge_prev)) => {
            let prop = a.dot(&ge_prev);
            check_same_shape("te vs A*ge_prev", &transform_error, &prop.view())?;
            trace_inner(&transform_error, &prop)
        }
        None => 0.0,
    };
    let f_f = match forward_pair {
        Some((b, ge_next)) => {
            let prop = b.dot(&ge_next);
            check_same_shape("te vs B*ge_next", &transform_error, &prop.view())?;
            trace_inner(&transform_error, &prop)
        }
        None => 0.0,
    };
    Ok((lambda_f * f_f + lambda_b * f_b, f_b, f_f))
}

/// Diffusion term `lambda_f * B * ge_next + lambda_b * A * ge_prev`.
/// Its trace inner product with the transform error equals `R_3` exactly.
pub fn diffusion_term(
    shape: (usize, usize),
    backward_pair: Option<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)>,
    forward_pair: Option<(ArrayView2<'_, f64>, ArrayView2<'_, f64>)>,
    lambda_b: f64,
    lambda_f: f64,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(shape);
    if let Some((a, ge_prev)) = backward_pair {
        let prop = a.dot(&ge_prev);
        check_same_shape("diffusion vs A*ge_prev", &out.view(), &prop.view())?;
        out.scaled_add(lambda_b, &prop);
    }
    if let Some((b, ge_next)) = forward_pair {
        let prop = b.dot(&ge_next);
        check_same_shape("diffusion vs B*ge_next", &out.view(), &prop.view())?;
        out.scaled_add(lambda_f, &prop);
    }
    Ok(out)
}

/// The three entangled quantities of one node: model error
/// `0.5 ||Q - Y||^2`, flow change strength `||diffusion||^2` and goal
/// error value `0.5 ||G - U||^2`.
pub fn entanglement_diagnostics(
    q: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    u: ArrayView2<'_, f64>,
    g: Option<ArrayView2<'_, f64>>,
    diffusion: ArrayView2<'_, f64>,
) -> Result<(f64, f64, f64)> {
    check_same_shape("Q vs Y", &q, &y)?;
    let model_error = 0.5 * (&q - &y).iter().map(|v| v * v).sum::<f64>();
    let flow = diffusion.iter().map(|v| v * v).sum::<f64>();
    let goal_value = match g {
        Some(g) => {
            check_same_shape("U vs G", &u, &g)?;
            0.5 * (&g - &u).iter().map(|v| v * v).sum::<f64>()
        }
        None => 0.5 * u.iter().map(|v| v * v).sum::<f64>(),
    };
    Ok((model_error, flow, goal_value))
}

/// Cross-class discrimination penalty
/// `D(Y) = sum over different-class column pairs of
/// ||y+ . w+||_1 + ||y- . w-||_1 + ||y . w||_2^2`,
/// evaluated through per-class coordinate sums.
pub fn discrimination_penalty(set: &RepresentationSet) -> f64 {
    let m = set.dim();
    let c = set.num_classes();
    let k = set.samples_per_class();
    let data = set.data();

    // Per-class sums of positive parts, negative parts and squares.
    let mut sp = Array2::<f64>::zeros((c, m));
    let mut sm = Array2::<f64>::zeros((c, m));
    let mut sq = Array2::<f64>::zeros((c, m));
    for (j, col) in data.columns().into_iter().enumerate() {
        let cls = j / k;
        for i in 0..m {
            let v = col[i];
            sp[[cls, i]] += v.max(0.0);
            sm[[cls, i]] += (-v).max(0.0);
            sq[[cls, i]] += v * v;
        }
    }
    let mut total = 0.0;
    for i in 0..m {
        let (mut tp, mut tm, mut tq) = (0.0, 0.0, 0.0);
        for cls in 0..c {
            tp += sp[[cls, i]];
            tm += sm[[cls, i]];
            tq += sq[[cls, i]];
        }
        let mut same = 0.0;
        for cls in 0..c {
            same += sp[[cls, i]] * sp[[cls, i]]
                + sm[[cls, i]] * sm[[cls, i]]
                + sq[[cls, i]] * sq[[cls, i]];
        }
        total += tp * tp + tm * tm + tq * tq - same;
    }
    total
}

/// Aggregates over the other-class columns of `set` for one class
/// (1-based).
pub fn aggregates_for_class(set: &RepresentationSet, class: usize) -> DiscriminationAggregates {
    let m = set.dim();
    let k = set.samples_per_class();
    let data = set.data();
    let mut d_plus = Array1::zeros(m);
    let mut d_minus = Array1::zeros(m);
    let mut n_agg = Array1::zeros(m);
    for (j, col) in data.columns().into_iter().enumerate() {
        if j / k + 1 == class {
            continue;
        }
        for i in 0..m {
            let v = col[i];
            d_plus[i] += v.max(0.0);
            d_minus[i] += (-v).max(0.0);
            n_agg[i] += v * v;
        }
    }
    DiscriminationAggregates {
        d_plus,
        d_minus,
        n_agg,
    }
}

/// Exact minimizer of
/// `0.5 (x - y)^2 + (l1 + tp) y` for `y > 0`,
/// `0.5 (x - y)^2 - (l1 + tm) y` for `y < 0`,
/// plus `d/2 - 1/2` times `y^2` folded into the divisor `d = 1 + 2 n`.
fn asymmetric_shrink(x: f64, t_plus: f64, t_minus: f64, lambda1: f64, divisor: f64) -> f64 {
    let up = x - lambda1 - t_plus;
    if up > 0.0 {
        return up / divisor;
    }
    let down = x + lambda1 + t_minus;
    if down < 0.0 {
        return down / divisor;
    }
    0.0
}

/// Solves problem P_G to block-coordinate stationarity:
/// `G = argmin 0.5 ||Q - G||_F^2 + lambda1 sum ||g||_1 + lambda0 D(G)`
/// by Jacobi sweeps, each applying the per-column closed form against the
/// previous pass's other-class aggregates. A single class with
/// `lambda0 > 0` degenerates: the discrimination term is skipped with a
/// warning on stderr.
pub fn solve_goal(
    q: &RepresentationSet,
    lambda0: f64,
    lambda1: f64,
    sweeps: usize,
) -> Result<RepresentationSet> {
    if lambda0 < 0.0 || lambda1 < 0.0 {
        return Err(LpError::Param(
            "goal weights lambda0, lambda1 must be >= 0".into(),
        ));
    }
    let lambda0 = if q.num_classes() < 2 && lambda0 > 0.0 {
        eprintln!("warning: single-class goal solve, discrimination term skipped");
        0.0
    } else {
        lambda0
    };

    // lambda0 = 0 decouples the columns; one pass of plain soft
    // thresholding is exact.
    let mut g = q.with_data(snt_apply_matrix(q.view(), lambda1)?)?;
    if lambda0 == 0.0 {
        return Ok(g);
    }

    for _ in 0..sweeps {
        g = goal_sweep(q, &g, lambda0, lambda1)?;
    }
    Ok(g)
}

/// One Jacobi pass of the goal solve: every column is replaced by the
/// exact minimizer of its partial objective with the other-class
/// aggregates of `prev` frozen.
pub fn goal_sweep(
    q: &RepresentationSet,
    prev: &RepresentationSet,
    lambda0: f64,
    lambda1: f64,
) -> Result<RepresentationSet> {
    let m = q.dim();
    let k = q.samples_per_class();
    let mut next = Array2::zeros(q.data().raw_dim());
    for class in 1..=q.num_classes() {
        let agg = aggregates_for_class(prev, class);
        for kk in 0..k {
            let j = (class - 1) * k + kk;
            let x = q.data().column(j);
            for i in 0..m {
                next[[i, j]] = asymmetric_shrink(
                    x[i],
                    lambda0 * agg.d_plus[i],
                    lambda0 * agg.d_minus[i],
                    lambda1,
                    1.0 + 2.0 * lambda0 * agg.n_agg[i],
                );
            }
        }
    }
    q.with_data(next)
}

/// The goal objective with the discrimination interaction frozen at the
/// aggregates of `agg_source` (one-sided pair counting).
pub fn frozen_goal_objective(
    q: &RepresentationSet,
    g: &RepresentationSet,
    agg_source: &RepresentationSet,
    lambda0: f64,
    lambda1: f64,
) -> f64 {
    let mut total = 0.0;
    let k = q.samples_per_class();
    for class in 1..=q.num_classes() {
        let agg = aggregates_for_class(agg_source, class);
        for kk in 0..k {
            let j = (class - 1) * k + kk;
            let x = q.data().column(j);
            let y = g.data().column(j);
            for i in 0..q.dim() {
                let d = x[i] - y[i];
                total += 0.5 * d * d
                    + lambda1 * y[i].abs()
                    + lambda0
                        * (agg.d_plus[i] * y[i].max(0.0)
                            + agg.d_minus[i] * (-y[i]).max(0.0)
                            + agg.n_agg[i] * y[i] * y[i]);
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| {
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
        })
    }

    #[test]
    fn compute_errors_basic() {
        let u = array![[1.0], [0.0]];
        let g = array![[0.0], [1.0]];
        let pair = compute_errors(u.view(), Some(g.view()), u.view(), u.view()).unwrap();
        assert_eq!(pair.goal_error, array![[1.0], [-1.0]]);
        assert_eq!(pair.transform_error, array![[0.0], [0.0]]);

        let no_goal = compute_errors(u.view(), None, g.view(), u.view()).unwrap();
        assert_eq!(no_goal.goal_error, u);
        assert_eq!(no_goal.transform_error, &g - &u);
    }

    #[test]
    fn local_propagation_zero_cases() {
        let te = array![[1.0, 2.0], [3.0, 4.0]];
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        let zero = Array2::zeros((2, 2));
        let (r3, fb, ff) = local_propagation(
            te.view(),
            Some((a.view(), zero.view())),
            Some((a.view(), zero.view())),
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!((r3, fb, ff), (0.0, 0.0, 0.0));

        let ge = array![[1.0, 2.0], [3.0, 4.0]];
        let zte = Array2::zeros((2, 2));
        let (r3, _, _) = local_propagation(
            zte.view(),
            Some((a.view(), ge.view())),
            None,
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(r3, 0.0);
    }

    #[test]
    fn local_propagation_orthogonal_columns() {
        let te = array![[1.0], [0.0]];
        // A * ge = [0, 1]'.
        let a = Array2::eye(2);
        let ge = array![[0.0], [1.0]];
        let (r3, fb, _) =
            local_propagation(te.view(), Some((a.view(), ge.view())), None, 1.0, 0.0).unwrap();
        assert_eq!(fb, 0.0);
        assert_eq!(r3, 0.0);
    }

    #[test]
    fn lemma1_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (m, mp, mn, cols) = (
                rng.random_range(1..=16),
                rng.random_range(1..=16),
                rng.random_range(1..=16),
                rng.random_range(1..=6),
            );
            let te = randn(&mut rng, m, cols);
            let a = randn(&mut rng, m, mp);
            let gep = randn(&mut rng, mp, cols);
            let b = randn(&mut rng, m, mn);
            let gen = randn(&mut rng, mn, cols);
            let (lb, lf) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
            let (r3, _, _) = local_propagation(
                te.view(),
                Some((a.view(), gep.view())),
                Some((b.view(), gen.view())),
                lb,
                lf,
            )
            .unwrap();
            let diff = diffusion_term(
                (m, cols),
                Some((a.view(), gep.view())),
                Some((b.view(), gen.view())),
                lb,
                lf,
            )
            .unwrap();
            let via_diffusion = te.iter().zip(diff.iter()).map(|(x, y)| x * y).sum::<f64>();
            assert!((r3 - via_diffusion).abs() <= 1e-10 * (1.0 + r3.abs()));
        }
    }

    #[test]
    fn diffusion_reductions() {
        let a = array![[2.0, 0.0], [0.0, 3.0]];
        let ge = array![[1.0], [1.0]];
        let d = diffusion_term((2, 1), Some((a.view(), ge.view())), None, 1.0, 0.5).unwrap();
        assert_eq!(d, array![[2.0], [3.0]]);

        let zero = diffusion_term((2, 1), None, None, 1.0, 1.0).unwrap();
        assert_eq!(zero, Array2::zeros((2, 1)));

        let b = array![[1.0, 1.0], [0.0, 1.0]];
        let gen = array![[2.0], [4.0]];
        let d = diffusion_term((2, 1), None, Some((b.view(), gen.view())), 0.0, 0.5).unwrap();
        assert_eq!(d, array![[3.0], [2.0]]);
    }

    #[test]
    fn entanglement_zero_and_nonnegative() {
        let z = Array2::zeros((3, 2));
        let (a, b, c) =
            entanglement_diagnostics(z.view(), z.view(), z.view(), None, z.view()).unwrap();
        assert_eq!((a, b, c), (0.0, 0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = randn(&mut rng, 3, 2);
        let y = randn(&mut rng, 3, 2);
        let u = randn(&mut rng, 3, 2);
        let g = randn(&mut rng, 3, 2);
        let d = randn(&mut rng, 3, 2);
        let (me, fl, ge) =
            entanglement_diagnostics(q.view(), y.view(), u.view(), Some(g.view()), d.view())
                .unwrap();
        assert!(me >= 0.0 && fl >= 0.0 && ge >= 0.0);

        let (me, _, ge) =
            entanglement_diagnostics(q.view(), q.view(), u.view(), Some(u.view()), d.view())
                .unwrap();
        assert_eq!((me, ge), (0.0, 0.0));
    }

    fn naive_discrimination(set: &RepresentationSet) -> f64 {
        let data = set.data();
        let k = set.samples_per_class();
        let mut total = 0.0;
        for j1 in 0..set.num_columns() {
            for j2 in 0..set.num_columns() {
                if j1 / k == j2 / k {
                    continue;
                }
                let (a, b) = (data.column(j1), data.column(j2));
                for i in 0..set.dim() {
                    total += a[i].max(0.0) * b[i].max(0.0)
                        + (-a[i]).max(0.0) * (-b[i]).max(0.0)
                        + a[i] * a[i] * b[i] * b[i];
                }
            }
        }
        total
    }

    #[test]
    fn discrimination_matches_naive_pairwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let set =
                RepresentationSet::new(randn(&mut rng, 5, 12), 3, 4).unwrap();
            let fast = discrimination_penalty(&set);
            let naive = naive_discrimination(&set);
            assert_abs_diff_eq!(fast, naive, epsilon = 1e-9 * (1.0 + naive));
        }
    }

    #[test]
    fn solve_goal_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = RepresentationSet::new(randn(&mut rng, 4, 6), 2, 3).unwrap();
        let g = solve_goal(&q, 0.0, 0.0, 3).unwrap();
        assert_eq!(g.data(), q.data());

        let g = solve_goal(&q, 0.0, 0.4, 3).unwrap();
        let expect = snt_apply_matrix(q.view(), 0.4).unwrap();
        assert_eq!(g.data(), &expect);
    }

    #[test]
    fn solve_goal_reduces_cross_class_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let q = RepresentationSet::new(randn(&mut rng, 4, 2), 2, 1).unwrap();
            let g = solve_goal(&q, 0.5, 0.1, 3).unwrap();
            let overlap = |s: &RepresentationSet| {
                let d = s.data();
                (0..4)
                    .filter(|&i| d[[i, 0]] != 0.0 && d[[i, 1]] != 0.0)
                    .count()
            };
            assert!(overlap(&g) <= overlap(&q));
            assert!(discrimination_penalty(&g) <= discrimination_penalty(&q) + 1e-12);
        }
    }

    #[test]
    fn goal_sweep_descends_with_frozen_aggregates() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let q = RepresentationSet::new(randn(&mut rng, 6, 9), 3, 3).unwrap();
            let (l0, l1) = (0.3, 0.1);
            let mut g = q.with_data(snt_apply_matrix(q.view(), l1).unwrap()).unwrap();
            for _ in 0..5 {
                let next = goal_sweep(&q, &g, l0, l1).unwrap();
                let before = frozen_goal_objective(&q, &g, &g, l0, l1);
                let after = frozen_goal_objective(&q, &next, &g, l0, l1);
                assert!(after <= before + 1e-12 * (1.0 + before.abs()));
                g = next;
            }
        }
    }

    #[test]
    fn solve_goal_single_class_skips_discrimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = RepresentationSet::new(randn(&mut rng, 4, 3), 1, 3).unwrap();
        let g = solve_goal(&q, 0.7, 0.2, 3).unwrap();
        let expect = snt_apply_matrix(q.view(), 0.2).unwrap();
        assert_eq!(g.data(), &expect);
    }
}
