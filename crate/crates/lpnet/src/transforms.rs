//! Sparsifying and generalized nonlinear transforms, forward/backward
//! passes and the per-sample empirical risk.

use ndarray::prelude::*;

use crate::error::{LpError, Result};
use crate::model::{GntParams, Network, RepresentationSet};

/// A transformed vector together with the indices of its nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformOutput {
    pub values: Array1<f64>,
    pub support: Vec<usize>,
}

impl TransformOutput {
    fn from_values(values: Array1<f64>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        Self { values, support }
    }
}

fn soft(v: f64, threshold: f64) -> f64 {
    v.signum() * (v.abs() - threshold).max(0.0)
}

/// Sparsifying transform: `u_i = sign(q_i) * max(|q_i| - tau, 0)`.
pub fn snt_apply(q: ArrayView1<'_, f64>, tau: f64) -> Result<TransformOutput> {
    if tau < 0.0 {
        return Err(LpError::Param(format!("tau = {tau} must be >= 0")));
    }
    Ok(TransformOutput::from_values(q.mapv(|v| soft(v, tau))))
}

/// Columnwise sparsifying transform of a matrix.
pub fn snt_apply_matrix(q: ArrayView2<'_, f64>, tau: f64) -> Result<Array2<f64>> {
    if tau < 0.0 {
        return Err(LpError::Param(format!("tau = {tau} must be >= 0")));
    }
    Ok(q.mapv(|v| soft(v, tau)))
}

/// Generalized transform: with `b = q - nu` and `p = t + lambda1`,
/// `u = sign(b) * max(|b| - p, 0) / n` elementwise.
pub fn gnt_apply(q: ArrayView1<'_, f64>, params: &GntParams) -> Result<TransformOutput> {
    if q.len() != params.t.len() {
        return Err(LpError::Shape(format!(
            "gNT input length {} does not match parameter length {}",
            q.len(),
            params.t.len()
        )));
    }
    if params.n.iter().any(|&v| v <= 0.0) {
        return Err(LpError::Param("gNT normalizer n must be > 0".into()));
    }
    let p = params.p();
    let values = Array1::from_shape_fn(q.len(), |i| {
        soft(q[i] - params.nu[i], p[i]) / params.n[i]
    });
    Ok(TransformOutput::from_values(values))
}

/// Forward pass `U_0 = Y_0`, `U_l = sNT(A_{l-1} U_{l-1}, tau_l)` for
/// `l = 1..=up_to`. Returns `[U_0, ..., U_{up_to}]`.
pub fn forward_pass(
    net: &Network,
    y0: &RepresentationSet,
    up_to: usize,
) -> Result<Vec<RepresentationSet>> {
    if up_to > net.num_levels() {
        return Err(LpError::Range(format!(
            "up_to = {} exceeds network depth {}",
            up_to,
            net.num_levels()
        )));
    }
    if y0.dim() != net.dims()[0] {
        return Err(LpError::Topology(format!(
            "input has {} rows, network expects {}",
            y0.dim(),
            net.dims()[0]
        )));
    }
    let mut out = Vec::with_capacity(up_to + 1);
    out.push(y0.clone());
    for l in 1..=up_to {
        let a = net.forward_weight(l);
        let q = a.dot(&out[l - 1].view());
        let u = snt_apply_matrix(q.view(), net.threshold(l))?;
        out.push(out[l - 1].with_data(u)?);
    }
    Ok(out)
}

/// Backward pass `U_l = sNT(B_l U_{l+1}, tau_l)` descending from level
/// `from` to `down_to`. Returns representations in descending level order,
/// starting with `U_from`. Level 0 has no stored threshold and uses 0.
pub fn backward_pass(
    net: &Network,
    u_top: &RepresentationSet,
    from: usize,
    down_to: usize,
) -> Result<Vec<RepresentationSet>> {
    if from < down_to {
        return Err(LpError::Range(format!(
            "from = {from} must be >= down_to = {down_to}"
        )));
    }
    if from > net.num_levels() {
        return Err(LpError::Range(format!(
            "from = {} exceeds network depth {}",
            from,
            net.num_levels()
        )));
    }
    if u_top.dim() != net.dims()[from] {
        return Err(LpError::Topology(format!(
            "top representation has {} rows, level {} expects {}",
            u_top.dim(),
            from,
            net.dims()[from]
        )));
    }
    let mut out = Vec::with_capacity(from - down_to + 1);
    out.push(u_top.clone());
    let mut level = from;
    while level > down_to {
        let l = level - 1;
        let b = net.backward_weight(l).ok_or_else(|| {
            LpError::Topology(format!("no backward weight B_{l} available"))
        })?;
        let q = b.dot(out.last().unwrap().data());
        let tau = if l == 0 { 0.0 } else { net.threshold(l) };
        let u = snt_apply_matrix(q.view(), tau)?;
        out.push(u_top.with_data(u)?);
        level = l;
    }
    Ok(out)
}

/// Per-sample risk `xi = t'|u| + nu'u + n'(u.u)` from raw parameter
/// vectors. The value is signed; no clamping is applied.
pub fn empirical_risk_raw(
    u: ArrayView1<'_, f64>,
    t: ArrayView1<'_, f64>,
    nu: ArrayView1<'_, f64>,
    n: ArrayView1<'_, f64>,
) -> Result<f64> {
    if u.len() != t.len() || u.len() != nu.len() || u.len() != n.len() {
        return Err(LpError::Shape(format!(
            "risk input lengths differ: u={}, t={}, nu={}, n={}",
            u.len(),
            t.len(),
            nu.len(),
            n.len()
        )));
    }
    let mut xi = 0.0;
    for i in 0..u.len() {
        xi += t[i] * u[i].abs() + nu[i] * u[i] + n[i] * u[i] * u[i];
    }
    Ok(xi)
}

/// Per-sample risk with shared gNT parameters.
pub fn empirical_risk(u: ArrayView1<'_, f64>, params: &GntParams) -> Result<f64> {
    empirical_risk_raw(u, params.t.view(), params.nu.view(), params.n.view())
}

/// Mean of the per-column risk over a representation set.
pub fn empirical_risk_mean(set: &RepresentationSet, params: &GntParams) -> Result<f64> {
    let mut total = 0.0;
    for col in set.data().columns() {
        total += empirical_risk(col, params)?;
    }
    Ok(total / set.num_columns() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_network, HyperParams, LevelLambdas};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::collections::BTreeMap;

    #[test]
    fn snt_thresholds_and_preserves_sign() {
        let out = snt_apply(array![2.0, -0.5, 1.0].view(), 1.0).unwrap();
        assert_eq!(out.values, array![1.0, 0.0, 0.0]);
        assert_eq!(out.support, vec![0]);

        let q = array![0.3, -1.7, 0.0];
        let id = snt_apply(q.view(), 0.0).unwrap();
        assert_eq!(id.values, q);

        let neg = snt_apply(array![-3.0].view(), 1.5).unwrap();
        assert_eq!(neg.values, array![-1.5]);

        assert!(snt_apply(array![1.0].view(), -0.1).is_err());
    }

    #[test]
    fn gnt_worked_example() {
        let params = GntParams::new(array![0.3], array![2.0], array![0.5], 0.2).unwrap();
        let out = gnt_apply(array![2.0].view(), &params).unwrap();
        assert_abs_diff_eq!(out.values[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gnt_reduces_to_snt() {
        let tau = 0.7;
        let q = array![2.0, -0.9, 0.3, -0.7, 5.5];
        let params = GntParams::snt_equivalent(q.len(), tau).unwrap();
        let g = gnt_apply(q.view(), &params).unwrap();
        let s = snt_apply(q.view(), tau).unwrap();
        assert_eq!(g.values, s.values);
        assert_eq!(g.support, s.support);
    }

    #[test]
    fn gnt_zero_at_nu() {
        let nu = array![1.0, -2.0, 0.5];
        let params = GntParams::new(Array1::zeros(3), Array1::ones(3), nu.clone(), 0.0).unwrap();
        let out = gnt_apply(nu.view(), &params).unwrap();
        assert_eq!(out.values, Array1::zeros(3));
        assert!(out.support.is_empty());
    }

    fn identity_net(levels: usize, tau: f64) -> Network {
        let mut h = HyperParams::uniform(
            levels,
            LevelLambdas {
                l1: tau,
                ..LevelLambdas::zeros()
            },
        );
        h.tie_backward = true;
        let dims = vec![3; levels + 1];
        let mut net = build_network(&dims, &h, &BTreeMap::new()).unwrap();
        for l in 1..=levels {
            net.set_forward_weight(l, Array2::eye(3));
        }
        net
    }

    #[test]
    fn forward_pass_identity_chain() {
        let net = identity_net(1, 0.0);
        let y0 = RepresentationSet::new(array![[1.0, -2.0], [0.5, 0.0], [3.0, 1.0]], 2, 1).unwrap();

        let empty = forward_pass(&net, &y0, 0).unwrap();
        assert_eq!(empty.len(), 1);
        assert_eq!(empty[0].data(), y0.data());

        let run = forward_pass(&net, &y0, 1).unwrap();
        assert_eq!(run[1].data(), y0.data());
    }

    #[test]
    fn forward_pass_full_thresholding() {
        let y0 = RepresentationSet::new(array![[1.0, -2.0], [0.5, 0.0], [3.0, 1.0]], 2, 1).unwrap();
        let tau = y0.data().iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
        let net = identity_net(1, tau);
        let run = forward_pass(&net, &y0, 1).unwrap();
        assert_eq!(run[1].data(), &Array2::zeros((3, 2)));
    }

    #[test]
    fn backward_pass_empty_and_orthonormal_recovery() {
        let net = identity_net(2, 0.0);
        let u = RepresentationSet::new(array![[1.0], [2.0], [-3.0]], 1, 1).unwrap();
        let same = backward_pass(&net, &u, 1, 1).unwrap();
        assert_eq!(same.len(), 1);
        assert_eq!(same[0].data(), u.data());

        // Tied B = A' with orthonormal (identity) A and tau = 0: the
        // backward pass of the forward pass recovers the input.
        let fwd = forward_pass(&net, &u, 2).unwrap();
        let back = backward_pass(&net, &fwd[2], 2, 0).unwrap();
        assert_eq!(back[2].data(), u.data());

        assert!(backward_pass(&net, &u, 0, 1).is_err());
    }

    #[test]
    fn backward_pass_annihilation() {
        let mut h = HyperParams::uniform(2, LevelLambdas::zeros());
        h.tie_backward = false;
        let mut net = build_network(&[3, 3, 3], &h, &BTreeMap::new()).unwrap();
        net.set_backward_weight(1, Array2::zeros((3, 3))).unwrap();
        let u = RepresentationSet::new(array![[1.0], [2.0], [-3.0]], 1, 1).unwrap();
        let back = backward_pass(&net, &u, 2, 1).unwrap();
        assert_eq!(back[1].data(), &Array2::zeros((3, 1)));
    }

    #[test]
    fn risk_worked_example() {
        let xi = empirical_risk_raw(
            array![1.0, -1.0].view(),
            array![0.1, 0.1].view(),
            array![0.2, -0.2].view(),
            array![1.0, 1.0].view(),
        )
        .unwrap();
        assert_abs_diff_eq!(xi, 2.6, epsilon = 1e-15);
    }

    #[test]
    fn risk_zero_cases() {
        let z = Array1::zeros(4);
        let t = array![0.5, 0.1, 0.2, 0.9];
        assert_eq!(
            empirical_risk_raw(z.view(), t.view(), t.view(), t.view()).unwrap(),
            0.0
        );
        let u = array![1.0, -2.0, 3.0, 0.5];
        assert_eq!(
            empirical_risk_raw(u.view(), z.view(), z.view(), z.view()).unwrap(),
            0.0
        );
    }

    #[test]
    fn risk_mean_over_set() {
        let set = RepresentationSet::new(array![[1.0, 0.0], [-1.0, 0.0]], 2, 1).unwrap();
        let params = GntParams::new(
            array![0.1, 0.1],
            array![1.0, 1.0],
            array![0.2, -0.2],
            0.0,
        )
        .unwrap();
        let mean = empirical_risk_mean(&set, &params).unwrap();
        assert_abs_diff_eq!(mean, 1.3, epsilon = 1e-15);
    }
}
