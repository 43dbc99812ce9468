//! k-nearest-neighbor evaluation of learned representations.

use ndarray::prelude::*;
use rayon::prelude::*;

use crate::error::{LpError, Result};

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

fn classify(
    point: ArrayView1<'_, f64>,
    train: &ArrayView2<'_, f64>,
    labels: &[usize],
    k: usize,
) -> usize {
    let mut dist: Vec<(f64, usize)> = train
        .columns()
        .into_iter()
        .enumerate()
        .map(|(j, col)| (squared_distance(point, col), j))
        .collect();
    dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let neighbors = &dist[..k];

    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut votes = vec![0usize; num_classes];
    let mut dist_sum = vec![0.0f64; num_classes];
    for &(d, j) in neighbors {
        votes[labels[j]] += 1;
        dist_sum[labels[j]] += d.sqrt();
    }
    // Majority vote; ties by smallest mean distance, then lowest class.
    let top = *votes.iter().max().unwrap();
    (0..num_classes)
        .filter(|&c| votes[c] == top)
        .min_by(|&a, &b| {
            let ma = dist_sum[a] / votes[a] as f64;
            let mb = dist_sum[b] / votes[b] as f64;
            ma.partial_cmp(&mb).unwrap().then(a.cmp(&b))
        })
        .unwrap()
}

/// Fraction of test points whose k-NN majority vote matches their label.
pub fn knn_evaluate(
    train_reps: ArrayView2<'_, f64>,
    train_labels: &[usize],
    test_reps: ArrayView2<'_, f64>,
    test_labels: &[usize],
    k: usize,
) -> Result<f64> {
    if k == 0 || k > train_reps.ncols() {
        return Err(LpError::Param(format!(
            "k = {k} must be in 1..={}",
            train_reps.ncols()
        )));
    }
    if train_reps.ncols() != train_labels.len() || test_reps.ncols() != test_labels.len() {
        return Err(LpError::Shape(
            "representation and label counts differ".into(),
        ));
    }
    if train_reps.nrows() != test_reps.nrows() {
        return Err(LpError::Shape(format!(
            "train dim {} vs test dim {}",
            train_reps.nrows(),
            test_reps.nrows()
        )));
    }
    let correct: usize = test_reps
        .columns()
        .into_iter()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(j, col)| (classify(col, &train_reps, train_labels, k) == test_labels[j]) as usize)
        .sum();
    Ok(correct as f64 / test_labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{class_major_labels, synthetic_gaussians};

    #[test]
    fn exact_match_with_k1() {
        let train = ndarray::array![[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]];
        let labels = vec![0, 1, 2];
        let acc = knn_evaluate(train.view(), &labels, train.view(), &labels, 1).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn separated_clusters_are_perfect() {
        let train = synthetic_gaussians(6, 2, 100, 50.0, 0.5, 4).unwrap();
        let test = {
            let mut t = train.data().clone();
            t.mapv_inplace(|v| v + 0.01);
            t
        };
        let labels = class_major_labels(&train);
        let acc = knn_evaluate(train.view(), &labels, test.view(), &labels, 3).unwrap();
        assert_eq!(acc, 1.0);

        // Exhaustive oracle at k = 1: nearest squared distance decides.
        let acc1 = knn_evaluate(train.view(), &labels, test.view(), &labels, 1).unwrap();
        assert_eq!(acc1, 1.0);
    }

    #[test]
    fn full_k_tie_break_is_deterministic() {
        // k = train count with balanced classes: every class gets the same
        // vote; the smallest mean distance (then lowest class) decides.
        let train = ndarray::array![[0.0, 10.0], [0.0, 0.0]];
        let labels = vec![0, 1];
        let test = ndarray::array![[9.0], [0.0]];
        let acc = knn_evaluate(train.view(), &labels, test.view(), &[1], 2).unwrap();
        assert_eq!(acc, 1.0);
        // Equidistant: lowest class index wins.
        let mid = ndarray::array![[5.0], [0.0]];
        let acc = knn_evaluate(train.view(), &labels, mid.view(), &[0], 2).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn permutation_invariance() {
        let train = synthetic_gaussians(4, 3, 5, 10.0, 1.0, 7).unwrap();
        let labels = class_major_labels(&train);
        let test = synthetic_gaussians(4, 3, 4, 10.0, 1.0, 8).unwrap();
        let tlabels = class_major_labels(&test);
        let base = knn_evaluate(train.view(), &labels, test.view(), &tlabels, 3).unwrap();

        let perm: Vec<usize> = (0..15).rev().collect();
        let ptrain = train.data().select(Axis(1), &perm);
        let plabels: Vec<usize> = perm.iter().map(|&j| labels[j]).collect();
        let p = knn_evaluate(ptrain.view(), &plabels, test.view(), &tlabels, 3).unwrap();
        assert_eq!(base, p);
    }

    #[test]
    fn parameter_errors() {
        let train = ndarray::array![[0.0, 1.0]];
        let labels = vec![0, 1];
        assert!(knn_evaluate(train.view(), &labels, train.view(), &labels, 3).is_err());
        assert!(knn_evaluate(train.view(), &labels, train.view(), &labels, 0).is_err());
    }
}
