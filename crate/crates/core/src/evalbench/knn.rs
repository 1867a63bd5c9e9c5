use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, Matrix};
use crate::scalar::Scalar;

/// Indices of the `k` rows of `points` nearest to `query` (Euclidean),
/// nearest first; equal distances are ordered by lower row index.
/// `exclude` removes one row (typically the query itself) from the candidates.
pub fn nearest_neighbors<T: Scalar>(
    points: &Matrix<T>,
    query: &[T],
    k: usize,
    exclude: Option<usize>,
) -> Vec<usize> {
    let mut cand: Vec<(T, usize)> = (0..points.rows())
        .filter(|&i| Some(i) != exclude)
        .map(|i| (sq_dist(points.row(i), query), i))
        .collect();
    let k = k.min(cand.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &(T, usize), b: &(T, usize)| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    };
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand.into_iter().map(|(_, i)| i).collect()
}

/// Most frequent label; ties go to the smallest label.
pub fn majority_vote(labels: impl IntoIterator<Item = u32>) -> Option<u32> {
    let mut counts = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let mut best: Option<(u32, usize)> = None;
    for (l, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, _)| l)
}

/// Majority label among the `k` nearest training rows (`k` clamped to the
/// training set size).
pub fn knn_predict<T: Scalar>(
    train_x: &Matrix<T>,
    train_y: &[u32],
    query: &[T],
    k: usize,
) -> Result<u32> {
    if train_x.rows() == 0 {
        return Err(Error::Invalid("kNN needs a non-empty training set".into()));
    }
    if train_x.rows() != train_y.len() {
        return Err(Error::Shape(format!(
            "{} training rows, {} labels",
            train_x.rows(),
            train_y.len()
        )));
    }
    if query.len() != train_x.cols() {
        return Err(Error::Shape(format!(
            "query has {} features, training set {}",
            query.len(),
            train_x.cols()
        )));
    }
    let nn = nearest_neighbors(train_x, query, k.max(1), None);
    Ok(majority_vote(nn.into_iter().map(|i| train_y[i])).expect("k >= 1 neighbors"))
}
