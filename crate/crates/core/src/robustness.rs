//! Multi-center robustness index: among each query's nearest neighbors, the
//! number sharing its tissue class divided by the number sharing its center.
//! Values above 1 mean biology dominates site effects.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedstore::EmbeddingSet;
use crate::error::{Error, Result};
use crate::evalbench::nearest_neighbors;
use crate::matrix::Matrix;
use crate::scalar::{mean_std, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub per_class: usize,
    pub k_neighbors: usize,
    pub n_folds: usize,
    pub seed: u64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            per_class: 80,
            k_neighbors: 5,
            n_folds: 5,
            seed: 0,
        }
    }
}

/// Aggregate neighbor counts for one sample of queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexTotals {
    /// `tissue_matches / center_matches`; `+inf` when no neighbor shares a center.
    #[serde(with = "inf_as_null")]
    pub index: f64,
    pub tissue_matches: usize,
    pub center_matches: usize,
    pub n_queries: usize,
    /// Neighbor pairs at distance exactly zero.
    pub duplicate_neighbors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessResult {
    pub per_fold: Vec<IndexTotals>,
    /// Mean and population std over folds with a finite index.
    pub mean: f64,
    pub std: f64,
    pub ratio: String,
    pub config: RobustnessConfig,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Draws exactly `per_class` rows of every tissue class, without replacement.
/// Returned rows are sorted by row index.
pub fn sample_balanced<R: Rng + ?Sized>(
    set: &EmbeddingSet,
    per_class: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if per_class == 0 {
        return Err(Error::Invalid("per_class must be >= 1".into()));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, m) in set.meta().iter().enumerate() {
        m.require_center()?;
        by_class.entry(m.require_tissue()?).or_default().push(i);
    }
    let mut out = Vec::with_capacity(per_class * by_class.len());
    for (class, rows) in &by_class {
        if rows.len() < per_class {
            return Err(Error::Invalid(format!(
                "tissue class {class} has {} rows, {per_class} required",
                rows.len()
            )));
        }
        out.extend(index::sample(rng, rows.len(), per_class).into_iter().map(|k| rows[k]));
    }
    out.sort_unstable();
    Ok(out)
}

/// Counts, over every row as query, how many of its `k` nearest other rows
/// share its tissue key and how many share its center key.
pub fn robustness_index<T: Scalar, A: PartialEq + Sync, B: PartialEq + Sync>(
    x: &Matrix<T>,
    tissue: &[A],
    center: &[B],
    k: usize,
) -> Result<IndexTotals> {
    let n = x.rows();
    if tissue.len() != n || center.len() != n {
        return Err(Error::Shape(format!(
            "{n} rows, {} tissue keys, {} center keys",
            tissue.len(),
            center.len()
        )));
    }
    if k == 0 || n < k + 1 {
        return Err(Error::Invalid(format!(
            "{n} rows are too few for {k} neighbors per query"
        )));
    }
    x.ensure_finite()?;
    let per_query: Vec<(usize, usize, usize)> = (0..n)
        .into_par_iter()
        .map(|q| {
            let nn = nearest_neighbors(x, x.row(q), k, Some(q));
            let t = nn.iter().filter(|&&j| tissue[j] == tissue[q]).count();
            let c = nn.iter().filter(|&&j| center[j] == center[q]).count();
            let dup = nn.iter().filter(|&&j| x.row(j) == x.row(q)).count();
            (t, c, dup)
        })
        .collect();
    let tissue_matches = per_query.iter().map(|p| p.0).sum();
    let center_matches: usize = per_query.iter().map(|p| p.1).sum();
    let duplicate_neighbors = per_query.iter().map(|p| p.2).sum();
    let index = if center_matches == 0 {
        f64::INFINITY
    } else {
        tissue_matches as f64 / center_matches as f64
    };
    Ok(IndexTotals {
        index,
        tissue_matches,
        center_matches,
        n_queries: n,
        duplicate_neighbors,
    })
}

/// Index on a row subset of a set, keyed by its tissue class and center id.
pub fn robustness_index_rows<T: Scalar>(
    set: &EmbeddingSet,
    rows: &[usize],
    k: usize,
) -> Result<IndexTotals> {
    let tissue: Vec<u32> = rows
        .iter()
        .map(|&r| set.meta()[r].require_tissue())
        .collect::<Result<_>>()?;
    let center: Vec<&str> = rows
        .iter()
        .map(|&r| set.meta()[r].require_center())
        .collect::<Result<_>>()?;
    robustness_index(&set.rows_matrix::<T>(rows), &tissue, &center, k)
}

/// One balanced sample and index per fold; fold `f` uses ChaCha8 seeded with
/// `seed ^ f`.
pub fn robustness_cv<T: Scalar>(set: &EmbeddingSet, config: &RobustnessConfig) -> Result<RobustnessResult> {
    if config.k_neighbors == 0 || config.n_folds == 0 {
        return Err(Error::Invalid("k_neighbors and n_folds must be >= 1".into()));
    }
    let per_fold: Vec<IndexTotals> = (0..config.n_folds)
        .into_par_iter()
        .map(|f| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ f as u64);
            let rows = sample_balanced(set, config.per_class, &mut rng)?;
            robustness_index_rows::<T>(set, &rows, config.k_neighbors)
        })
        .collect::<Result<_>>()?;
    let finite: Vec<f64> = per_fold.iter().map(|t| t.index).filter(|v| v.is_finite()).collect();
    let (mean, std) = if finite.is_empty() {
        (f64::INFINITY, 0.0)
    } else {
        mean_std(&finite)
    };
    Ok(RobustnessResult {
        per_fold,
        mean,
        std,
        ratio: "sum(tissue_matches) / sum(center_matches) over all queries of a fold".into(),
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedstore::SampleMeta;

    fn set(points: &[f32], tissue: &[u32], center: &[&str]) -> EmbeddingSet {
        let meta = tissue
            .iter()
            .zip(center)
            .enumerate()
            .map(|(i, (&t, &c))| SampleMeta {
                tissue_class: Some(t),
                center_id: Some(c.into()),
                ..SampleMeta::new(format!("p{i}"))
            })
            .collect();
        let k = tissue.iter().max().unwrap() + 1;
        EmbeddingSet::new(1, points.to_vec(), meta, (0..k).map(|c| c.to_string()).collect(), "")
            .unwrap()
    }

    #[test]
    fn coinciding_keys_give_one() {
        let s = set(&[0.0, 0.1, 0.2, 10.0, 10.1, 10.2], &[0, 0, 0, 1, 1, 1], &["a", "a", "a", "b", "b", "b"]);
        let t = robustness_index_rows::<f64>(&s, &[0, 1, 2, 3, 4, 5], 2).unwrap();
        assert_eq!(t.index, 1.0);
        assert_eq!((t.tissue_matches, t.center_matches), (12, 12));
    }

    #[test]
    fn zero_numerator_and_infinite_sentinel() {
        // neighbors always the other tissue, sometimes the same center
        let s = set(&[0.0, 0.1, 10.0, 10.1], &[0, 1, 0, 1], &["a", "a", "b", "c"]);
        let t = robustness_index_rows::<f64>(&s, &[0, 1, 2, 3], 1).unwrap();
        assert_eq!(t.index, 0.0);
        let s = set(&[0.0, 0.1, 10.0, 10.1], &[0, 0, 1, 1], &["a", "b", "c", "d"]);
        let t = robustness_index_rows::<f64>(&s, &[0, 1, 2, 3], 1).unwrap();
        assert!(t.index.is_infinite());
        assert_eq!(t.tissue_matches, 4);
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"index\":null"));
    }

    #[test]
    fn insufficient_class_is_named() {
        let s = set(&[0.0, 1.0, 2.0], &[0, 0, 1], &["a", "a", "a"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_balanced(&s, 2, &mut rng).unwrap_err().to_string();
        assert!(err.contains("class 1") && err.contains("1 rows"), "{err}");
        let all = sample_balanced(&set(&[0.0, 1.0], &[0, 1], &["a", "b"]), 1, &mut rng).unwrap();
        assert_eq!(all, vec![0, 1]);
    }

    #[test]
    fn too_few_rows_for_k() {
        let x = Matrix::<f64>::zeros(3, 1);
        assert!(robustness_index(&x, &[0, 0, 0], &[0, 0, 0], 3).is_err());
    }
}
