//! Non-training benchmark of a frozen embedding: PCA, then k-nearest-neighbor
//! majority vote, over repeated random train/test splits. Training units only
//! supply neighbor labels.

mod eigen;
mod knn;
mod pca;

pub use eigen::symmetric_eigen;
pub use knn::{knn_predict, majority_vote, nearest_neighbors};
pub use pca::{pca_fit, pca_transform, PcaModel};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedstore::{group_by_bag, EmbeddingSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{mean_std, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Every row is one unit.
    #[default]
    Patch,
    /// Rows are mean-pooled per `bag_id` first.
    Bag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_components: usize,
    pub k: usize,
    pub n_repeats: usize,
    pub train_fraction: f64,
    pub level: Level,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_components: 50,
            k: 15,
            n_repeats: 10,
            train_fraction: 0.8,
            level: Level::Patch,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.n_components < 1 || self.n_repeats < 1 {
            return Err(Error::Invalid(
                "k, n_components and n_repeats must all be >= 1".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Invalid("train_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub per_repeat_accuracy: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over repeats.
    pub std: f64,
    pub n_units: usize,
    pub config: BenchConfig,
}

/// Everything one repeat decided, for auditing against other implementations.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatOutcome {
    pub train_units: Vec<usize>,
    pub test_units: Vec<usize>,
    pub n_components: usize,
    pub predictions: Vec<u32>,
    pub accuracy: f64,
}

/// Evaluation units sorted by id: features, labels and ids.
#[derive(Debug, Clone)]
pub struct Units<T> {
    pub ids: Vec<String>,
    pub features: Matrix<T>,
    pub labels: Vec<u32>,
}

/// Arithmetic mean of the given rows.
pub fn mean_pool<T: Scalar>(set: &EmbeddingSet, rows: &[usize]) -> Result<Vec<T>> {
    if rows.is_empty() {
        return Err(Error::Invalid("cannot mean-pool an empty bag".into()));
    }
    let mut acc = vec![T::zero(); set.d()];
    for &r in rows {
        for (a, &v) in acc.iter_mut().zip(set.row(r)) {
            *a += T::of(v as f64);
        }
    }
    let n = T::of_usize(rows.len());
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Builds the evaluation units for `level`, ordered by sample or bag id.
pub fn build_units<T: Scalar>(set: &EmbeddingSet, level: Level) -> Result<Units<T>> {
    let mut units: Vec<(String, Vec<T>, u32)> = match level {
        Level::Patch => set
            .meta()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let row = set.row(i).iter().map(|&v| T::of(v as f64)).collect();
                Ok((m.sample_id.clone(), row, m.require_label()?))
            })
            .collect::<Result<_>>()?,
        Level::Bag => group_by_bag(set)?
            .into_iter()
            .map(|(bag, rows)| {
                let label = set.meta()[rows[0]].require_label()?;
                for &r in &rows {
                    let l = set.meta()[r].require_label()?;
                    if l != label {
                        return Err(Error::Invalid(format!(
                            "bag `{bag}` mixes labels {label} and {l} (sample {})",
                            set.meta()[r].sample_id
                        )));
                    }
                }
                Ok((bag, mean_pool(set, &rows)?, label))
            })
            .collect::<Result<_>>()?,
    };
    units.sort_by(|a, b| a.0.cmp(&b.0));
    let features = Matrix::from_rows(&units.iter().map(|u| u.1.clone()).collect::<Vec<_>>())?;
    Ok(Units {
        ids: units.iter().map(|u| u.0.clone()).collect(),
        labels: units.iter().map(|u| u.2).collect(),
        features,
    })
}

/// Training-set size for `n` units.
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    ((n as f64 * train_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Unit order for one repeat: a Fisher-Yates shuffle of `0..n` driven by
/// ChaCha8 seeded with `seed ^ repeat`.
pub fn repeat_order(n: usize, seed: u64, repeat: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ repeat as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn run_repeat<T: Scalar>(units: &Units<T>, config: &BenchConfig, repeat: usize) -> Result<RepeatOutcome> {
    let n = units.ids.len();
    let order = repeat_order(n, config.seed, repeat);
    let n_train = train_size(n, config.train_fraction);
    let (train, test) = order.split_at(n_train);
    let pca = pca_fit(&units.features.select_rows(train), config.n_components)?;
    let train_x = pca_transform(&pca, &units.features.select_rows(train))?;
    let test_x = pca_transform(&pca, &units.features.select_rows(test))?;
    let train_y: Vec<u32> = train.iter().map(|&i| units.labels[i]).collect();
    let mut predictions = Vec::with_capacity(test.len());
    let mut correct = 0usize;
    for (q, &u) in test.iter().enumerate() {
        let p = knn_predict(&train_x, &train_y, test_x.row(q), config.k)?;
        correct += usize::from(p == units.labels[u]);
        predictions.push(p);
    }
    Ok(RepeatOutcome {
        train_units: train.to_vec(),
        test_units: test.to_vec(),
        n_components: pca.n_components(),
        predictions,
        accuracy: correct as f64 / test.len() as f64,
    })
}

pub fn run_benchmark<T: Scalar>(set: &EmbeddingSet, config: &BenchConfig) -> Result<BenchmarkResult> {
    Ok(run_benchmark_detailed::<T>(set, config)?.0)
}

/// [`run_benchmark`] plus per-repeat splits and predictions. Unit indices
/// refer to the id-sorted units of [`build_units`].
pub fn run_benchmark_detailed<T: Scalar>(
    set: &EmbeddingSet,
    config: &BenchConfig,
) -> Result<(BenchmarkResult, Vec<RepeatOutcome>)> {
    config.validate()?;
    let units = build_units::<T>(set, config.level)?;
    let n = units.ids.len();
    if n < 3 || train_size(n, config.train_fraction) < 2 {
        return Err(Error::Invalid(format!(
            "{n} units leave fewer than 2 for training and 1 for testing"
        )));
    }
    let outcomes: Vec<RepeatOutcome> = (0..config.n_repeats)
        .into_par_iter()
        .map(|r| run_repeat(&units, config, r))
        .collect::<Result<_>>()?;
    let acc: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    let (mean, std) = mean_std(&acc);
    Ok((
        BenchmarkResult {
            per_repeat_accuracy: acc,
            mean,
            std,
            n_units: n,
            config: config.clone(),
        },
        outcomes,
    ))
}
