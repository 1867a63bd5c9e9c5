//! Linear centered kernel alignment (CKA) between two representations of the
//! same samples.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedstore::{align_pairs, EmbeddingSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{mean_std, Scalar};

pub const DEFAULT_SUBSAMPLES: usize = 10;
pub const DEFAULT_SUBSAMPLE_CAP: usize = 2048;

pub fn center_columns<T: Scalar>(x: &Matrix<T>) -> Result<Matrix<T>> {
    if x.rows() < 2 {
        return Err(Error::Invalid(format!(
            "centering needs at least 2 rows, got {}",
            x.rows()
        )));
    }
    let mean = x.col_means();
    Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - mean[j]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cka<T> {
    pub value: T,
    /// Set when one input has no variance; `value` is then 0.
    pub degenerate: bool,
}

/// `‖Ycᵀ Xc‖²_F / (‖Xcᵀ Xc‖_F ‖Ycᵀ Yc‖_F)` on column-centered inputs.
pub fn linear_cka<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>) -> Result<Cka<T>> {
    if x.rows() != y.rows() {
        return Err(Error::Shape(format!(
            "CKA inputs have {} and {} rows",
            x.rows(),
            y.rows()
        )));
    }
    x.ensure_finite()?;
    y.ensure_finite()?;
    let xc = center_columns(x)?;
    let yc = center_columns(y)?;
    let xx = xc.t_matmul(&xc)?.frobenius();
    let yy = yc.t_matmul(&yc)?.frobenius();
    if xx == T::zero() || yy == T::zero() {
        return Ok(Cka {
            value: T::zero(),
            degenerate: true,
        });
    }
    let xy = yc.t_matmul(&xc)?.frobenius_sq();
    Ok(Cka {
        value: xy / xx / yy,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaReport {
    pub per_subsample: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over subsamples.
    pub std: f64,
    pub n_subsamples: usize,
    pub subsample_size: usize,
    pub seed: u64,
    /// Number of rows shared by both sets.
    pub n_aligned: usize,
    pub degenerate_subsamples: usize,
}

/// CKA on `n_subsamples` seeded row subsets of two row-aligned matrices.
///
/// Subset `s` draws `subsample_size` distinct rows with ChaCha8 seeded by
/// `seed ^ s`; subsets are independent of each other.
pub fn cka_report_matrices<T: Scalar>(
    x: &Matrix<T>,
    y: &Matrix<T>,
    n_subsamples: usize,
    subsample_size: usize,
    seed: u64,
) -> Result<CkaReport> {
    let n = x.rows();
    if y.rows() != n {
        return Err(Error::Shape(format!("{n} vs {} rows", y.rows())));
    }
    if subsample_size < 2 {
        return Err(Error::Invalid("subsample_size must be >= 2".into()));
    }
    if n < subsample_size {
        return Err(Error::Invalid(format!(
            "{n} aligned rows, fewer than subsample_size {subsample_size}"
        )));
    }
    if n_subsamples == 0 {
        return Err(Error::Invalid("n_subsamples must be >= 1".into()));
    }
    let results: Vec<Cka<T>> = (0..n_subsamples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ s as u64);
            let mut rows = index::sample(&mut rng, n, subsample_size).into_vec();
            rows.sort_unstable();
            linear_cka(&x.select_rows(&rows), &y.select_rows(&rows))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = results.iter().map(|c| c.value.to_f64_lossy()).collect();
    let (mean, std) = mean_std(&values);
    Ok(CkaReport {
        mean,
        std,
        n_subsamples,
        subsample_size,
        seed,
        n_aligned: n,
        degenerate_subsamples: results.iter().filter(|c| c.degenerate).count(),
        per_subsample: values,
    })
}

/// Aligns two sets by sample id and reports subsampled CKA.
/// `subsample_size = None` uses `min(n_aligned, 2048)`.
pub fn cka_report<T: Scalar>(
    x_set: &EmbeddingSet,
    y_set: &EmbeddingSet,
    n_subsamples: usize,
    subsample_size: Option<usize>,
    seed: u64,
) -> Result<CkaReport> {
    let pairs = align_pairs(x_set, y_set)?;
    let x = x_set.rows_matrix::<T>(&pairs.student_rows());
    let y = y_set.rows_matrix::<T>(&pairs.teacher_rows());
    let size = subsample_size.unwrap_or_else(|| x.rows().min(DEFAULT_SUBSAMPLE_CAP));
    cka_report_matrices(&x, &y, n_subsamples, size, seed)
}
