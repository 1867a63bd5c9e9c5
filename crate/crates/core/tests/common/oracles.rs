//! Independent reference implementations used as test oracles.

use std::collections::HashMap;

use featdistill::embedstore::{EmbeddingSet, SampleMeta};
use featdistill::Matrix;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::normal;

/// Straight-line reimplementation: shuffle, fit a full-rank PCA with nalgebra,
/// sort all distances, count votes.
pub fn brute_force_benchmark(x: &Matrix<f64>, y: &[u32], seed: u64, repeat: usize, k: usize) -> (Vec<u32>, f64) {
    let n = x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ repeat as u64));
    let n_train = ((n as f64 * 0.8).round() as usize).clamp(1, n - 1);
    let (train, test) = order.split_at(n_train);

    let d = x.cols();
    let tx = DMatrix::from_fn(train.len(), d, |i, j| x[(train[i], j)]);
    let mean = tx.row_mean();
    let mut c = tx.clone();
    for mut r in c.row_iter_mut() {
        r -= &mean;
    }
    let basis = nalgebra::SymmetricEigen::new(c.transpose() * &c).eigenvectors;
    let project = |row: usize| {
        let v = DMatrix::from_fn(1, d, |_, j| x[(row, j)]) - &mean;
        v * &basis
    };
    let train_p: Vec<_> = train.iter().map(|&i| project(i)).collect();

    let mut preds = Vec::new();
    let mut correct = 0;
    for &q in test {
        let qp = project(q);
        let mut dist: Vec<(f64, usize)> = train_p
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - &qp).norm_squared(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = HashMap::new();
        for &(_, i) in dist.iter().take(k) {
            *votes.entry(y[train[i]]).or_insert(0) += 1;
        }
        let best = *votes.values().max().unwrap();
        let label = *votes.iter().filter(|(_, &v)| v == best).map(|(l, _)| l).min().unwrap();
        correct += usize::from(label == y[q]);
        preds.push(label);
    }
    let acc = correct as f64 / test.len() as f64;
    (preds, acc)
}

/// CKA through the sample Gram matrices: HSIC(K, L) = tr(K H L H).
pub fn hsic_cka(x: &Matrix<f64>, y: &Matrix<f64>) -> f64 {
    let n = x.rows();
    let xa = DMatrix::from_row_slice(n, x.cols(), x.as_slice());
    let ya = DMatrix::from_row_slice(n, y.cols(), y.as_slice());
    let h = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let k = &h * (&xa * xa.transpose()) * &h;
    let l = &h * (&ya * ya.transpose()) * &h;
    let hsic = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.component_mul(b).sum();
    hsic(&k, &l) / (hsic(&k, &k) * hsic(&l, &l)).sqrt()
}

pub const SCENARIO_DIM: usize = 4;

/// Set whose rows carry the scenario's tissue classes and center ids.
pub fn scenario_set(points: &Matrix<f64>, tissue: &[u32], center: &[u32]) -> EmbeddingSet {
    let meta = (0..points.rows())
        .map(|i| SampleMeta {
            tissue_class: Some(tissue[i]),
            center_id: Some(format!("center{:02}", center[i])),
            ..SampleMeta::new(format!("p{i:05}"))
        })
        .collect();
    EmbeddingSet::from_matrix(points, meta, (0..5).map(|c| format!("t{c}")).collect(), "").unwrap()
}

/// Tissue clusters at spacing `tissue_sep`, centers shifting by `center_sep`.
pub fn scenario(rng: &mut ChaCha8Rng, per_class: usize, centers: u32, tissue_sep: f64, center_sep: f64) -> (Matrix<f64>, Vec<u32>, Vec<u32>) {
    let n = 5 * per_class;
    let tissue: Vec<u32> = (0..n).map(|i| (i / per_class) as u32).collect();
    let center: Vec<u32> = (0..n).map(|_| rng.gen_range(0..centers)).collect();
    let x = Matrix::from_fn(n, SCENARIO_DIM, |i, j| {
        let t = if j == 0 { tissue[i] as f64 * tissue_sep } else { 0.0 };
        let c = if j == 1 { center[i] as f64 * center_sep } else { 0.0 };
        t + c + normal(rng)
    });
    (x, tissue, center)
}

/// Direct counting with a full sort of every distance list.
pub fn brute_totals(x: &Matrix<f64>, tissue: &[u32], center: &[u32], k: usize) -> (usize, usize) {
    let n = x.rows();
    let (mut t, mut c) = (0, 0);
    for q in 0..n {
        let mut dist: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != q)
            .map(|j| ((0..SCENARIO_DIM).map(|a| (x[(j, a)] - x[(q, a)]).powi(2)).sum(), j))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &dist[..k] {
            t += usize::from(tissue[j] == tissue[q]);
            c += usize::from(center[j] == center[q]);
        }
    }
    (t, c)
}

/// Mirror without edge repeat, by walking back and forth.
pub fn mirror(mut i: isize, n: isize) -> usize {
    if n == 1 {
        return 0;
    }
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

/// Full 2-D convolution with the outer-product kernel.
pub fn direct_convolution(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ky, wy) in kernel.iter().enumerate() {
                for (kx, wx) in kernel.iter().enumerate() {
                    let sy = mirror(y as isize + ky as isize - r, h as isize);
                    let sx = mirror(x as isize + kx as isize - r, w as isize);
                    acc += wy * wx * plane[sy * w + sx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}
