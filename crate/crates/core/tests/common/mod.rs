//! Test-only helpers: random data, finite-difference gradient checks and
//! reference implementations that share no code with the library paths
//! they are compared against.
#![allow(dead_code)]

mod oracles;
#[allow(unused_imports)]
pub use oracles::*;

use featdistill::distill::{DistillHead, DistillModel, ModelGrads, StudentModel};
use featdistill::embedstore::{EmbeddingSet, SampleMeta};
use featdistill::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen::<f64>().max(1e-300);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// Random `d × d` orthogonal matrix (Gram-Schmidt on Gaussian columns).
pub fn orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Matrix<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        for _ in 0..2 {
            for c in &cols {
                let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
            }
        }
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= nrm);
            cols.push(v);
        }
    }
    Matrix::from_fn(d, d, |i, j| cols[j][i])
}

/// `U diag(s) Vᵀ` with singular values log-uniform in `[lo, hi]`.
pub fn conditioned(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Matrix<f64> {
    let u = orthogonal(rng, d);
    let v = orthogonal(rng, d);
    let s: Vec<f64> = (0..d)
        .map(|_| lo * ((hi / lo).ln() * rng.gen::<f64>()).exp())
        .collect();
    let us = Matrix::from_fn(d, d, |i, j| u[(i, j)] * s[j]);
    us.matmul_t(&v).unwrap()
}

/// Set from a matrix with ids `s00000…`, optional labels.
pub fn set_from(x: &Matrix<f64>, labels: Option<&[u32]>, n_classes: usize) -> EmbeddingSet {
    let meta = (0..x.rows())
        .map(|i| SampleMeta {
            label: labels.map(|l| l[i]),
            ..SampleMeta::new(format!("s{i:05}"))
        })
        .collect();
    EmbeddingSet::from_matrix(x, meta, (0..n_classes).map(|c| c.to_string()).collect(), "test").unwrap()
}

// ---- flattening of every trainable parameter --------------------------------

pub fn params(model: &DistillModel<f64>) -> Vec<f64> {
    let mut p = model.head.projection.as_slice().to_vec();
    p.extend(&model.head.bn_gamma);
    p.extend(&model.head.bn_beta);
    if let StudentModel::Mlp { layers } = &model.student {
        for l in layers {
            p.extend(l.weight.as_slice());
            p.extend(&l.bias);
        }
    }
    p
}

pub fn set_params(model: &mut DistillModel<f64>, p: &[f64]) {
    let mut it = p.iter().copied();
    let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|v| *v = it.next().unwrap());
    fill(model.head.projection.as_mut_slice());
    fill(&mut model.head.bn_gamma);
    fill(&mut model.head.bn_beta);
    if let StudentModel::Mlp { layers } = &mut model.student {
        for l in layers {
            fill(l.weight.as_mut_slice());
            fill(&mut l.bias);
        }
    }
}

pub fn grads(g: &ModelGrads<f64>) -> Vec<f64> {
    let mut v = g.head.projection.as_slice().to_vec();
    v.extend(&g.head.gamma);
    v.extend(&g.head.beta);
    for (w, b) in &g.student.layers {
        v.extend(w.as_slice());
        v.extend(b);
    }
    v
}

/// Relative error with a small absolute floor so that gradients that are
/// zero up to rounding compare as equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    rel_err_scaled(a, b, 1e-6)
}

/// Relative error whose denominator never drops below `floor`.
pub fn rel_err_scaled(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Floor for gradient comparisons: entries far below the instance's largest
/// gradient are judged relative to 1e-3 of that magnitude.
pub fn gradient_floor(g: &[f64]) -> f64 {
    let max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (1e-3 * max).max(1e-9)
}

/// Central differences with base step `1e-4 · max(1, |θ|)`, Richardson-extrapolated.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut buf = x.to_vec();
    let mut diff = |k: usize, h: f64| {
        buf[k] = x[k] + h;
        let up = f(&buf);
        buf[k] = x[k] - h;
        let down = f(&buf);
        buf[k] = x[k];
        (up - down) / (2.0 * h)
    };
    (0..x.len())
        .map(|k| {
            let h = 1e-4 * x[k].abs().max(1.0);
            // one Richardson step cancels the h^2 term
            (4.0 * diff(k, h / 2.0) - diff(k, h)) / 3.0
        })
        .collect()
}

/// Worst relative error of the full-chain analytic gradient (parameters and
/// input) of `loss ∘ head ∘ student` against central differences.
pub fn chain_gradient_error(
    model: &DistillModel<f64>,
    x: &Matrix<f64>,
    target: &Matrix<f64>,
) -> f64 {
    let mut m = model.clone();
    let (_, g) = m.loss_and_grads(x, target, 4.0, 1e-12).unwrap();
    let analytic = grads(&g);

    let loss_at = |p: &[f64]| {
        let mut m = model.clone();
        set_params(&mut m, p);
        m.loss_and_grads(x, target, 4.0, 1e-12).unwrap().0
    };
    let numeric = central_diff(&loss_at, &params(model));
    let g_in = g.student.input.as_slice().to_vec();
    let floor = gradient_floor(&analytic).max(gradient_floor(&g_in));
    let mut worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| rel_err_scaled(a, n, floor))
        .fold(0.0, f64::max);

    // input gradient
    let loss_x = |v: &[f64]| {
        let xv = Matrix::from_vec(x.rows(), x.cols(), v.to_vec()).unwrap();
        model.clone().loss_and_grads(&xv, target, 4.0, 1e-12).unwrap().0
    };
    let numeric_x = central_diff(&loss_x, x.as_slice());
    for (&a, &n) in g_in.iter().zip(&numeric_x) {
        worst = worst.max(rel_err_scaled(a, n, floor));
    }
    worst
}

/// Random model with non-trivial scale and shift.
pub fn random_model(
    rng: &mut ChaCha8Rng,
    d_s: usize,
    d_t: usize,
    hidden: Option<Vec<usize>>,
) -> DistillModel<f64> {
    let mut head = DistillHead::with_projection(normal_matrix(rng, d_s, d_t));
    head.bn_gamma = (0..d_s).map(|_| 0.5 + rng.gen::<f64>()).collect();
    head.bn_beta = (0..d_s).map(|_| normal(rng) * 0.3).collect();
    let student = match hidden {
        None => StudentModel::Identity,
        Some(h) => {
            let mut s = StudentModel::init(
                &featdistill::distill::StudentArch::Mlp { hidden: h },
                d_s,
                rng,
            );
            if let StudentModel::Mlp { layers } = &mut s {
                for l in layers {
                    l.bias.iter_mut().for_each(|b| *b = normal(rng) * 0.2);
                }
            }
            s
        }
    };
    DistillModel { student, head }
}

/// `Z_t = Z_s·A` with `Z_s ~ N(0, I)` (`n × d`) and `A` of singular values in `[0.5, 2]`.
pub fn linear_pair(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Matrix<f64>, Matrix<f64>) {
    let zs = normal_matrix(rng, n, d);
    let a = conditioned(rng, d, 0.5, 2.0);
    let zt = zs.matmul(&a).unwrap();
    (zs, zt)
}
