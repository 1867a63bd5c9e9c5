//! Projection head: per-feature batch normalization followed by a bias-free
//! linear map from the student dimension to the teacher dimension.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillHead<T> {
    pub bn_gamma: Vec<T>,
    pub bn_beta: Vec<T>,
    pub bn_run_mean: Vec<T>,
    pub bn_run_var: Vec<T>,
    pub bn_momentum: T,
    pub bn_eps: T,
    /// `d_s × d_t`.
    pub projection: Matrix<T>,
}

/// Intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    mode: Mode,
    normalized: Matrix<T>,
    bn_out: Matrix<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> HeadCache<T> {
    /// Batch-norm output, the input of the projection.
    pub fn bn_out(&self) -> &Matrix<T> {
        &self.bn_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads<T> {
    pub projection: Matrix<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub input: Matrix<T>,
}

impl<T: Scalar> DistillHead<T> {
    /// Head with unit scale, zero shift, identity running statistics and the
    /// given projection.
    pub fn with_projection(projection: Matrix<T>) -> Self {
        let d_s = projection.rows();
        Self {
            bn_gamma: vec![T::one(); d_s],
            bn_beta: vec![T::zero(); d_s],
            bn_run_mean: vec![T::zero(); d_s],
            bn_run_var: vec![T::one(); d_s],
            bn_momentum: T::of(0.1),
            bn_eps: T::of(1e-5),
            projection,
        }
    }

    /// Projection drawn uniformly from `±sqrt(6 / (d_s + d_t))`.
    pub fn init<R: Rng + ?Sized>(d_s: usize, d_t: usize, rng: &mut R) -> Self {
        Self::with_projection(uniform_init(d_s, d_t, rng))
    }

    pub fn d_s(&self) -> usize {
        self.projection.rows()
    }

    pub fn d_t(&self) -> usize {
        self.projection.cols()
    }

    pub fn forward(&mut self, z_s: &Matrix<T>, mode: Mode) -> Result<(Matrix<T>, HeadCache<T>)> {
        let (b, d) = z_s.shape();
        if d != self.d_s() {
            return Err(Error::Shape(format!(
                "head expects {} input features, got {d}",
                self.d_s()
            )));
        }
        z_s.ensure_finite()?;
        let (mean, var) = match mode {
            Mode::Train => {
                if b < 2 {
                    return Err(Error::Invalid(format!(
                        "batch normalization in train mode needs at least 2 rows, got {b}"
                    )));
                }
                let mean = z_s.col_means();
                let mut var = vec![T::zero(); d];
                for i in 0..b {
                    for ((v, &x), &m) in var.iter_mut().zip(z_s.row(i)).zip(&mean) {
                        *v += (x - m) * (x - m);
                    }
                }
                let bn = T::of_usize(b);
                var.iter_mut().for_each(|v| *v /= bn);

                let mom = self.bn_momentum;
                let unbias = bn / T::of_usize(b - 1);
                for j in 0..d {
                    self.bn_run_mean[j] = (T::one() - mom) * self.bn_run_mean[j] + mom * mean[j];
                    self.bn_run_var[j] =
                        (T::one() - mom) * self.bn_run_var[j] + mom * var[j] * unbias;
                }
                (mean, var)
            }
            Mode::Eval => (self.bn_run_mean.clone(), self.bn_run_var.clone()),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| (v + self.bn_eps).sqrt().recip()).collect();
        let normalized = Matrix::from_fn(b, d, |i, j| (z_s[(i, j)] - mean[j]) * inv_std[j]);
        let bn_out = Matrix::from_fn(b, d, |i, j| {
            self.bn_gamma[j] * normalized[(i, j)] + self.bn_beta[j]
        });
        let out = bn_out.matmul(&self.projection)?;
        Ok((
            out,
            HeadCache {
                mode,
                normalized,
                bn_out,
                inv_std,
            },
        ))
    }

    /// Gradients of the composed map, including the dependence of the batch
    /// statistics on the input.
    pub fn backward(&self, cache: &HeadCache<T>, d_out: &Matrix<T>) -> Result<HeadGrads<T>> {
        if cache.mode != Mode::Train {
            return Err(Error::Invalid(
                "backward requires a train-mode forward cache".into(),
            ));
        }
        let (b, d) = cache.normalized.shape();
        if d_out.shape() != (b, self.d_t()) {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, expected {b}x{}",
                d_out.rows(),
                d_out.cols(),
                self.d_t()
            )));
        }
        let projection = cache.bn_out.t_matmul(d_out)?;
        let d_bn = d_out.matmul_t(&self.projection)?;

        let mut gamma = vec![T::zero(); d];
        let mut beta = vec![T::zero(); d];
        // Column sums of dx̂ and dx̂·x̂.
        let mut sum_dn = vec![T::zero(); d];
        let mut sum_dn_n = vec![T::zero(); d];
        for i in 0..b {
            for j in 0..d {
                let g = d_bn[(i, j)];
                let n = cache.normalized[(i, j)];
                gamma[j] += g * n;
                beta[j] += g;
                let dn = g * self.bn_gamma[j];
                sum_dn[j] += dn;
                sum_dn_n[j] += dn * n;
            }
        }
        let bn = T::of_usize(b);
        let input = Matrix::from_fn(b, d, |i, j| {
            let dn = d_bn[(i, j)] * self.bn_gamma[j];
            cache.inv_std[j] / bn
                * (bn * dn - sum_dn[j] - cache.normalized[(i, j)] * sum_dn_n[j])
        });
        Ok(HeadGrads {
            projection,
            gamma,
            beta,
            input,
        })
    }
}

pub(crate) fn uniform_init<T: Scalar, R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Matrix<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| T::of(rng.gen_range(-bound..=bound)))
}
