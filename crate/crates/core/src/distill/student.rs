//! Trainable student network placed in front of the projection head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

use super::head::uniform_init;

/// Architecture selector used in configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudentArch {
    /// Raw student embeddings are passed through unchanged.
    #[default]
    Identity,
    /// GELU hidden layers of the given widths, then an affine map back to the
    /// input width.
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    /// `d_in × d_out`.
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudentModel<T> {
    Identity,
    Mlp { layers: Vec<Dense<T>> },
}

#[derive(Debug, Clone)]
pub struct StudentCache<T> {
    /// Input of each layer.
    inputs: Vec<Matrix<T>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Matrix<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentGrads<T> {
    /// `(weight, bias)` gradient per layer; empty for `Identity`.
    pub layers: Vec<(Matrix<T>, Vec<T>)>,
    pub input: Matrix<T>,
}

pub fn gelu<T: Scalar>(x: T) -> T {
    x * T::of(0.5) * (T::one() + (x * T::FRAC_1_SQRT_2()).erf())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let cdf = T::of(0.5) * (T::one() + (x * T::FRAC_1_SQRT_2()).erf());
    let pdf = (-(x * x) * T::of(0.5)).exp() / (T::TAU()).sqrt();
    cdf + x * pdf
}

impl<T: Scalar> StudentModel<T> {
    pub fn init<R: Rng + ?Sized>(arch: &StudentArch, d_in: usize, rng: &mut R) -> Self {
        match arch {
            StudentArch::Identity => StudentModel::Identity,
            StudentArch::Mlp { hidden } => {
                let mut dims = vec![d_in];
                dims.extend(hidden.iter().copied());
                dims.push(d_in);
                let layers = dims
                    .windows(2)
                    .map(|w| Dense {
                        weight: uniform_init(w[0], w[1], rng),
                        bias: vec![T::zero(); w[1]],
                    })
                    .collect();
                StudentModel::Mlp { layers }
            }
        }
    }

    /// Checks the layer chain and returns the output width for input width `d_in`.
    pub fn output_dim(&self, d_in: usize) -> Result<usize> {
        match self {
            StudentModel::Identity => Ok(d_in),
            StudentModel::Mlp { layers } => {
                let mut d = d_in;
                for (i, l) in layers.iter().enumerate() {
                    if l.weight.rows() != d || l.bias.len() != l.weight.cols() {
                        return Err(Error::Shape(format!(
                            "layer {i} is {}x{} with {} biases, input width {d}",
                            l.weight.rows(),
                            l.weight.cols(),
                            l.bias.len()
                        )));
                    }
                    d = l.weight.cols();
                }
                Ok(d)
            }
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, StudentCache<T>)> {
        self.output_dim(x.cols())?;
        let mut cache = StudentCache {
            inputs: Vec::new(),
            pre: Vec::new(),
        };
        let StudentModel::Mlp { layers } = self else {
            return Ok((x.clone(), cache));
        };
        let mut h = x.clone();
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            let mut z = h.matmul(&l.weight)?;
            for r in 0..z.rows() {
                for (v, &b) in z.row_mut(r).iter_mut().zip(&l.bias) {
                    *v += b;
                }
            }
            cache.inputs.push(h);
            if i == last {
                h = z;
            } else {
                h = z.map(gelu);
                cache.pre.push(z);
            }
        }
        Ok((h, cache))
    }

    pub fn backward(&self, cache: &StudentCache<T>, d_out: &Matrix<T>) -> Result<StudentGrads<T>> {
        let StudentModel::Mlp { layers } = self else {
            return Ok(StudentGrads {
                layers: Vec::new(),
                input: d_out.clone(),
            });
        };
        if cache.inputs.len() != layers.len() {
            return Err(Error::Invalid("cache does not belong to this model".into()));
        }
        let mut grads = Vec::with_capacity(layers.len());
        let mut g = d_out.clone();
        for (i, l) in layers.iter().enumerate().rev() {
            if i + 1 < layers.len() {
                let pre = &cache.pre[i];
                g = Matrix::from_fn(g.rows(), g.cols(), |r, c| g[(r, c)] * gelu_grad(pre[(r, c)]));
            }
            let dw = cache.inputs[i].t_matmul(&g)?;
            let db = g.col_sums();
            g = g.matmul_t(&l.weight)?;
            grads.push((dw, db));
        }
        grads.reverse();
        Ok(StudentGrads {
            layers: grads,
            input: g,
        })
    }
}
