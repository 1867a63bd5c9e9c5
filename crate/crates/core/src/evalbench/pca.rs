use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::scalar::Scalar;

use super::eigen::symmetric_eigen;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel<T> {
    /// Training mean, length `d`.
    pub mean: Vec<T>,
    /// `r × d`, orthonormal rows in order of decreasing explained variance.
    pub components: Matrix<T>,
    /// Sample variance (divisor `n − 1`) along each component.
    pub explained_variance: Vec<T>,
}

impl<T: Scalar> PcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fits the top `min(n − 1, d, n_components)` principal axes of `x`.
///
/// Axes come from the eigendecomposition of whichever Gram matrix is smaller:
/// `XcᵀXc` (`d × d`) or `XcXcᵀ` (`n × n`, mapped back through `Xcᵀ`). Each axis
/// is signed so that its largest-magnitude entry (first on ties) is positive.
pub fn pca_fit<T: Scalar>(x: &Matrix<T>, n_components: usize) -> Result<PcaModel<T>> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::Invalid(format!("PCA needs at least 2 rows, got {n}")));
    }
    if n_components == 0 {
        return Err(Error::Invalid("n_components must be >= 1".into()));
    }
    x.ensure_finite()?;
    let r = n_components.min(d).min(n - 1);
    let mean = x.col_means();
    let xc = Matrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let denom = T::of_usize(n - 1);

    let mut axes: Vec<Vec<T>> = Vec::with_capacity(r);
    let mut variance = Vec::with_capacity(r);
    if d <= n {
        let (vals, vecs) = symmetric_eigen(&xc.t_matmul(&xc)?)?;
        for c in 0..r {
            axes.push((0..d).map(|i| vecs[(i, c)]).collect());
            variance.push(vals[c].max(T::zero()) / denom);
        }
    } else {
        let (vals, vecs) = symmetric_eigen(&xc.matmul_t(&xc)?)?;
        let tol = vals[0].abs().max(T::min_positive_value()) * T::epsilon() * T::of_usize(n.max(d));
        for c in 0..r {
            let lambda = vals[c];
            variance.push(lambda.max(T::zero()) / denom);
            if lambda <= tol {
                break;
            }
            let mut v = vec![T::zero(); d];
            for i in 0..n {
                let u = vecs[(i, c)];
                for (vj, &x) in v.iter_mut().zip(xc.row(i)) {
                    *vj += u * x;
                }
            }
            normalize(&mut v);
            axes.push(v);
        }
        variance.resize(r, T::zero());
        complete_orthonormal(&mut axes, d, r);
    }
    for a in &mut axes {
        fix_sign(a);
    }
    let components = Matrix::from_rows(&axes)?;
    Ok(PcaModel {
        mean,
        components,
        explained_variance: variance,
    })
}

/// `(x − mean) · componentsᵀ`.
pub fn pca_transform<T: Scalar>(model: &PcaModel<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    if x.cols() != model.dim() {
        return Err(Error::Shape(format!(
            "PCA model expects {} columns, got {}",
            model.dim(),
            x.cols()
        )));
    }
    let r = model.n_components();
    let mut out = Matrix::zeros(x.rows(), r);
    let mut centered = vec![T::zero(); model.dim()];
    for i in 0..x.rows() {
        for ((c, &v), &m) in centered.iter_mut().zip(x.row(i)).zip(&model.mean) {
            *c = v - m;
        }
        for k in 0..r {
            out[(i, k)] = dot(&centered, model.components.row(k));
        }
    }
    Ok(out)
}

fn normalize<T: Scalar>(v: &mut [T]) {
    let norm = dot(v, v).sqrt();
    if norm > T::zero() {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn fix_sign<T: Scalar>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < T::zero()) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Extends `axes` to `r` orthonormal vectors with Gram-Schmidt on the
/// standard basis. Used when the data has rank below `r`.
fn complete_orthonormal<T: Scalar>(axes: &mut Vec<Vec<T>>, d: usize, r: usize) {
    let mut e = 0;
    while axes.len() < r && e < d {
        let mut v = vec![T::zero(); d];
        v[e] = T::one();
        for _ in 0..2 {
            for a in axes.iter() {
                let p = dot(&v, a);
                v.iter_mut().zip(a).for_each(|(x, &ai)| *x -= p * ai);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > T::of(1e-3) {
            v.iter_mut().for_each(|x| *x /= norm);
            axes.push(v);
        }
        e += 1;
    }
}
