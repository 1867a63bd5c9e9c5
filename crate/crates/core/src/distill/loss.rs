//! Log-sum alignment loss: `log(max(Σ |E|^α, eps))` over every element of the
//! residual matrix `E = projected student − teacher`.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::scalar::{pairwise_sum, Scalar};

fn powered_sum<T: Scalar>(residual: &Matrix<T>, alpha: T) -> Result<T> {
    residual.ensure_finite()?;
    let terms: Vec<T> = residual
        .as_slice()
        .iter()
        .map(|e| e.abs().powf(alpha))
        .collect();
    Ok(pairwise_sum(&terms))
}

pub fn logsum_loss<T: Scalar>(residual: &Matrix<T>, alpha: T, eps_loss: T) -> Result<T> {
    let s = powered_sum(residual, alpha)?;
    Ok(s.max(eps_loss).ln())
}

/// Gradient of [`logsum_loss`] with respect to the residual.
///
/// Below the eps floor the loss is constant in the sum, but the floor is
/// treated as a clamp on the denominator only, matching the closed form
/// `α |E|^(α−1) sign(E) / max(S, eps)`.
pub fn logsum_loss_grad<T: Scalar>(residual: &Matrix<T>, alpha: T, eps_loss: T) -> Result<Matrix<T>> {
    let s = powered_sum(residual, alpha)?.max(eps_loss);
    let am1 = alpha - T::one();
    Ok(residual.map(|e| {
        if e == T::zero() {
            T::zero()
        } else {
            alpha * e.abs().powf(am1) * e.signum() / s
        }
    }))
}

/// Loss and gradient in one pass.
pub fn logsum_loss_with_grad<T: Scalar>(
    residual: &Matrix<T>,
    alpha: T,
    eps_loss: T,
) -> Result<(T, Matrix<T>)> {
    let loss = logsum_loss(residual, alpha, eps_loss)?;
    let grad = logsum_loss_grad(residual, alpha, eps_loss)?;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn values() {
        let l = logsum_loss(&m(&[&[0.0, 0.0]]), 4.0, 1e-12).unwrap();
        assert!((l - (1e-12f64).ln()).abs() < 1e-12);
        assert!((l + 27.631021115928547).abs() < 1e-9);
        assert_eq!(logsum_loss(&m(&[&[1.0]]), 4.0, 1e-12).unwrap(), 0.0);
        let l = logsum_loss(&m(&[&[1.0, 2.0]]), 4.0, 1e-12).unwrap();
        assert!((l - 2.833213344056216).abs() < 1e-12);
    }

    #[test]
    fn gradients() {
        let g = logsum_loss_grad(&m(&[&[1.0]]), 4.0, 1e-12).unwrap();
        assert_eq!(g.as_slice(), &[4.0]);
        let g = logsum_loss_grad(&m(&[&[0.0, 1.0]]), 4.0, 1e-12).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 4.0]);
        let g = logsum_loss_grad(&m(&[&[-1.0]]), 4.0, 1e-12).unwrap();
        assert_eq!(g.as_slice(), &[-4.0]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let e = m(&[&[0.3, -1.2, 0.7], &[2.0, -0.1, 0.05]]);
        let g = logsum_loss_grad(&e, 4.0, 1e-12).unwrap();
        for k in 0..e.as_slice().len() {
            let h = 1e-4 * e.as_slice()[k].abs().max(1.0);
            let mut p = e.clone();
            p.as_mut_slice()[k] += h;
            let mut q = e.clone();
            q.as_mut_slice()[k] -= h;
            let fd = (logsum_loss(&p, 4.0, 1e-12).unwrap() - logsum_loss(&q, 4.0, 1e-12).unwrap())
                / (2.0 * h);
            let a = g.as_slice()[k];
            assert!((a - fd).abs() <= 1e-5 * a.abs().max(fd.abs()).max(1e-3), "{a} vs {fd}");
        }
    }

    #[test]
    fn non_finite_residual_is_located() {
        let e = m(&[&[0.0, f64::NAN]]);
        assert!(matches!(
            logsum_loss(&e, 4.0, 1e-12),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }
}
