//! Small dense solvers for symmetric positive definite systems.
//!
//! Only what the conjugate E-step needs: Cholesky factorization, solves,
//! and the full inverse of an SPD matrix. Dimensions here are tens, not
//! thousands.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Shape {
            op: "cholesky",
            lhs_rows: a.rows(),
            lhs_cols: a.cols(),
            rhs_rows: n,
            rhs_cols: n,
        });
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum = sum - l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= T::zero() || !sum.is_finite() {
                    return Err(Error::numeric(format!(
                        "matrix is not positive definite at pivot {i}"
                    )));
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solve `A x = b` given the Cholesky factor of `A`.
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    debug_assert_eq!(b.len(), n);
    // forward substitution: L y = b
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum = sum - l.get(i, k) * y[k];
        }
        y[i] = sum / l.get(i, i);
    }
    // back substitution: Lᵀ x = y
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum = sum - l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    x
}

/// Full inverse of an SPD matrix via its Cholesky factor.
pub fn spd_inverse<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    let l = cholesky(a)?;
    let mut inv = Matrix::zeros(n, n);
    let mut unit = vec![T::zero(); n];
    for j in 0..n {
        unit[j] = T::one();
        let col = cholesky_solve(&l, &unit);
        unit[j] = T::zero();
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_a_known_spd_system() {
        // A = [[4,2],[2,3]], b = [2, 5] -> x = [-0.5, 2]
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        let x = cholesky_solve(&l, &[2.0, 5.0]);
        assert_relative_eq!(x[0], -0.5, max_relative = 1e-12);
        assert_relative_eq!(x[1], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = Matrix::from_rows(&[
            vec![6.0, 2.0, 1.0],
            vec![2.0, 5.0, 2.0],
            vec![1.0, 2.0, 4.0],
        ])
        .unwrap();
        let inv = spd_inverse(&a).unwrap();
        let prod = a.matmul(&inv).unwrap();
        let eye = Matrix::identity(3);
        assert!(prod.max_abs_diff(&eye) < 1e-12);
    }

    #[test]
    fn non_spd_matrix_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(cholesky(&a).is_err());
    }
}
