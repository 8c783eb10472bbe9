//! Small dense linear algebra over [`Scalar`]: cyclic Jacobi for symmetric
//! eigenvalues and Gaussian elimination with partial pivoting.
//!
//! Matrices are row-major `Vec<T>` of size `dim * dim`. The schedule spaces
//! handled here have at most a few hundred states.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(mut a: Vec<T>, dim: usize) -> Result<Vec<T>> {
    debug_assert_eq!(a.len(), dim * dim);
    let frobenius = a.iter().map(|&x| x * x).sum::<T>().sqrt();
    let target = T::tolerance() * frobenius.max(T::min_positive_value());
    let mut off = off_diagonal_norm(&a, dim);
    let mut sweeps = 0;
    while off > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numerical(format!(
                "Jacobi eigen-solve did not converge after {MAX_SWEEPS} sweeps: off-diagonal norm {:e}, matrix norm {:e}, dimension {dim}",
                off.to_f64_lossy(),
                frobenius.to_f64_lossy()
            )));
        }
        for p in 0..dim {
            for q in p + 1..dim {
                rotate(&mut a, dim, p, q);
            }
        }
        off = off_diagonal_norm(&a, dim);
        sweeps += 1;
    }
    let mut eig: Vec<T> = (0..dim).map(|i| a[i * dim + i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(eig)
}

fn off_diagonal_norm<T: Scalar>(a: &[T], dim: usize) -> T {
    let mut s = T::zero();
    for i in 0..dim {
        for j in 0..dim {
            if i != j {
                s += a[i * dim + j] * a[i * dim + j];
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing `a[p][q]`.
fn rotate<T: Scalar>(a: &mut [T], dim: usize, p: usize, q: usize) {
    let apq = a[p * dim + q];
    if apq == T::zero() {
        return;
    }
    let app = a[p * dim + p];
    let aqq = a[q * dim + q];
    let two = T::lit(2.0);
    let theta = (aqq - app) / (two * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    for k in 0..dim {
        let akp = a[k * dim + p];
        let akq = a[k * dim + q];
        a[k * dim + p] = c * akp - s * akq;
        a[k * dim + q] = s * akp + c * akq;
    }
    for k in 0..dim {
        let apk = a[p * dim + k];
        let aqk = a[q * dim + k];
        a[p * dim + k] = c * apk - s * aqk;
        a[q * dim + k] = s * apk + c * aqk;
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Fails when a pivot falls below `tolerance * max|a|`.
pub fn solve<T: Scalar>(mut a: Vec<T>, mut b: Vec<T>, dim: usize) -> Result<Vec<T>> {
    debug_assert_eq!(a.len(), dim * dim);
    debug_assert_eq!(b.len(), dim);
    let scale = a
        .iter()
        .fold(T::zero(), |m, &x| m.max(x.abs()))
        .max(T::min_positive_value());
    let threshold = T::tolerance() * T::lit(16.0) * scale;
    for col in 0..dim {
        let pivot_row = (col..dim)
            .max_by(|&i, &j| {
                a[i * dim + col]
                    .abs()
                    .partial_cmp(&a[j * dim + col].abs())
                    .expect("finite matrix")
            })
            .expect("non-empty range");
        let pivot = a[pivot_row * dim + col];
        if pivot.abs() <= threshold {
            return Err(Error::Numerical(format!(
                "singular system: pivot {:e} in column {col} below threshold {:e}",
                pivot.to_f64_lossy(),
                threshold.to_f64_lossy()
            )));
        }
        if pivot_row != col {
            for k in 0..dim {
                a.swap(pivot_row * dim + k, col * dim + k);
            }
            b.swap(pivot_row, col);
        }
        for row in col + 1..dim {
            let factor = a[row * dim + col] / pivot;
            if factor == T::zero() {
                continue;
            }
            for k in col..dim {
                let v = a[col * dim + k];
                a[row * dim + k] -= factor * v;
            }
            let bc = b[col];
            b[row] -= factor * bc;
        }
    }
    let mut x = vec![T::zero(); dim];
    for row in (0..dim).rev() {
        let mut acc = b[row];
        for k in row + 1..dim {
            acc -= a[row * dim + k] * x[k];
        }
        x[row] = acc / a[row * dim + row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigenvalues_of_known_matrix() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let eig = symmetric_eigenvalues(vec![2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert_relative_eq!(eig[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(eig[1], 3.0, epsilon = 1e-12);

        // tridiagonal (2,-1) of size 4: 2 - 2cos(k pi / 5)
        let dim = 4;
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = 2.0;
            if i + 1 < dim {
                a[i * dim + i + 1] = -1.0;
                a[(i + 1) * dim + i] = -1.0;
            }
        }
        let eig = symmetric_eigenvalues(a, dim).unwrap();
        for (k, e) in eig.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / 5.0).cos();
            assert_relative_eq!(*e, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenvalues_in_single_precision() {
        let eig = symmetric_eigenvalues(vec![2.0f32, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn solves_and_detects_singularity() {
        let x = solve(vec![4.0, 1.0, 2.0, 3.0], vec![1.0, 2.0], 2).unwrap();
        assert_relative_eq!(4.0 * x[0] + x[1], 1.0, epsilon = 1e-14);
        assert_relative_eq!(2.0 * x[0] + 3.0 * x[1], 2.0, epsilon = 1e-14);
        assert!(matches!(
            solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 1.0], 2),
            Err(Error::Numerical(_))
        ));
    }
}
