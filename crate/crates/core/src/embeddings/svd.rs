//! Truncated SVD of symmetric matrices via cyclic Jacobi eigen-decomposition.
//!
//! For symmetric `M = V diag(l) V^T` the singular values are `|l|`, the left
//! singular vectors are the eigenvectors and the right singular vectors are
//! the eigenvectors times `sign(l)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues and column eigenvectors of a symmetric matrix, in the order
/// the rotations leave them.
pub fn symmetric_eigen(matrix: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    let mut a = matrix.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    let tol = scale * 1e-15;

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[(i, i)]).collect();
    Ok((values, v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    /// `m x dim`, orthonormal columns.
    pub left: DMatrix<f64>,
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    /// `m x dim`.
    pub right: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.singular_values.clone()));
        &self.left * s * self.right.transpose()
    }

    /// Rows of `left * diag(singular_values)`.
    pub fn scaled_left(&self) -> DMatrix<f64> {
        let mut out = self.left.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            out.column_mut(j).scale_mut(*s);
        }
        out
    }
}

/// Rank-`dim` SVD of a symmetric matrix.
///
/// Axes are ordered by singular value (descending, stable on ties) and each
/// left singular vector is signed so that its largest-magnitude component is
/// positive.
pub fn truncated_svd_symmetric(matrix: &DMatrix<f64>, dim: usize) -> Result<TruncatedSvd> {
    let m = matrix.nrows();
    if dim == 0 || dim > m {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension must be in 1..={m}, got {dim}"
        )));
    }
    let (values, vectors) = symmetric_eigen(matrix)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    order.truncate(dim);

    let mut left = DMatrix::zeros(m, dim);
    let mut right = DMatrix::zeros(m, dim);
    let mut singular_values = Vec::with_capacity(dim);
    for (axis, &src) in order.iter().enumerate() {
        let col = vectors.column(src);
        let mut pivot = 0;
        for i in 1..m {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let flip = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        let sign = if values[src] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            left[(i, axis)] = flip * col[i];
            right[(i, axis)] = sign * flip * col[i];
        }
        singular_values.push(values[src].abs());
    }
    Ok(TruncatedSvd {
        left,
        singular_values,
        right,
    })
}
