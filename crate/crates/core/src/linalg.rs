//! Small dense linear algebra: symmetric eigendecomposition and covariance.

use alloc::vec;
use alloc::vec::Vec;

use crate::{math, Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues descending. `vectors` is
/// row-major `n x n` with eigenvector `j` in column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl SymmetricEigen {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + j]).collect()
    }
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<SymmetricEigen> {
    if matrix.len() != n * n {
        return Err(Error::DimensionMismatch {
            context: "symmetric matrix".into(),
            expected: n * n,
            found: matrix.len(),
        });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("symmetric matrix".into()));
    }
    let mut a = matrix.to_vec();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        // Sign convention: largest-magnitude component positive.
        let mut best = 0;
        for i in 0..n {
            if math::abs(v[i * n + src]) > math::abs(v[best * n + src]) {
                best = i;
            }
        }
        let sign = if v[best * n + src] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[i * n + col] = sign * v[i * n + src];
        }
    }
    Ok(SymmetricEigen { n, values, vectors })
}

/// Sample covariance (divisor `rows - 1`) of a row-major `rows x cols` matrix.
pub fn covariance(data: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    if data.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: "covariance input".into(),
            expected: rows * cols,
            found: data.len(),
        });
    }
    if rows < 2 {
        return Err(Error::InvalidArgument("covariance needs at least two observations".into()));
    }
    let mut mean = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            mean[c] += data[r * cols + c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut cov = vec![0.0; cols * cols];
    let mut centred = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            centred[c] = data[r * cols + c] - mean[c];
        }
        for i in 0..cols {
            let ci = centred[i];
            for j in i..cols {
                cov[i * cols + j] += ci * centred[j];
            }
        }
    }
    let d = (rows - 1) as f64;
    for i in 0..cols {
        for j in i..cols {
            let v = cov[i * cols + j] / d;
            cov[i * cols + j] = v;
            cov[j * cols + i] = v;
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let e = symmetric_eigen(&[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0], 3).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vector(0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2,1],[1,2]] -> 3 with (1,1)/sqrt2, 1 with (1,-1)/sqrt2
        let e = symmetric_eigen(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let v = e.vector(0);
        assert!((v[0] - v[1]).abs() < 1e-14);
    }

    #[test]
    fn covariance_small() {
        let cov = covariance(&[1.0, 2.0, 3.0, 6.0], 2, 2).unwrap();
        assert_eq!(cov, vec![2.0, 4.0, 4.0, 8.0]);
        assert!(covariance(&[1.0], 1, 1).is_err());
    }
}
