//! Dense row-major matrices and the few kernels the solvers need.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(DenseMatrix { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// `out = A x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "A x: vector length");
        assert_eq!(out.len(), self.rows, "A x: output length");
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = dot(row, x);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `out = A^T z`.
    pub fn mul_t_vec_into(&self, z: &[f64], out: &mut [f64]) {
        assert_eq!(z.len(), self.rows, "A^T z: vector length");
        assert_eq!(out.len(), self.cols, "A^T z: output length");
        out.iter_mut().for_each(|v| *v = 0.0);
        for (zi, row) in z.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if *zi != 0.0 {
                axpy(*zi, row, out);
            }
        }
    }

    pub fn mul_t_vec(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.mul_t_vec_into(z, &mut out);
        out
    }

    /// Euclidean norms of the columns.
    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols.max(1)) {
            for (s, a) in sq.iter_mut().zip(row) {
                *s += a * a;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    /// Largest singular value by power iteration on `A^T A`.
    /// `tol` bounds the relative change of the `sigma_max^2` estimate.
    pub fn spectral_norm(&self, max_iter: usize, tol: f64) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        // deterministic, generic start vector
        let mut v: Vec<f64> = (0..self.cols).map(|j| 1.0 + 0.5 * ((j as f64) * 0.618_033_988_75).fract()).collect();
        normalize(&mut v);
        let mut av = vec![0.0; self.rows];
        let mut w = vec![0.0; self.cols];
        let mut estimate = 0.0;
        for _ in 0..max_iter {
            self.mul_vec_into(&v, &mut av);
            self.mul_t_vec_into(&av, &mut w);
            let next = norm2(&w).sqrt();
            if next == 0.0 {
                return 0.0;
            }
            w.iter().zip(v.iter_mut()).for_each(|(wi, vi)| *vi = wi / next);
            let converged = (next - estimate).abs() <= tol * next;
            estimate = next;
            if converged {
                break;
            }
        }
        estimate.sqrt()
    }

    /// Extreme nonzero singular values `(sigma_max, sigma_min)`.
    ///
    /// Works with the smaller Gram matrix. Up to `dense_limit` it is
    /// diagonalized directly; above that a fully reorthogonalized Lanczos
    /// run of `lanczos_steps` steps supplies the extreme Ritz values.
    pub fn extreme_singular_values(&self, dense_limit: usize, lanczos_steps: usize) -> (f64, f64) {
        let small = self.rows.min(self.cols);
        if small == 0 {
            return (0.0, 0.0);
        }
        let eig = if small <= dense_limit {
            let gram = self.small_gram();
            SymmetricEigen::new(gram).eigenvalues.iter().copied().collect::<Vec<_>>()
        } else {
            self.lanczos_gram(lanczos_steps.min(small))
        };
        let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        (max.max(0.0).sqrt(), min.max(0.0).sqrt())
    }

    fn small_gram(&self) -> DMatrix<f64> {
        let a = DMatrix::from_row_slice(self.rows, self.cols, &self.data);
        if self.rows <= self.cols {
            &a * a.transpose()
        } else {
            a.transpose() * &a
        }
    }

    fn gram_apply(&self, v: &[f64], tmp_rows: &mut [f64], tmp_cols: &mut [f64], out: &mut [f64]) {
        if self.rows <= self.cols {
            // A A^T v
            self.mul_t_vec_into(v, tmp_cols);
            self.mul_vec_into(tmp_cols, out);
        } else {
            self.mul_vec_into(v, tmp_rows);
            self.mul_t_vec_into(tmp_rows, out);
        }
    }

    fn lanczos_gram(&self, steps: usize) -> Vec<f64> {
        let dim = self.rows.min(self.cols);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut alphas = Vec::with_capacity(steps);
        let mut betas: Vec<f64> = Vec::with_capacity(steps);
        let mut q: Vec<f64> = (0..dim).map(|j| 1.0 + 0.5 * ((j as f64) * 0.754_877_666_2).fract()).collect();
        normalize(&mut q);
        let mut tmp_rows = vec![0.0; self.rows];
        let mut tmp_cols = vec![0.0; self.cols];
        let mut w = vec![0.0; dim];
        for _ in 0..steps {
            self.gram_apply(&q, &mut tmp_rows, &mut tmp_cols, &mut w);
            let a = dot(&w, &q);
            alphas.push(a);
            basis.push(q.clone());
            // full reorthogonalization, twice for stability
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&w, b);
                    axpy(-c, b, &mut w);
                }
            }
            let beta = norm2(&w).sqrt();
            if beta <= 1e-12 * a.abs().max(1.0) {
                break;
            }
            betas.push(beta);
            q.iter_mut().zip(&w).for_each(|(qi, wi)| *qi = wi / beta);
        }
        let k = alphas.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        SymmetricEigen::new(t).eigenvalues.iter().copied().collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Squared Euclidean norm.
#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Squared Euclidean distance.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}
