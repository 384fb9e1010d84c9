//! Small dense symmetric linear algebra: Cholesky factorization, solves, and
//! SPD inversion. Dimensions here are the number of model parameters, so a
//! straightforward O(n^3) implementation is plenty.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix must be square");
            data.extend_from_slice(row);
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add_assign(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// Cholesky factor L with A = L L^T. Fails if A is not positive definite.
    pub fn cholesky(&self) -> Option<SquareMatrix> {
        let n = self.n;
        let mut l = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return None;
                    }
                    l.set(i, j, sum.sqrt());
                } else {
                    l.set(i, j, sum / l.get(j, j));
                }
            }
        }
        Some(l)
    }

    /// Solves A x = b for SPD A via Cholesky.
    pub fn solve_spd(&self, b: &[f64]) -> Result<Vec<f64>> {
        let l = self
            .cholesky()
            .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
        Ok(l.chol_solve(b))
    }

    /// Inverse of an SPD matrix via Cholesky, column by column.
    pub fn inverse_spd(&self) -> Result<SquareMatrix> {
        let n = self.n;
        let l = self
            .cholesky()
            .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
        let mut inv = SquareMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for col in 0..n {
            e[col] = 1.0;
            let x = l.chol_solve(&e);
            for row in 0..n {
                inv.set(row, col, x[row]);
            }
            e[col] = 0.0;
        }
        Ok(inv)
    }

    /// Forward/backward substitution given self = L from a Cholesky factorization.
    fn chol_solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.get(i, k) * y[k];
            }
            y[i] = sum / self.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= self.get(k, i) * x[k];
            }
            x[i] = sum / self.get(i, i);
        }
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solve_round_trip() {
        let a = SquareMatrix::from_rows(&[
            vec![4.0, 2.0, 0.6],
            vec![2.0, 5.0, 1.5],
            vec![0.6, 1.5, 3.0],
        ]);
        let x_true = vec![1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a.get(i, j) * x_true[j]).sum())
            .collect();
        let x = a.solve_spd(&b).unwrap();
        for (got, want) in x.iter().zip(&x_true) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = SquareMatrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0]]);
        let inv = a.inverse_spd().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let prod: f64 = (0..2).map(|k| a.get(i, k) * inv.get(k, j)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(a.cholesky().is_none());
        assert!(a.solve_spd(&[1.0, 1.0]).is_err());
    }
}
