//! Dense matrices just large enough for species-coupling blocks (n <= 10 or so).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>, // row major
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
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

    pub fn mul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.get(i, k);
                for j in 0..n {
                    out.data[i * n + j] += aik * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &SquareMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Inverse by LU with partial pivoting together with the condition
    /// estimate ||A||_inf * ||A^-1||_inf. Errors when the estimate exceeds
    /// 1e12 or a pivot vanishes.
    pub fn invert(&self) -> Result<(SquareMatrix, f64)> {
        let n = self.n;
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();

        for col in 0..n {
            let mut piv = col;
            let mut best = lu[perm[col] * n + col].abs();
            for row in col + 1..n {
                let v = lu[perm[row] * n + col].abs();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if best < 1e-300 {
                return Err(Error::IllConditioned { cond: f64::INFINITY });
            }
            perm.swap(col, piv);
            let diag = lu[perm[col] * n + col];
            for row in col + 1..n {
                let factor = lu[perm[row] * n + col] / diag;
                lu[perm[row] * n + col] = factor;
                for j in col + 1..n {
                    lu[perm[row] * n + j] -= factor * lu[perm[col] * n + j];
                }
            }
        }

        let mut inv = SquareMatrix::zeros(n);
        let mut x = vec![0.0; n];
        for rhs_col in 0..n {
            for i in 0..n {
                let mut v = if perm[i] == rhs_col { 1.0 } else { 0.0 };
                for j in 0..i {
                    v -= lu[perm[i] * n + j] * x[j];
                }
                x[i] = v;
            }
            for i in (0..n).rev() {
                let mut v = x[i];
                for j in i + 1..n {
                    v -= lu[perm[i] * n + j] * x[j];
                }
                x[i] = v / lu[perm[i] * n + i];
            }
            for i in 0..n {
                inv.set(i, rhs_col, x[i]);
            }
        }

        let cond = self.inf_norm() * inv.inf_norm();
        if !cond.is_finite() || cond > 1e12 {
            return Err(Error::IllConditioned { cond });
        }
        Ok((inv, cond))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_small_matrix() {
        let a = SquareMatrix::from_rows(&[vec![4.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let (inv, cond) = a.invert().unwrap();
        let prod = a.mul(&inv);
        assert!(prod.max_abs_diff(&SquareMatrix::identity(2)) < 1e-14);
        assert!(cond > 1.0 && cond < 100.0);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = SquareMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let (inv, _) = a.invert().unwrap();
        assert!(a.mul(&inv).max_abs_diff(&SquareMatrix::identity(3)) < 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        match a.invert() {
            Err(Error::IllConditioned { .. }) => {}
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }

    #[test]
    fn near_singular_reports_condition() {
        let a = SquareMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-14]]).unwrap();
        match a.invert() {
            Err(Error::IllConditioned { cond }) => assert!(cond > 1e12),
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }
}
