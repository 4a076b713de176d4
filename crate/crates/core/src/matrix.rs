//! Dense row-major complex matrices and a few vector helpers.
//!
//! All reductions run in ascending index order so results are bit-reproducible
//! regardless of how rows are distributed across threads.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{check_len, Result};

/// Dense complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        check_len("CMatrix::from_vec", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from `f(row, col)`, evaluating rows in parallel.
    pub fn from_fn<F>(rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> Complex64 + Sync,
    {
        let mut data = vec![Complex64::new(0.0, 0.0); rows * cols];
        if cols > 0 {
            data.par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = f(r, c);
                }
            });
        }
        Self { rows, cols, data }
    }

    /// Column vector (`n x 1`).
    pub fn column(values: &[Complex64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_vectors(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    /// `A x` for a complex vector.
    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len("CMatrix::mul_vec", self.cols, x.len())?;
        Ok((0..self.rows)
            .into_par_iter()
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
            })
            .collect())
    }

    /// `A x` for a real vector.
    pub fn mul_real_vec(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        check_len("CMatrix::mul_real_vec", self.cols, x.len())?;
        Ok((0..self.rows)
            .into_par_iter()
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(Complex64::new(0.0, 0.0), |acc, (a, &b)| acc + a * b)
            })
            .collect())
    }

    /// `A^H y`.
    pub fn adjoint_mul_vec(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len("CMatrix::adjoint_mul_vec", self.rows, y.len())?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (row, &yr) in self.row_vectors().zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * yr;
            }
        }
        Ok(out)
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    /// Largest `|A_ij - conj(A_ji)|` relative to the largest entry magnitude.
    pub fn hermitian_defect(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let scale = self.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    }
}

/// `<a, b> = sum conj(a_i) b_i`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter()
        .zip(b)
        .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

pub fn real_norm_sqr(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn to_complex(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}
