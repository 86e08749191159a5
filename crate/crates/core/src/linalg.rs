//! Dense complex matrices and the small real d×d helpers used by the flow.
//!
//! All reductions run in a fixed sequential order so results do not depend on
//! scheduling.

use num_complex::Complex64;

use crate::potential::{Matrix, MAX_DIM};

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Matrix product; each entry is a sequential dot product.
    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let bt = other.transpose();
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.cols {
                out.data[i * other.cols + j] = dot(a, bt.row(j));
            }
        }
        out
    }

    /// Applies the matrix to each column of a column-major block.
    pub fn apply_block(&self, block: &Block) -> Block {
        assert_eq!(self.cols, block.n, "apply shape mismatch");
        let mut out = Block::zeros(self.rows, block.r);
        for i in 0..self.rows {
            let a = self.row(i);
            for c in 0..block.r {
                out.data[c * self.rows + i] = dot(a, block.col(c));
            }
        }
        out
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn transpose(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMatrix {
        let mut t = self.transpose();
        t.data.iter_mut().for_each(|z| *z = z.conj());
        t
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&mut self, s: Complex64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Column-major n×r complex block: r vectors of length n stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub n: usize,
    pub r: usize,
    pub data: Vec<Complex64>,
}

impl Block {
    pub fn zeros(n: usize, r: usize) -> Self {
        Block {
            n,
            r,
            data: vec![Complex64::new(0.0, 0.0); n * r],
        }
    }

    pub fn from_columns(n: usize, cols: &[Vec<Complex64>]) -> Self {
        let mut data = Vec::with_capacity(n * cols.len());
        for c in cols {
            assert_eq!(c.len(), n);
            data.extend_from_slice(c);
        }
        Block {
            n,
            r: cols.len(),
            data,
        }
    }

    #[inline]
    pub fn col(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.n..(c + 1) * self.n]
    }

    #[inline]
    pub fn col_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.data[c * self.n..(c + 1) * self.n]
    }

    pub fn sub(&self, other: &Block) -> Block {
        assert_eq!((self.n, self.r), (other.n, other.r));
        Block {
            n: self.n,
            r: self.r,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Unconjugated dot product Σ a_k b_k in index order.
#[inline]
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re - x.im * y.im;
        im += x.re * y.im + x.im * y.re;
    }
    Complex64::new(re, im)
}

/// Conjugated inner product Σ conj(a_k) b_k.
#[inline]
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re, im)
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

// ---- real d×d blocks (d ≤ 2), padded to MAX_DIM ----

pub fn mat_zero() -> Matrix {
    [[0.0; MAX_DIM]; MAX_DIM]
}

pub fn mat_identity(d: usize) -> Matrix {
    let mut m = mat_zero();
    for (i, row) in m.iter_mut().enumerate().take(d) {
        row[i] = 1.0;
    }
    m
}

pub fn mat_mul(d: usize, a: &Matrix, b: &Matrix) -> Matrix {
    let mut m = mat_zero();
    for i in 0..d {
        for j in 0..d {
            m[i][j] = (0..d).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

pub fn mat_transpose(d: usize, a: &Matrix) -> Matrix {
    let mut m = mat_zero();
    for i in 0..d {
        for j in 0..d {
            m[i][j] = a[j][i];
        }
    }
    m
}

pub fn mat_det(d: usize, a: &Matrix) -> f64 {
    match d {
        1 => a[0][0],
        _ => a[0][0] * a[1][1] - a[0][1] * a[1][0],
    }
}

pub fn mat_trace(d: usize, a: &Matrix) -> f64 {
    (0..d).map(|i| a[i][i]).sum()
}

/// Inverse, or `None` when the determinant vanishes.
pub fn mat_inv(d: usize, a: &Matrix) -> Option<Matrix> {
    let det = mat_det(d, a);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut m = mat_zero();
    match d {
        1 => m[0][0] = 1.0 / det,
        _ => {
            m[0][0] = a[1][1] / det;
            m[0][1] = -a[0][1] / det;
            m[1][0] = -a[1][0] / det;
            m[1][1] = a[0][0] / det;
        }
    }
    Some(m)
}

pub fn mat_vec(d: usize, a: &Matrix, v: &[f64]) -> [f64; MAX_DIM] {
    let mut out = [0.0; MAX_DIM];
    for i in 0..d {
        out[i] = (0..d).map(|k| a[i][k] * v[k]).sum();
    }
    out
}

/// Max-abs entry of the leading d×d block.
pub fn mat_max_abs(d: usize, a: &Matrix) -> f64 {
    let mut m = 0.0f64;
    for row in a.iter().take(d) {
        for v in row.iter().take(d) {
            m = m.max(v.abs());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn matmul_and_apply_agree() {
        let a = CMatrix::from_fn(3, 3, |i, j| c(i as f64 + 1.0, j as f64 - 0.5));
        let b = CMatrix::from_fn(3, 2, |i, j| c(j as f64, i as f64 * 0.3));
        let ab = a.matmul(&b);
        let block = Block::from_columns(3, &[(0..3).map(|i| b.get(i, 0)).collect(), (0..3).map(|i| b.get(i, 1)).collect()]);
        let applied = a.apply_block(&block);
        for i in 0..3 {
            for j in 0..2 {
                assert!((ab.get(i, j) - applied.col(j)[i]).norm() < 1e-14);
            }
        }
        assert_eq!(CMatrix::identity(3).matmul(&a), a);
    }

    #[test]
    fn small_inverse() {
        let a = [[2.0, 1.0], [0.5, 3.0]];
        let inv = mat_inv(2, &a).unwrap();
        let id = mat_mul(2, &a, &inv);
        assert!((id[0][0] - 1.0).abs() < 1e-15 && id[0][1].abs() < 1e-15);
        assert!(mat_inv(1, &[[0.0, 0.0], [0.0, 0.0]]).is_none());
    }
}
