use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::Grid;
use crate::linalg::CMatrix;

/// Forward and inverse FFT plans for one periodic 1D grid. The inverse is
/// normalised by 1/n.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            n: grid.n,
            fwd: planner.plan_fft_forward(grid.n),
            inv: planner.plan_fft_inverse(grid.n),
            k: grid.wavenumbers(),
        }
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn forward(&self, v: &mut [Complex64]) {
        self.fwd.process(v);
    }

    pub fn inverse(&self, v: &mut [Complex64]) {
        self.inv.process(v);
        let s = 1.0 / self.n as f64;
        v.iter_mut().for_each(|z| *z *= s);
    }

    /// Multiplies the spectrum of `v` by `symbol` (in FFT order).
    pub fn multiply(&self, v: &mut [Complex64], symbol: &[Complex64]) {
        self.forward(v);
        v.iter_mut().zip(symbol).for_each(|(a, b)| *a *= b);
        self.inverse(v);
    }

    /// Symbol of the exact free evolution over dt: exp(−iℏk²dt/2).
    pub fn free_symbol(&self, dt: f64, hbar: f64) -> Vec<Complex64> {
        self.k
            .iter()
            .map(|k| Complex64::from_polar(1.0, -0.5 * hbar * k * k * dt))
            .collect()
    }

    /// First column c of the circulant discrete free propagator, so that the
    /// operator has entries c[(i − j) mod n].
    pub fn free_column(&self, dt: f64, hbar: f64) -> Vec<Complex64> {
        let mut c = self.free_symbol(dt, hbar);
        self.inverse(&mut c);
        c
    }

    pub fn laplacian(&self, v: &[Complex64]) -> Vec<Complex64> {
        let symbol: Vec<Complex64> = self.k.iter().map(|k| Complex64::new(-k * k, 0.0)).collect();
        let mut out = v.to_vec();
        self.multiply(&mut out, &symbol);
        out
    }
}

/// Dense circulant matrix with first column `col`.
pub fn circulant(col: &[Complex64]) -> CMatrix {
    let n = col.len();
    CMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_column_is_unitary_circulant() {
        let g = Grid::new(1, 64, 6.0, 0.5).unwrap();
        let sp = Spectral::new(&g);
        let m = circulant(&sp.free_column(0.3, 1.0));
        let prod = m.adjoint().matmul(&m);
        assert!(prod.max_abs_diff(&CMatrix::identity(64)) < 1e-13);
        let zero = circulant(&sp.free_column(0.0, 1.0));
        assert!(zero.max_abs_diff(&CMatrix::identity(64)) < 1e-15);
    }

    #[test]
    fn laplacian_of_plane_wave() {
        let g = Grid::new(1, 64, 6.0, 0.5).unwrap();
        let sp = Spectral::new(&g);
        let k = g.wavenumbers()[3];
        let v: Vec<Complex64> = g.points().iter().map(|x| Complex64::from_polar(1.0, k * x)).collect();
        let lap = sp.laplacian(&v);
        for (a, b) in lap.iter().zip(&v) {
            assert!((a + b * k * k).norm() < 1e-12);
        }
    }
}
