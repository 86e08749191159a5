//! Inner-window projectors for windowed operator norms.
//!
//! A projector P is stored through its eigendecomposition P = QΛQᵀ with the
//! negligible eigenvalues dropped, so that ‖PMP‖ = ‖ΛQᵀMQΛ‖ is the norm of a
//! small r×r matrix and an operator is only ever applied to the n×r block QΛ.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Grid, Spectral};
use crate::linalg::{Block, CMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowSpec {
    /// Indicator of |x| ≤ ρL.
    Sharp { rho: f64 },
    /// P = W·B·W: W a smooth spatial cutoff reaching zero at |x| = ρL over a
    /// width `edge`, B a smooth Fourier cutoff vanishing at |k| = band/ℏ.
    Smooth { rho: f64, edge: f64, band: f64 },
}

impl WindowSpec {
    pub fn smooth(rho: f64) -> Self {
        WindowSpec::Smooth {
            rho,
            edge: 0.5,
            band: 6.0,
        }
    }

    pub fn rho(&self) -> f64 {
        match *self {
            WindowSpec::Sharp { rho } | WindowSpec::Smooth { rho, .. } => rho,
        }
    }
}

/// Eigenvalues of P below this are dropped.
const RANK_CUTOFF: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct Window {
    pub spec: WindowSpec,
    pub grid: Grid,
    pub hbar: f64,
    /// Q, orthonormal columns.
    pub basis: Block,
    /// Λ, the retained eigenvalues of P.
    pub weights: Vec<f64>,
}

fn erfc_step(u: f64) -> f64 {
    0.5 * libm::erfc(u)
}

impl Window {
    pub fn new(grid: &Grid, spec: WindowSpec, hbar: f64) -> Result<Window> {
        if grid.d != 1 {
            return Err(Error::Unsupported("windowed norms are implemented for d = 1".into()));
        }
        let n = grid.n;
        let xs = grid.points();
        let radius = spec.rho() * grid.half_width;
        if !(spec.rho() > 0.0 && spec.rho() < 1.0) {
            return Err(Error::InvalidArgument(format!("window fraction {} not in (0, 1)", spec.rho())));
        }
        match spec {
            WindowSpec::Sharp { .. } => {
                let inside: Vec<usize> = (0..n).filter(|&i| xs[i].abs() <= radius).collect();
                if inside.is_empty() {
                    return Err(Error::InvalidArgument("window contains no grid points".into()));
                }
                let cols: Vec<Vec<Complex64>> = inside
                    .iter()
                    .map(|&i| {
                        let mut e = vec![Complex64::new(0.0, 0.0); n];
                        e[i] = Complex64::new(1.0, 0.0);
                        e
                    })
                    .collect();
                Ok(Window {
                    spec,
                    grid: *grid,
                    hbar,
                    weights: vec![1.0; cols.len()],
                    basis: Block::from_columns(n, &cols),
                })
            }
            WindowSpec::Smooth { edge, band, .. } => {
                let centre = radius - 4.0 * edge;
                if !(edge > 0.0 && centre > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "window edge {edge} too wide for radius {radius}"
                    )));
                }
                if !(hbar > 0.0) {
                    return Err(Error::InvalidArgument("hbar must be positive".into()));
                }
                let kb = band / hbar;
                if kb > grid.nyquist() {
                    return Err(Error::InvalidArgument(format!(
                        "band limit {kb} exceeds the grid Nyquist wavenumber {}",
                        grid.nyquist()
                    )));
                }
                // Flush the far tails to zero; subnormal entries break the eigensolver.
                let flush = |v: f64| if v.abs() < 1e-30 { 0.0 } else { v };
                let w: Vec<f64> = xs.iter().map(|x| flush(erfc_step((x.abs() - centre) / edge))).collect();
                let sk = kb / 8.0;
                let mut b: Vec<Complex64> = grid
                    .wavenumbers()
                    .iter()
                    .map(|k| Complex64::new(erfc_step((k.abs() - (kb - 4.0 * sk)) / sk), 0.0))
                    .collect();
                Spectral::new(grid).inverse(&mut b);
                let p = DMatrix::from_fn(n, n, |i, j| flush(w[i] * b[(i + n - j) % n].re * w[j]));
                let p = (&p + p.transpose()) * 0.5;
                let eig = SymmetricEigen::new(p);
                let mut order: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > RANK_CUTOFF).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
                let weights: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
                let cols: Vec<Vec<Complex64>> = order
                    .iter()
                    .map(|&k| {
                        let v = eig.eigenvectors.column(k);
                        // Fix the sign so the decomposition is reproducible.
                        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
                        let sgn = if pivot < 0.0 { -1.0 } else { 1.0 };
                        v.iter().map(|&x| Complex64::new(sgn * x, 0.0)).collect()
                    })
                    .collect();
                Ok(Window {
                    spec,
                    grid: *grid,
                    hbar,
                    weights,
                    basis: Block::from_columns(n, &cols),
                })
            }
        }
    }

    /// Memoised [`Window::new`].
    pub fn cached(grid: &Grid, spec: WindowSpec, hbar: f64) -> Result<Arc<Window>> {
        type Map = HashMap<String, Arc<Window>>;
        static CACHE: OnceLock<Mutex<Map>> = OnceLock::new();
        let key = format!("{grid:?}|{spec:?}|{hbar:e}");
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(w) = cache.lock().expect("window cache").get(&key) {
            return Ok(w.clone());
        }
        let w = Arc::new(Window::new(grid, spec, hbar)?);
        cache.lock().expect("window cache").insert(key, w.clone());
        Ok(w)
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    /// The n×r block QΛ that operators act on.
    pub fn right(&self) -> Block {
        let mut out = self.basis.clone();
        for (c, &l) in self.weights.iter().enumerate() {
            out.col_mut(c).iter_mut().for_each(|z| *z *= l);
        }
        out
    }

    /// ΛQᵀ·image for an n×r image block, giving the r×r compressed operator.
    pub fn compress(&self, image: &Block) -> CMatrix {
        let r = self.rank();
        assert_eq!(image.r, r, "image block has the wrong width");
        CMatrix::from_fn(r, r, |a, b| {
            let q = self.basis.col(a);
            let v = image.col(b);
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, y) in q.iter().zip(v) {
                acc += x.re * y;
            }
            acc * self.weights[a]
        })
    }

    pub fn compress_operator(&self, m: &CMatrix) -> CMatrix {
        self.compress(&m.apply_block(&self.right()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_projector_is_band_limited_and_bounded() {
        let grid = Grid::desk();
        let w = Window::new(&grid, WindowSpec::smooth(0.5), 1.0).unwrap();
        assert!(w.rank() > 10 && w.rank() < 60, "rank {}", w.rank());
        assert!(w.weights.iter().all(|&l| l > 0.0 && l <= 1.0 + 1e-12));
        assert!(w.weights[0] > 0.99);
        // Columns of QΛ vanish outside |x| ≤ ρL.
        let right = w.right();
        for c in 0..w.rank() {
            for (i, x) in grid.points().iter().enumerate() {
                if x.abs() > 6.0 {
                    assert!(right.col(c)[i].norm() < 1e-7);
                }
            }
        }
        // Smaller ℏ admits more momenta.
        let w2 = Window::new(&grid, WindowSpec::smooth(0.5), 0.5).unwrap();
        assert!(w2.rank() > w.rank());
    }

    #[test]
    fn sharp_window_selects_inner_points() {
        let grid = Grid::new(1, 64, 8.0, 0.5).unwrap();
        let w = Window::new(&grid, WindowSpec::Sharp { rho: 0.5 }, 1.0).unwrap();
        let inside = grid.points().iter().filter(|x| x.abs() <= 4.0).count();
        assert_eq!(w.rank(), inside);
    }

    #[test]
    fn oversized_band_is_rejected() {
        let grid = Grid::new(1, 64, 12.0, 0.5).unwrap();
        assert!(Window::new(&grid, WindowSpec::smooth(0.5), 0.01).is_err());
    }
}
