use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic tensor grid on [−L, L)^d with n points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
    pub half_width: f64,
    /// Inner window fraction used by default norm windows.
    pub rho: f64,
}

impl Grid {
    pub fn new(d: usize, n: usize, half_width: f64, rho: f64) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return Err(Error::InvalidArgument(format!("grid dimension {d} not in {{1, 2}}")));
        }
        if n < 64 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "grid size {n} must be a power of two and at least 64"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidArgument("half_width must be positive".into()));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidArgument(format!("window fraction {rho} not in (0, 1)")));
        }
        Ok(Grid {
            d,
            n,
            half_width,
            rho,
        })
    }

    /// The desk-scale default: d = 1, n = 512, L = 12, ρ = 0.5.
    pub fn desk() -> Self {
        Grid {
            d: 1,
            n: 512,
            half_width: 12.0,
            rho: 0.5,
        }
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.half_width + self.dx() * i as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Total number of grid nodes, n^d.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n as i64;
        let scale = 2.0 * std::f64::consts::PI / (self.n as f64 * self.dx());
        (0..n)
            .map(|i| if i < n / 2 { i } else { i - n } as f64 * scale)
            .collect()
    }

    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.dx()
    }

    /// Quadrature weight Δx^d.
    pub fn weight(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }
}

/// Complex samples on a [`Grid`] (row-major in d = 2).
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    pub grid: Grid,
    pub values: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "wavefunction has {} samples, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("wavefunction has non-finite samples".into()));
        }
        Ok(WaveFunction { grid, values })
    }

    /// Normalized Gaussian packet centered at `x0` with width `sigma` and mean
    /// momentum `p0` (wavenumber p0/ℏ passed as `k0`). d = 1 only.
    pub fn gaussian(grid: Grid, x0: f64, sigma: f64, k0: f64) -> Self {
        let values = grid
            .points()
            .iter()
            .map(|&x| {
                let r = (x - x0) / sigma;
                Complex64::from_polar((-0.5 * r * r).exp(), k0 * x)
            })
            .collect();
        let mut f = WaveFunction { grid, values };
        let norm = f.l2_norm();
        f.values.iter_mut().for_each(|z| *z /= norm);
        f
    }

    pub fn l2_norm(&self) -> f64 {
        crate::linalg::norm(&self.values) * self.grid.weight().sqrt()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.grid.d != 1 {
            return Err(Error::Unsupported("CSV export is one-dimensional".into()));
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,re,im")?;
        for (x, z) in self.grid.points().iter().zip(&self.values) {
            writeln!(out, "{x:.17e},{:.17e},{:.17e}", z.re, z.im)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`WaveFunction::write_csv`]; the abscissae must
    /// match `grid` to 1e−9.
    pub fn read_csv(grid: Grid, path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut values = Vec::with_capacity(grid.n);
        for (lineno, line) in file.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 1)))?;
            if cols.len() != 3 {
                return Err(Error::InvalidArgument(format!(
                    "line {}: expected 3 columns",
                    lineno + 1
                )));
            }
            let i = values.len();
            if i >= grid.n || (cols[0] - grid.point(i)).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "line {}: abscissa {} does not match the grid",
                    lineno + 1,
                    cols[0]
                )));
            }
            values.push(Complex64::new(cols[1], cols[2]));
        }
        WaveFunction::new(grid, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_wavenumbers() {
        let g = Grid::desk();
        assert_eq!(g.dx() * g.n as f64, 2.0 * g.half_width);
        let k = g.wavenumbers();
        assert_eq!(k[0], 0.0);
        assert!((k[g.n / 2] + g.nyquist()).abs() < 1e-12);
        assert!(Grid::new(1, 48, 12.0, 0.5).is_err());
        assert!(Grid::new(1, 96, 12.0, 0.5).is_err());
    }

    #[test]
    fn gaussian_is_normalized_and_csv_roundtrips() {
        let g = Grid::new(1, 64, 6.0, 0.5).unwrap();
        let f = WaveFunction::gaussian(g, 0.5, 0.8, 1.0);
        assert!((f.l2_norm() - 1.0).abs() < 1e-14);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        f.write_csv(&path).unwrap();
        let back = WaveFunction::read_csv(g, &path).unwrap();
        for (a, b) in f.values.iter().zip(&back.values) {
            assert!((a - b).norm() < 1e-15);
        }
    }
}
