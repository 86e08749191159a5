use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::operator::{KernelOperator, Label};
use super::spectral::Spectral;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Closed-form propagators used as oracles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExactKind {
    Free,
    Harmonic { omega0: f64 },
}

/// ωτ must stay at least this far below the focal time π.
const FOCAL_MARGIN: f64 = 1e-3;

fn harmonic_angle(omega0: f64, tau: f64) -> Result<f64> {
    let theta = omega0 * tau;
    if !(theta > 0.0 && theta < PI - FOCAL_MARGIN) {
        return Err(Error::TimeStepTooLarge(format!(
            "omega0*(t - s) = {theta} is at or beyond the first focal time"
        )));
    }
    Ok(theta)
}

fn check_span(s: f64, t: f64, hbar: f64) -> Result<f64> {
    let tau = t - s;
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("need t > s, got s = {s}, t = {t}")));
    }
    if !(hbar > 0.0) {
        return Err(Error::InvalidArgument(format!("hbar must be positive, got {hbar}")));
    }
    Ok(tau)
}

/// Continuum kernel K(t, s, x, y), principal branch (2πiτℏ)^{−1/2} =
/// (2πτℏ)^{−1/2}e^{−iπ/4}.
pub fn kernel_value(kind: ExactKind, s: f64, t: f64, x: f64, y: f64, hbar: f64) -> Result<Complex64> {
    let tau = check_span(s, t, hbar)?;
    let branch = Complex64::from_polar(1.0, -PI / 4.0);
    Ok(match kind {
        ExactKind::Free => {
            let phase = (x - y).powi(2) / (2.0 * hbar * tau);
            branch * Complex64::from_polar((2.0 * PI * tau * hbar).powf(-0.5), phase)
        }
        ExactKind::Harmonic { omega0 } => {
            let theta = harmonic_angle(omega0, tau)?;
            let action = omega0 * ((x * x + y * y) * theta.cos() - 2.0 * x * y) / (2.0 * theta.sin());
            let amp = (omega0 / (2.0 * PI * hbar * theta.sin())).sqrt();
            branch * Complex64::from_polar(amp, action / hbar)
        }
    })
}

/// Grid kernel. The free part is the exact discrete free evolution (a
/// circulant built from the FFT symbol); the harmonic kernel multiplies it
/// entrywise by the smooth ratio of the Mehler and free kernels.
pub fn exact_propagator(kind: ExactKind, s: f64, t: f64, grid: &Grid, hbar: f64) -> Result<KernelOperator> {
    if grid.d != 1 {
        return Err(Error::Unsupported("exact propagators are implemented for d = 1".into()));
    }
    let tau = check_span(s, t, hbar)?;
    let n = grid.n;
    let col = Spectral::new(grid).free_column(tau, hbar);
    let matrix = match kind {
        ExactKind::Free => CMatrix::from_fn(n, n, |i, j| col[(i + n - j) % n]),
        ExactKind::Harmonic { omega0 } => {
            let theta = harmonic_angle(omega0, tau)?;
            let amp = (theta / theta.sin()).sqrt();
            let (c, sn) = (theta.cos(), theta.sin());
            let xs = grid.points();
            CMatrix::from_fn(n, n, |i, j| {
                let (x, y) = (xs[i], xs[j]);
                let sh = omega0 * ((x * x + y * y) * c - 2.0 * x * y) / (2.0 * sn);
                let sf = (x - y).powi(2) / (2.0 * tau);
                col[(i + n - j) % n] * Complex64::from_polar(amp, (sh - sf) / hbar)
            })
        }
    };
    KernelOperator::new(Label::UExact, s, t, hbar, *grid, matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{compressed_norm, NormMethod, Window, WindowSpec};
    use crate::kernels::compose_subdivision;

    #[test]
    fn free_kernel_on_the_diagonal() {
        let k = kernel_value(ExactKind::Free, 0.0, 0.3, 1.2, 1.2, 0.5).unwrap();
        let want = (2.0 * PI * 0.3 * 0.5).powf(-0.5);
        assert!((k.norm() - want).abs() < 1e-14);
        assert!((k.arg() + PI / 4.0).abs() < 1e-14);
    }

    #[test]
    fn harmonic_small_time_limit_is_free() {
        let h = ExactKind::Harmonic { omega0: 1.0 };
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.2), (1.0, 0.9)] {
            let kh = kernel_value(h, 0.0, 1e-3, x, y, 1.0).unwrap();
            let kf = kernel_value(ExactKind::Free, 0.0, 1e-3, x, y, 1.0).unwrap();
            // The ratio is exp(−iτ(x² + xy + y²)/6)·(1 + τ²/12) to leading order.
            let expect = Complex64::from_polar(1.0, -1e-3 * (x * x + x * y + y * y) / 6.0);
            assert!((kh / kf - expect).norm() < 1e-6);
        }
        assert!(kernel_value(h, 0.0, PI, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn harmonic_group_law_on_the_window() {
        let grid = Grid::desk();
        let h = ExactKind::Harmonic { omega0: 1.0 };
        let a = exact_propagator(h, 0.0, 0.2, &grid, 1.0).unwrap();
        let b = exact_propagator(h, 0.2, 0.5, &grid, 1.0).unwrap();
        let ab = compose_subdivision(&[a, b]).unwrap();
        let direct = exact_propagator(h, 0.0, 0.5, &grid, 1.0).unwrap();
        let window = Window::new(&grid, WindowSpec::smooth(grid.rho), 1.0).unwrap();
        let diff = window.compress_operator(&ab.difference(&direct).unwrap().matrix);
        let err = compressed_norm(&diff, NormMethod::DenseSvd).unwrap().value;
        assert!(err < 1e-8, "{err}");
    }
}
