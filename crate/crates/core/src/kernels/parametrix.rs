//! Short-time parametrices E⁽ᴺ⁾ and their residual kernels G⁽ᴺ⁾.
//!
//! Kernels are assembled in Hadamard form: the exact discrete free kernel
//! times e^{i(S − S_free)/ℏ} times the amplitude. For V = 0 this reproduces
//! the exact free propagator, and the Nyquist guard only has to cover the
//! slowly varying deviation S − S_free.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::operator::{KernelOperator, Label};
use super::spectral::Spectral;
use super::tables::{cached_action_table, interp_column, x_laplacian, ActionTable, TableOptions};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::potential::Potential;

/// Fraction of the grid Nyquist wavenumber a phase gradient may reach.
pub const NYQUIST_MARGIN: f64 = 0.8;

fn check_nyquist(table: &ActionTable, hbar: f64) -> Result<()> {
    let ratio = table.max_phase_gradient / hbar;
    let limit = NYQUIST_MARGIN * PI / table.grid.dx();
    if ratio > limit {
        return Err(Error::UndersampledPhase { ratio, limit });
    }
    Ok(())
}

fn check_hbar(hbar: f64) -> Result<()> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::InvalidArgument(format!("hbar must be positive, got {hbar}")));
    }
    Ok(())
}

/// Entrywise D_free(t − s)[i − j]·e^{i dev_ij/ℏ}·amp_ij.
fn hadamard(table: &ActionTable, hbar: f64, amp: Option<&[Complex64]>) -> CMatrix {
    let n = table.grid.n;
    let col = Spectral::new(&table.grid).free_column(table.t - table.s, hbar);
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let mut z = col[(i + n - j) % n] * Complex64::from_polar(1.0, table.dev[k] / hbar);
            if let Some(a) = amp {
                z *= a[k];
            }
            m.data[k] = z;
        }
    }
    m
}

fn tables_for(
    p: &dyn Potential,
    s: f64,
    t: f64,
    grid: &Grid,
    hbar: f64,
    opts: &TableOptions,
    keep_paths: bool,
) -> Result<std::sync::Arc<ActionTable>> {
    check_hbar(hbar)?;
    let table = cached_action_table(p, s, t, grid, opts, keep_paths)?;
    check_nyquist(&table, hbar)?;
    Ok(table)
}

/// E⁽⁰⁾(t, s) with default table options.
pub fn build_e0(p: &dyn Potential, s: f64, t: f64, grid: &Grid, hbar: f64) -> Result<KernelOperator> {
    build_e0_with(p, s, t, grid, hbar, &TableOptions::default())
}

pub fn build_e0_with(p: &dyn Potential, s: f64, t: f64, grid: &Grid, hbar: f64, opts: &TableOptions) -> Result<KernelOperator> {
    let table = tables_for(p, s, t, grid, hbar, opts, false)?;
    KernelOperator::new(Label::E0, s, t, hbar, *grid, hadamard(&table, hbar, None))
}

/// Amplitudes a₁, …, a_N over the grid pairs, row-major in (x_i, y_j).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeTable {
    pub order: usize,
    pub s: f64,
    pub t: f64,
    pub hbar: f64,
    pub n: usize,
    /// `a[j − 1]` holds a_j.
    pub a: Vec<Vec<f64>>,
}

impl AmplitudeTable {
    /// a⁽ᴺ⁾ = Σ_j (iℏ⁻¹)^{1−j} a_j.
    pub fn combined(&self) -> Vec<Complex64> {
        let factor = Complex64::new(0.0, 1.0 / self.hbar);
        let mut out: Vec<Complex64> = self.a[0].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for (idx, aj) in self.a.iter().enumerate().skip(1) {
            let c = factor.powi(-(idx as i32));
            out.iter_mut().zip(aj).for_each(|(o, &v)| *o += c * v);
        }
        out
    }
}

fn guard_a1(a1: &[f64]) -> Result<()> {
    let worst = a1.iter().copied().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(worst >= 0.5) {
        return Err(Error::AmplitudeGuard { value: worst });
    }
    Ok(())
}

/// a₂ = −½a₁∫ₛᵗ Δₓa₁(τ, s, x(τ), y)/a₁(τ, s, x(τ), y) dτ, with a₁(τ, s, ·, y)
/// tabulated at each Gauss–Legendre node time.
fn second_amplitude(p: &dyn Potential, table: &ActionTable, opts: &TableOptions) -> Result<Vec<f64>> {
    let grid = table.grid;
    let n = grid.n;
    let sigma = table.t - table.s;
    let m = table.nodes.len();
    let mut integral = vec![0.0; n * n];
    for (k, (&u, &w)) in table.nodes.iter().zip(&table.weights).enumerate() {
        let inner = cached_action_table(p, table.s, table.s + sigma * u, &grid, opts, false)?;
        guard_a1(&inner.a1)?;
        let lap = x_laplacian(&inner.a1, n, grid.dx());
        for j in 0..n {
            for i in 0..n {
                let idx = i * n + j;
                let x = table.paths[idx * m + k];
                let ratio = interp_column(&lap, &grid, j, x) / interp_column(&inner.a1, &grid, j, x);
                integral[idx] += w * sigma * ratio;
            }
        }
    }
    Ok(table.a1.iter().zip(&integral).map(|(a, q)| -0.5 * a * q).collect())
}

pub fn build_amplitudes(
    p: &dyn Potential,
    s: f64,
    t: f64,
    grid: &Grid,
    order: usize,
    hbar: f64,
    tau_nodes: usize,
) -> Result<AmplitudeTable> {
    let opts = TableOptions {
        gl_nodes: tau_nodes,
        ..TableOptions::default()
    };
    build_amplitudes_with(p, s, t, grid, order, hbar, &opts)
}

pub fn build_amplitudes_with(
    p: &dyn Potential,
    s: f64,
    t: f64,
    grid: &Grid,
    order: usize,
    hbar: f64,
    opts: &TableOptions,
) -> Result<AmplitudeTable> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidArgument(format!("amplitude order {order} not in {{1, 2}}")));
    }
    check_hbar(hbar)?;
    let table = cached_action_table(p, s, t, grid, opts, order == 2)?;
    amplitudes_from(p, &table, order, hbar, opts)
}

fn amplitudes_from(p: &dyn Potential, table: &ActionTable, order: usize, hbar: f64, opts: &TableOptions) -> Result<AmplitudeTable> {
    guard_a1(&table.a1)?;
    let mut a = vec![table.a1.clone()];
    if order == 2 {
        a.push(second_amplitude(p, table, opts)?);
    }
    Ok(AmplitudeTable {
        order,
        s: table.s,
        t: table.t,
        hbar,
        n: table.grid.n,
        a,
    })
}

/// E⁽ᴺ⁾ and G⁽ᴺ⁾ for N ∈ {0, 1, 2} with default table options.
pub fn build_en_gn(
    p: &dyn Potential,
    s: f64,
    t: f64,
    grid: &Grid,
    hbar: f64,
    order: usize,
) -> Result<(KernelOperator, KernelOperator)> {
    build_en_gn_with(p, s, t, grid, hbar, order, &TableOptions::default())
}

pub fn build_en_gn_with(
    p: &dyn Potential,
    s: f64,
    t: f64,
    grid: &Grid,
    hbar: f64,
    order: usize,
    opts: &TableOptions,
) -> Result<(KernelOperator, KernelOperator)> {
    if order > 2 {
        return Err(Error::InvalidArgument(format!("parametrix order {order} not in {{0, 1, 2}}")));
    }
    let table = tables_for(p, s, t, grid, hbar, opts, order == 2)?;
    let sigma = t - s;
    let n = grid.n;
    if order == 0 {
        let e = hadamard(&table, hbar, None);
        let coef = Complex64::new(0.0, 0.5 * hbar * sigma);
        let amp: Vec<Complex64> = table.lap_omega.iter().map(|&l| coef * l).collect();
        let g = hadamard(&table, hbar, Some(&amp));
        return Ok((
            KernelOperator::new(Label::E0, s, t, hbar, *grid, e)?,
            KernelOperator::new(Label::G0, s, t, hbar, *grid, g)?,
        ));
    }
    let amps = amplitudes_from(p, &table, order, hbar, opts)?;
    let e = hadamard(&table, hbar, Some(&amps.combined()));
    // −(−iℏ)^{N+1}/2 · Δₓa_N
    let coef = -Complex64::new(0.0, -hbar).powi(order as i32 + 1) * 0.5;
    let lap = x_laplacian(&amps.a[order - 1], n, grid.dx());
    let amp: Vec<Complex64> = lap.iter().map(|&l| coef * l).collect();
    let g = hadamard(&table, hbar, Some(&amp));
    let label = order as u8;
    Ok((
        KernelOperator::new(Label::EN(label), s, t, hbar, *grid, e)?,
        KernelOperator::new(Label::GN(label), s, t, hbar, *grid, g)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{exact_propagator, ExactKind};
    use crate::potential::CatalogPotential;

    fn small() -> Grid {
        Grid::new(1, 128, 8.0, 0.5).unwrap()
    }

    #[test]
    fn free_e0_is_the_exact_kernel() {
        let grid = small();
        let p = CatalogPotential::free(1);
        for hbar in [1.0, 0.5] {
            let e0 = build_e0(&p, 0.0, 0.1, &grid, hbar).unwrap();
            let exact = exact_propagator(ExactKind::Free, 0.0, 0.1, &grid, hbar).unwrap();
            assert!(e0.matrix.max_abs_diff(&exact.matrix) <= 1e-10);
        }
        let (_, g0) = build_en_gn(&p, 0.0, 0.1, &grid, 1.0, 0).unwrap();
        assert_eq!(g0.matrix.max_abs(), 0.0);
        let amps = build_amplitudes(&p, 0.0, 0.1, &grid, 2, 1.0, 6).unwrap();
        assert!(amps.a[0].iter().all(|&a| a == 1.0));
        assert!(amps.a[1].iter().all(|&a| a == 0.0));
    }

    #[test]
    fn harmonic_e1_is_the_mehler_kernel() {
        let grid = small();
        let p = CatalogPotential::harmonic(1.0, 1);
        let (e1, g1) = build_en_gn(&p, 0.0, 0.2, &grid, 1.0, 1).unwrap();
        let exact = exact_propagator(ExactKind::Harmonic { omega0: 1.0 }, 0.0, 0.2, &grid, 1.0).unwrap();
        assert!(e1.matrix.max_abs_diff(&exact.matrix) < 1e-9);
        // a₁ is constant in x, so G₁ vanishes up to finite-difference noise.
        assert!(g1.matrix.max_abs() < 1e-9);
    }

    #[test]
    fn tiny_hbar_is_undersampled() {
        let grid = Grid::new(1, 128, 8.0, 0.5).unwrap();
        let p = CatalogPotential::harmonic(1.0, 1);
        let err = build_e0(&p, 0.0, 0.1, &grid, 0.005).unwrap_err();
        assert!(matches!(err, Error::UndersampledPhase { .. }), "{err}");
    }

    #[test]
    fn second_amplitude_is_small_and_free_of_hbar() {
        let grid = small();
        let p = CatalogPotential::bump(1.0);
        let a = build_amplitudes(&p, 0.0, 0.1, &grid, 2, 1.0, 6).unwrap();
        let b = build_amplitudes(&p, 0.0, 0.1, &grid, 2, 0.5, 6).unwrap();
        assert_eq!(a.a, b.a);
        let max2 = a.a[1].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max2 > 0.0 && max2 < 1e-2, "{max2}");
        let combined = a.combined();
        let k = 64 * 128 + 64;
        assert!((combined[k] - Complex64::new(a.a[0][k], -a.a[1][k])).norm() < 1e-15);
    }
}
