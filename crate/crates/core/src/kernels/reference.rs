//! Reference propagator U(t, s) by split-step Fourier evolution.
//!
//! Each substep is a sixth-order Yoshida composition of seven Strang steps
//! (half kinetic, potential at the step midpoint, half kinetic), so Richardson
//! self-validation at 1e−8 is reachable with a few hundred substeps. Substeps
//! never straddle a time discontinuity of the potential.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::operator::{KernelOperator, Label};
use super::spectral::Spectral;
use crate::analysis::{compressed_norm, NormMethod, Window, WindowSpec};
use crate::error::{Error, Result};
use crate::linalg::{Block, CMatrix};
use crate::potential::Potential;

const W1: f64 = -1.177_679_984_178_87;
const W2: f64 = 0.235_573_213_359_357;
const W3: f64 = 0.784_513_610_477_56;
const W0: f64 = 1.0 - 2.0 * (W1 + W2 + W3);
const YOSHIDA: [f64; 7] = [W3, W2, W1, W0, W1, W2, W3];

/// Width of the outer strip |x| > L − 1 where periodic wrap-around begins.
pub const BOUNDARY_STRIP: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    /// Substeps over [s, t] for the first attempt.
    pub substeps: usize,
    /// Largest windowed-norm change allowed when the substeps double.
    pub richardson_tol: f64,
    pub max_substeps: usize,
    /// Largest fraction of the propagated window mass allowed in the
    /// boundary strip.
    pub wrap_tol: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            substeps: 32,
            richardson_tol: 1e-8,
            max_substeps: 4096,
            wrap_tol: 1e-8,
        }
    }
}

/// Strang steps (length, potential evaluation time) covering [s, t].
fn schedule(p: &dyn Potential, s: f64, t: f64, substeps: usize) -> Vec<(f64, f64)> {
    let mut cuts = vec![s];
    cuts.extend(p.time_discontinuities(s, t));
    cuts.push(t);
    let mut steps = Vec::new();
    for piece in cuts.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        let m = ((substeps as f64 * (b - a) / (t - s)).ceil() as usize).max(1);
        let h = (b - a) / m as f64;
        // Midpoints of the backward Yoshida stage can fall outside the piece;
        // clamp them so every potential step sees the piece's own values.
        let top = b - 1e-12 * (b - a);
        for q in 0..m {
            let mut offset = 0.0;
            for w in YOSHIDA {
                let mid = a + h * (q as f64 + offset + 0.5 * w);
                steps.push((w * h, mid.clamp(a, top)));
                offset += w;
            }
        }
    }
    steps
}

struct Stepper<'a> {
    p: &'a dyn Potential,
    spectral: Spectral,
    xs: Vec<f64>,
    hbar: f64,
    kinetic: HashMap<u64, Vec<Complex64>>,
    potential: HashMap<(u64, u64), Vec<Complex64>>,
}

impl<'a> Stepper<'a> {
    fn new(p: &'a dyn Potential, grid: &Grid, hbar: f64) -> Self {
        Stepper {
            p,
            spectral: Spectral::new(grid),
            xs: grid.points(),
            hbar,
            kinetic: HashMap::new(),
            potential: HashMap::new(),
        }
    }

    fn kinetic(&mut self, dt: f64) -> &[Complex64] {
        let (sp, hbar) = (&self.spectral, self.hbar);
        self.kinetic.entry(dt.to_bits()).or_insert_with(|| sp.free_symbol(dt, hbar))
    }

    fn potential(&mut self, dt: f64, tau: f64) -> Vec<Complex64> {
        let tkey = if self.p.is_autonomous() { 0 } else { tau.to_bits() };
        let (p, xs, hbar) = (self.p, &self.xs, self.hbar);
        self.potential
            .entry((dt.to_bits(), tkey))
            .or_insert_with(|| {
                xs.iter()
                    .map(|&x| Complex64::from_polar(1.0, -p.value(tau, &[x]) * dt / hbar))
                    .collect()
            })
            .clone()
    }

    fn run(&mut self, steps: &[(f64, f64)], block: &mut Block) {
        if steps.is_empty() {
            return;
        }
        let mut kick = 0.5 * steps[0].0;
        for (k, &(dt, tau)) in steps.iter().enumerate() {
            let ksym = self.kinetic(kick).to_vec();
            for c in 0..block.r {
                self.spectral.multiply(block.col_mut(c), &ksym);
            }
            let phase = self.potential(dt, tau);
            for c in 0..block.r {
                block.col_mut(c).iter_mut().zip(&phase).for_each(|(z, e)| *z *= e);
            }
            kick = 0.5 * (dt + steps.get(k + 1).map_or(0.0, |s| s.0));
        }
        let ksym = self.kinetic(kick).to_vec();
        for c in 0..block.r {
            self.spectral.multiply(block.col_mut(c), &ksym);
        }
    }
}

/// Propagates every column of `block` from s to t with `substeps` substeps.
pub fn propagate_block(
    p: &dyn Potential,
    s: f64,
    t: f64,
    grid: &Grid,
    hbar: f64,
    substeps: usize,
    block: &Block,
) -> Result<Block> {
    if grid.d != 1 {
        return Err(Error::Unsupported("the reference propagator is implemented for d = 1".into()));
    }
    if !(t > s) || substeps == 0 || !(hbar > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "reference propagation needs t > s, substeps > 0 and hbar > 0 (s = {s}, t = {t}, substeps = {substeps}, hbar = {hbar})"
        )));
    }
    let mut out = block.clone();
    Stepper::new(p, grid, hbar).run(&schedule(p, s, t, substeps), &mut out);
    Ok(out)
}

/// U(t, s)·QΛ on a window, with its Richardson estimate.
#[derive(Clone, Debug)]
pub struct ReferenceBlock {
    pub block: Block,
    pub substeps: usize,
    /// Windowed norm of the change between the last two substep counts.
    pub richardson: f64,
    pub boundary_mass: f64,
}

fn boundary_mass(grid: &Grid, block: &Block) -> f64 {
    let edge = grid.half_width - BOUNDARY_STRIP;
    let xs = grid.points();
    let (mut outer, mut total) = (0.0, 0.0);
    for c in 0..block.r {
        for (z, x) in block.col(c).iter().zip(&xs) {
            let m = z.norm_sqr();
            total += m;
            if x.abs() > edge {
                outer += m;
            }
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

/// Doubles the substeps from `opts.substeps` until the windowed change is
/// below `opts.richardson_tol`, then checks for wrap-around.
pub fn reference_on_window(
    p: &dyn Potential,
    s: f64,
    t: f64,
    hbar: f64,
    window: &Window,
    opts: &ReferenceOptions,
) -> Result<ReferenceBlock> {
    let right = window.right();
    let mut m = opts.substeps.max(1);
    let mut coarse = propagate_block(p, s, t, &window.grid, hbar, m, &right)?;
    loop {
        let fine = propagate_block(p, s, t, &window.grid, hbar, 2 * m, &right)?;
        let diff = compressed_norm(&window.compress(&fine.sub(&coarse)), NormMethod::DenseSvd)?.value;
        m *= 2;
        if diff <= opts.richardson_tol {
            let mass = boundary_mass(&window.grid, &fine);
            if mass > opts.wrap_tol {
                return Err(Error::WrapAround { mass });
            }
            return Ok(ReferenceBlock {
                block: fine,
                substeps: m,
                richardson: diff,
                boundary_mass: mass,
            });
        }
        if 2 * m > opts.max_substeps {
            return Err(Error::RichardsonFailed {
                diff,
                tol: opts.richardson_tol,
            });
        }
        coarse = fine;
    }
}

/// Dense U(t, s) from propagating every grid basis vector with `substeps`
/// substeps, validated against twice as many on the default smooth window.
pub fn reference_propagator(
    p: &dyn Potential,
    s: f64,
    t: f64,
    grid: &Grid,
    hbar: f64,
    substeps: usize,
) -> Result<KernelOperator> {
    let n = grid.len();
    let mut id = Block::zeros(n, n);
    for i in 0..n {
        id.col_mut(i)[i] = Complex64::new(1.0, 0.0);
    }
    let u = propagate_block(p, s, t, grid, hbar, substeps, &id)?;
    let window = Window::cached(grid, WindowSpec::smooth(grid.rho), hbar)?;
    let right = window.right();
    let fine = propagate_block(p, s, t, grid, hbar, 2 * substeps, &right)?;
    let mut coarse = Block::zeros(n, right.r);
    for c in 0..right.r {
        let col = right.col(c);
        let out = coarse.col_mut(c);
        for (j, &w) in col.iter().enumerate() {
            if w != Complex64::new(0.0, 0.0) {
                for (o, v) in out.iter_mut().zip(u.col(j)) {
                    *o += v * w;
                }
            }
        }
    }
    let diff = compressed_norm(&window.compress(&fine.sub(&coarse)), NormMethod::DenseSvd)?.value;
    let tol = ReferenceOptions::default().richardson_tol;
    if diff > tol {
        return Err(Error::RichardsonFailed { diff, tol });
    }
    let mass = boundary_mass(grid, &fine);
    if mass > ReferenceOptions::default().wrap_tol {
        return Err(Error::WrapAround { mass });
    }
    // Column j of the propagated identity is U e_j, i.e. matrix column j.
    let matrix = CMatrix::from_fn(n, n, |i, j| u.col(j)[i]);
    KernelOperator::new(Label::URef, s, t, hbar, *grid, matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{exact_propagator, ExactKind};
    use crate::potential::CatalogPotential;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn yoshida_weights_sum_to_one() {
        assert!((YOSHIDA.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn steps_respect_discontinuities() {
        let p = CatalogPotential::driven_square(0.2, 0.1);
        let steps = schedule(&p, 0.0, 0.12, 4);
        let total: f64 = steps.iter().map(|s| s.0).sum();
        assert!((total - 0.12).abs() < 1e-14);
        // Pieces [0, 0.05), [0.05, 0.1), [0.1, 0.12).
        for &(_, tau) in &steps {
            assert!((0.0..0.12).contains(&tau));
        }
        assert!(steps.iter().any(|s| s.1 >= 0.05 && s.1 < 0.1));
    }

    #[test]
    fn split_step_is_unitary() {
        let grid = Grid::new(1, 128, 8.0, 0.5).unwrap();
        let p = CatalogPotential::bump(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cols: Vec<Vec<Complex64>> = (0..3)
            .map(|_| (0..128).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
            .collect();
        let b = Block::from_columns(128, &cols);
        let out = propagate_block(&p, 0.0, 0.5, &grid, 1.0, 16, &b).unwrap();
        for c in 0..3 {
            let before = crate::linalg::norm(b.col(c));
            let after = crate::linalg::norm(out.col(c));
            assert!((after / before - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn free_reference_matches_exact_kernel() {
        let grid = Grid::new(1, 128, 8.0, 0.5).unwrap();
        let p = CatalogPotential::free(1);
        let u = reference_propagator(&p, 0.0, 0.3, &grid, 1.0, 8).unwrap();
        let exact = exact_propagator(ExactKind::Free, 0.0, 0.3, &grid, 1.0).unwrap();
        assert!(u.matrix.max_abs_diff(&exact.matrix) < 1e-12);
    }

    #[test]
    fn harmonic_reference_matches_mehler_on_window() {
        let grid = Grid::desk();
        let p = CatalogPotential::harmonic(1.0, 1);
        let window = Window::new(&grid, WindowSpec::smooth(0.5), 1.0).unwrap();
        let r = reference_on_window(&p, 0.0, 0.5, 1.0, &window, &ReferenceOptions::default()).unwrap();
        let exact = exact_propagator(ExactKind::Harmonic { omega0: 1.0 }, 0.0, 0.5, &grid, 1.0).unwrap();
        let diff = window.compress(&exact.apply_block(&window.right()).sub(&r.block));
        let err = compressed_norm(&diff, NormMethod::DenseSvd).unwrap().value;
        assert!(err <= 1e-7, "{err} after {} substeps", r.substeps);
        assert!(r.richardson <= 1e-8);
    }
}
