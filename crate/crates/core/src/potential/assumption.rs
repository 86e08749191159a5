use serde::{Deserialize, Serialize};

use super::sobolev::{sobolev_refinement, SobolevWindowReport};
use super::Potential;
use crate::kernels::Grid;

/// Growth of a window norm under one halving of Δx that counts as divergence.
const STABILITY_TOL: f64 = 0.05;
/// Under halving Δx a continuous Hessian's grid modulus must shrink at least
/// by this factor.
const CONTINUITY_RATIO: f64 = 0.75;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailingWindow {
    pub time: f64,
    /// Hessian entry (i, j).
    pub entry: (usize, usize),
    pub center: Vec<f64>,
    pub norm_coarse: f64,
    pub norm_fine: f64,
    /// log2(norm_fine / norm_coarse).
    pub trend: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryCheck {
    pub time: f64,
    pub entry: (usize, usize),
    pub continuity_modulus: (f64, f64),
    pub continuous: bool,
    pub sobolev: SobolevWindowReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub potential: String,
    pub kappa: usize,
    pub pass: bool,
    pub checks: Vec<EntryCheck>,
    pub failing_windows: Vec<FailingWindow>,
}

/// Screens D²V against the uniformly-local Sobolev condition of order d+1.
///
/// Each Hessian entry is sampled on the grid and on its 2× refinement at every
/// time sample. An entry passes when its grid modulus of continuity shrinks
/// under refinement and every window norm changes by less than 5%.
pub fn verify_assumption_a(p: &dyn Potential, grid: &Grid, time_samples: &[f64]) -> AssumptionReport {
    let d = p.dimension();
    let kappa = d + 1;
    let lo = -grid.half_width;
    let hi = grid.half_width;
    let mut checks = Vec::new();
    let mut failing = Vec::new();
    let mut pass = true;
    for &t in time_samples {
        for i in 0..d {
            for j in i..d {
                let h = |x: &[f64]| p.hessian(t, x)[i][j];
                let reports = match sobolev_refinement(h, d, lo, hi, grid.n, 2, kappa, 1.0) {
                    Ok(r) => r,
                    Err(_) => {
                        pass = false;
                        continue;
                    }
                };
                let (coarse, fine) = (&reports[0], &reports[1]);
                let mods = (
                    continuity_modulus(p, t, i, j, d, lo, hi, grid.n),
                    continuity_modulus(p, t, i, j, d, lo, hi, 2 * grid.n),
                );
                let continuous = mods.1 <= 1e-12 || mods.1 <= CONTINUITY_RATIO * mods.0;
                pass &= continuous && fine.sup_norm.is_finite();
                for w in &fine.windows {
                    let Some(c) = coarse.window_at(&w.center) else {
                        continue;
                    };
                    let grows = w.norm > (1.0 + STABILITY_TOL) * c.norm;
                    if grows || !w.norm.is_finite() {
                        pass = false;
                        failing.push(FailingWindow {
                            time: t,
                            entry: (i, j),
                            center: w.center.clone(),
                            norm_coarse: c.norm,
                            norm_fine: w.norm,
                            trend: (w.norm / c.norm).log2(),
                        });
                    }
                }
                checks.push(EntryCheck {
                    time: t,
                    entry: (i, j),
                    continuity_modulus: mods,
                    continuous,
                    sobolev: fine.clone(),
                });
            }
        }
    }
    AssumptionReport {
        potential: p.label(),
        kappa,
        pass,
        checks,
        failing_windows: failing,
    }
}

/// Largest jump of one Hessian entry between neighbouring nodes.
#[allow(clippy::too_many_arguments)]
fn continuity_modulus(
    p: &dyn Potential,
    t: f64,
    i: usize,
    j: usize,
    d: usize,
    lo: f64,
    hi: f64,
    n: usize,
) -> f64 {
    let dx = (hi - lo) / n as f64;
    let x = |k: usize| lo + dx * k as f64;
    let mut worst = 0.0f64;
    match d {
        1 => {
            let mut prev = p.hessian(t, &[x(0)])[i][j];
            for k in 1..n {
                let cur = p.hessian(t, &[x(k)])[i][j];
                worst = worst.max((cur - prev).abs());
                prev = cur;
            }
        }
        _ => {
            for a in 0..n {
                for b in 0..n {
                    let here = p.hessian(t, &[x(a), x(b)])[i][j];
                    if a + 1 < n {
                        worst = worst.max((p.hessian(t, &[x(a + 1), x(b)])[i][j] - here).abs());
                    }
                    if b + 1 < n {
                        worst = worst.max((p.hessian(t, &[x(a), x(b + 1)])[i][j] - here).abs());
                    }
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::CatalogPotential;

    fn grid(n: usize) -> Grid {
        Grid::new(1, n, 12.0, 0.5).unwrap()
    }

    #[test]
    fn harmonic_passes() {
        let rep = verify_assumption_a(&CatalogPotential::harmonic(1.0, 1), &grid(256), &[0.0]);
        assert!(rep.pass);
    }

    #[test]
    fn bump_passes_and_abs_cubed_fails_at_origin() {
        for n in [512, 1024] {
            let rep = verify_assumption_a(&CatalogPotential::bump(1.0), &grid(n), &[0.0]);
            assert!(rep.pass, "{:?}", rep.failing_windows);
            let bad = verify_assumption_a(&CatalogPotential::abs_cubed(), &grid(n), &[0.0]);
            assert!(!bad.pass);
            assert!(bad.failing_windows.iter().any(|w| w.center[0] == 0.0));
            assert!(bad.failing_windows.iter().all(|w| w.center[0].abs() < 1.0 + 1e-9));
        }
    }

    #[test]
    fn driven_square_passes_on_both_half_periods() {
        let p = CatalogPotential::driven_square(0.2, 0.1);
        let rep = verify_assumption_a(&p, &grid(512), &[0.01, 0.07]);
        assert!(rep.pass, "{:?}", rep.failing_windows);
    }
}
