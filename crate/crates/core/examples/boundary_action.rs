//! Two-point boundary problem by shooting, then the action and its
//! derivatives with a finite-difference cross-check.

use pathslice::classical::{gradient_check, solve_bvp};
use pathslice::potential::CatalogPotential;

fn main() -> pathslice::Result<()> {
    let h = CatalogPotential::harmonic(1.0, 1);
    let sol = solve_bvp(&h, 0.0, 0.1, &[0.0], &[1.0], 1e-12)?;
    println!(
        "harmonic eta = {:.12} (1/sin 0.1 = {:.12}), {} Newton steps",
        sol.eta[0],
        1.0 / 0.1f64.sin(),
        sol.newton_iters
    );

    for p in [h, CatalogPotential::bump(1.0), CatalogPotential::driven_square(0.2, 0.1)] {
        let g = gradient_check(&p, 0.0, 0.2, &[1.0], &[-0.4], 1e-4)?;
        let a = &g.data;
        println!(
            "S = {:+.10}  dS/dx = {:+.8}  dS/dy = {:+.8}  lap omega = {:+.6}  FD defects {:.1e} {:.1e}  HJ {:?}",
            a.action, a.ds_dx[0], a.ds_dy[0], a.lap_omega, g.dx_rel, g.dy_rel, a.hj_residual
        );
    }
    Ok(())
}
