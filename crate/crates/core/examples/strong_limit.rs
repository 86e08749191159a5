//! E⁽⁰⁾(t, 0)f → f as t → 0 for a Gaussian packet.

use pathslice::analysis::{strong_limit_check, StudyContext};
use pathslice::kernels::{Grid, WaveFunction};
use pathslice::potential::CatalogPotential;

fn main() -> pathslice::Result<()> {
    let ctx = StudyContext::new(Grid::desk());
    let f = WaveFunction::gaussian(ctx.grid, 0.5, 0.8, 0.0);
    for p in [CatalogPotential::harmonic(1.0, 1), CatalogPotential::bump(1.0)] {
        let rep = strong_limit_check(&p, 1.0, &f, &[0.2, 0.1, 0.05, 0.025], &ctx)?;
        for (t, err) in &rep.rows {
            println!("{} t={t:<6} |E0 f - f| = {err:.4e}", rep.potential);
        }
        println!("passed: {}", rep.passed);
    }
    Ok(())
}
