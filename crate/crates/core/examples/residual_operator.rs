//! The residual G⁽⁰⁾ = (iℏ∂ₜ + ½ℏ²Δ − V)E⁽⁰⁾: identity check on Gaussian
//! packets and the size of ‖G⁽⁰⁾‖ against t − s and ℏ.

use pathslice::analysis::{residual_check, StudyContext};
use pathslice::kernels::{Grid, WaveFunction};
use pathslice::potential::CatalogPotential;

fn main() -> pathslice::Result<()> {
    let ctx = StudyContext::new(Grid::desk());
    let f = WaveFunction::gaussian(ctx.grid, 0.0, 0.8, 0.5);
    let p = CatalogPotential::harmonic(1.0, 1);
    let report = residual_check(&p, 0.0, &[0.05, 0.1, 0.2], &[1.0, 0.5], &[f], &ctx)?;
    print!("{}", report.to_csv());
    println!("largest identity defect {:.2e}", report.max_defect);
    for (hbar, fit) in &report.dt_fits {
        println!("hbar {hbar}: slope in t - s {:?}", fit.map(|f| f.slope));
    }
    println!("ratio hbar 1 / 0.5 at dt 0.1: {:?}", report.hbar_ratio(0.1, 1.0, 0.5));
    Ok(())
}
