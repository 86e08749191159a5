//! Time-slicing convergence of E⁽⁰⁾ on the harmonic oscillator, with the
//! fitted rate and the plot-ready CSV.

use pathslice::analysis::{convergence_study, StudyContext};
use pathslice::kernels::Grid;
use pathslice::potential::CatalogPotential;

fn main() -> pathslice::Result<()> {
    let mut ctx = StudyContext::new(Grid::desk());
    ctx.threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let p = CatalogPotential::harmonic(1.0, 1);
    let study = convergence_study(&p, 0.0, 0.8, 1.0, 0, &[4, 8, 16, 32, 64], &ctx)?;
    print!("{}", study.to_csv());
    let s = study.summary();
    println!(
        "slope {:.4}, r2 {:.6}, monotone {}, reference error {:.1e}",
        s.slope.unwrap_or(f64::NAN),
        s.r_squared.unwrap_or(f64::NAN),
        study.monotone,
        study.reference_error
    );
    Ok(())
}
