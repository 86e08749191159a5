//! Windowed operator norms by power iteration and dense SVD.

use pathslice::analysis::{compressed_norm, operator_norm, NormMethod, Window, WindowSpec};
use pathslice::kernels::{build_e0, exact_propagator, ExactKind, Grid};
use pathslice::potential::CatalogPotential;

fn main() -> pathslice::Result<()> {
    let grid = Grid::desk();
    for hbar in [1.0, 0.5, 0.25] {
        let w = Window::new(&grid, WindowSpec::smooth(0.5), hbar)?;
        println!("hbar = {hbar}: window rank {}", w.rank());
    }
    let p = CatalogPotential::harmonic(1.0, 1);
    let e0 = build_e0(&p, 0.0, 0.2, &grid, 1.0)?;
    let u = exact_propagator(ExactKind::Harmonic { omega0: 1.0 }, 0.0, 0.2, &grid, 1.0)?;
    let diff = e0.difference(&u)?;
    for method in [NormMethod::PowerIteration, NormMethod::DenseSvd] {
        let est = operator_norm(&diff, &WindowSpec::smooth(0.5), method)?;
        println!(
            "{method:?}: {:.12e} after {} iterations, residual {:.1e}",
            est.value, est.iterations, est.rel_residual
        );
    }
    let w = Window::new(&grid, WindowSpec::Sharp { rho: 0.5 }, 1.0)?;
    let sharp = compressed_norm(&w.compress_operator(&diff.matrix), NormMethod::DenseSvd)?;
    println!("sharp window: {:.6e}", sharp.value);
    Ok(())
}
