//! Closed-form kernels on the grid: the free parametrix coincides with the
//! exact free evolution, and the reference solver reproduces Mehler's kernel.

use pathslice::analysis::{compressed_norm, NormMethod, Window, WindowSpec};
use pathslice::kernels::{
    build_e0, exact_propagator, kernel_value, reference_on_window, ExactKind, Grid, ReferenceOptions,
};
use pathslice::potential::CatalogPotential;

fn main() -> pathslice::Result<()> {
    let grid = Grid::desk();
    let free = CatalogPotential::free(1);
    let e0 = build_e0(&free, 0.0, 0.2, &grid, 1.0)?;
    let u = exact_propagator(ExactKind::Free, 0.0, 0.2, &grid, 1.0)?;
    println!("free: max |E0 - U| = {:.1e}", e0.matrix.max_abs_diff(&u.matrix));

    let mehler = ExactKind::Harmonic { omega0: 1.0 };
    println!("K_harmonic(0.5; 1, 0) = {}", kernel_value(mehler, 0.0, 0.5, 1.0, 0.0, 1.0)?);
    let window = Window::new(&grid, WindowSpec::smooth(0.5), 1.0)?;
    let reference = reference_on_window(
        &CatalogPotential::harmonic(1.0, 1),
        0.0,
        0.8,
        1.0,
        &window,
        &ReferenceOptions::default(),
    )?;
    let exact = exact_propagator(mehler, 0.0, 0.8, &grid, 1.0)?;
    let diff = exact.matrix.apply_block(&window.right()).sub(&reference.block);
    let err = compressed_norm(&window.compress(&diff), NormMethod::DenseSvd)?.value;
    println!(
        "reference vs Mehler at t = 0.8: {err:.2e} ({} substeps, Richardson {:.1e})",
        reference.substeps, reference.richardson
    );
    Ok(())
}
