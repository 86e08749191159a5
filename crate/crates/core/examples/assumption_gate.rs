//! The Assumption (A) screen at two resolutions: the nonsmooth bump passes,
//! |x|³ fails with a window at the origin that grows under refinement.

use pathslice::kernels::Grid;
use pathslice::potential::{verify_assumption_a, CatalogPotential, Potential};

fn main() -> pathslice::Result<()> {
    for p in [CatalogPotential::bump(1.0), CatalogPotential::abs_cubed()] {
        for n in [512, 1024] {
            let grid = Grid::new(1, n, 12.0, 0.5)?;
            let report = verify_assumption_a(&p, &grid, &[0.0]);
            println!("{} n={n}: {}", p.label(), if report.pass { "PASS" } else { "FAIL" });
            for w in report.failing_windows.iter().take(3) {
                println!(
                    "    window at x = {:+.2}: {:.4} -> {:.4} (trend {:.2})",
                    w.center[0], w.norm_coarse, w.norm_fine, w.trend
                );
            }
        }
    }
    Ok(())
}
