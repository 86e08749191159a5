//! Single-step errors of E⁽⁰⁾, E⁽¹⁾ and E⁽²⁾ on the nonsmooth bump.

use pathslice::analysis::{single_step_study, StudyContext};
use pathslice::kernels::Grid;
use pathslice::potential::CatalogPotential;

fn main() -> pathslice::Result<()> {
    let ctx = StudyContext::new(Grid::desk());
    let p = CatalogPotential::bump(1.0);
    for order in [0, 1] {
        let study = single_step_study(&p, 0.0, 1.0, order, &[0.025, 0.05, 0.1, 0.2], &ctx)?;
        for r in &study.rows {
            println!("N={order} dt={:<6} error {:.4e}", r.mesh, r.error);
        }
        println!("N={order} slope {:?}", study.slope());
    }
    Ok(())
}
