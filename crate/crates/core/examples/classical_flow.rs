//! Hamiltonian flow with its Jacobian, and the short-time scaling of the
//! Jacobian blocks.

use pathslice::classical::{flow_sweep, integrate_flow, sample_lattice};
use pathslice::potential::CatalogPotential;

fn main() -> pathslice::Result<()> {
    let p = CatalogPotential::bump(1.0);
    let tr = integrate_flow(&p, 0.0, 0.2, &[0.3], &[1.5], 1e-11)?;
    let end = tr.endpoint();
    println!(
        "x(0.2) = {:.10}, xi(0.2) = {:.10}, action = {:.10}, {} steps",
        end.x[0], end.xi[0], tr.action_accum, tr.step_count
    );
    println!("Jacobian {:?}", end.jacobian);
    println!("symplectic defect {:.2e}", tr.symplectic_defect());

    let samples = sample_lattice(1, 2.0, 0.5, 9);
    let sweep = flow_sweep(&p, 0.0, &[0.01, 0.02, 0.04, 0.08, 0.16], &samples, 0.25)?;
    print!("{}", sweep.to_csv());
    println!("fitted exponents {:?}", sweep.slopes);
    Ok(())
}
