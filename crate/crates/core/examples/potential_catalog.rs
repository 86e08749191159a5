//! Builds each catalog potential from a parameter map, prints a few values
//! and the uniformly-local Sobolev norm of D²V.

use pathslice::potential::{
    local_sobolev_norm, make_potential, CatalogId, GriddedFunction, Params, Potential,
};

fn params(pairs: &[(&str, f64)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn main() -> pathslice::Result<()> {
    let catalog = [
        (CatalogId::Free, params(&[])),
        (CatalogId::Harmonic, params(&[("omega0", 1.0)])),
        (CatalogId::BumpNonsmooth, params(&[("alpha", 1.0)])),
        (CatalogId::AbsCubed, params(&[])),
        (CatalogId::DrivenSquare, params(&[("beta", 0.2), ("drive_period", 0.1)])),
    ];
    for (id, p) in catalog {
        let v = make_potential(id, &p)?;
        let hess = GriddedFunction::sample(1, 512, -12.0, 24.0 / 512.0, |x: &[f64]| v.hessian(0.03, x)[0][0]);
        let report = local_sobolev_norm(&hess, 2, 1.0)?;
        println!(
            "{:<40} V(0.5) = {:+.6}  V''(0.5) = {:+.6}  sup H^2_ul(V'') = {:.4}  {:?}",
            v.label(),
            v.value(0.03, &[0.5]),
            v.hessian(0.03, &[0.5])[0][0],
            report.sup_norm,
            v.smoothness()
        );
    }
    // Missing parameters are rejected up front.
    match make_potential(CatalogId::Harmonic, &Params::new()) {
        Err(e) => println!("harmonic without omega0: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
