//! The time-slicing error is governed by the mesh ω(Ω), not by uniformity: a
//! random subdivision lands on the power law fitted to uniform ones.

use pathslice::analysis::{convergence_study, subdivision_error, StudyContext, Window};
use pathslice::kernels::{reference_on_window, Grid, Subdivision};
use pathslice::potential::CatalogPotential;

#[test]
fn random_subdivision_follows_uniform_fit() {
    let ctx = StudyContext::new(Grid::desk());
    let p = CatalogPotential::harmonic(1.0, 1);
    let (s, t, hbar) = (0.0, 0.4, 1.0);
    let uniform = convergence_study(&p, s, t, hbar, 0, &[2, 4, 8, 16], &ctx).unwrap();
    let fit = uniform.fit.expect("uniform sweep has a rate");

    let window = Window::cached(&ctx.grid, ctx.window, hbar).unwrap();
    let reference = reference_on_window(&p, s, t, hbar, &window, &ctx.reference).unwrap();
    let sub = Subdivision::random(s, t, 6, 11, ctx.delta_max).unwrap();
    let lengths: Vec<f64> = sub.intervals().map(|(a, b)| b - a).collect();
    assert!(lengths.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-3), "draw is not uniform: {lengths:?}");

    let (error, _) = subdivision_error(&p, &sub, hbar, 0, &ctx, &reference).unwrap();
    let predicted = fit.log_c.exp() * sub.mesh().powf(fit.slope);
    let ratio = error / predicted;
    assert!(
        (0.5..=2.0).contains(&ratio),
        "mesh {}: error {error:.3e}, uniform fit {predicted:.3e}",
        sub.mesh()
    );
}
