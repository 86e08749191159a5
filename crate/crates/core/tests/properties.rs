//! Property tests for the invariants of the public types.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pathslice::analysis::{compressed_norm, fit_power_law, NormMethod};
use pathslice::classical::{action_data, integrate_flow, solve_bvp};
use pathslice::kernels::Subdivision;
use pathslice::linalg::CMatrix;
use pathslice::potential::{CatalogPotential, Potential};

fn catalog() -> Vec<CatalogPotential> {
    vec![
        CatalogPotential::free(1),
        CatalogPotential::harmonic(1.0, 1),
        CatalogPotential::bump(1.0),
        CatalogPotential::abs_cubed(),
        CatalogPotential::driven_square(0.2, 0.1),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn flow_is_canonical(k in 0usize..5, y in -3.0f64..3.0, eta in -3.0f64..3.0, dt in 0.02f64..0.25) {
        let p = &catalog()[k];
        let tr = integrate_flow(p, 0.0, dt, &[y], &[eta], 1e-11).unwrap();
        prop_assert!(tr.symplectic_defect() <= 1e-8, "{}: {}", p.label(), tr.symplectic_defect());
        let start = &tr.samples[0];
        prop_assert_eq!(start.tau, 0.0);
        prop_assert_eq!(start.x[0], y);
        prop_assert_eq!(start.xi[0], eta);
        prop_assert_eq!(&start.jacobian, &vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn boundary_solution_hits_target(k in 0usize..5, x in -3.0f64..3.0, y in -3.0f64..3.0, dt in 0.02f64..0.25) {
        let p = &catalog()[k];
        let sol = solve_bvp(p, 0.0, dt, &[y], &[x], 1e-10).unwrap();
        prop_assert!(sol.final_residual <= 1e-10);
        prop_assert_eq!(sol.zeta[0], dt * sol.eta[0]);
        let end = sol.trajectory.endpoint();
        prop_assert!((end.x[0] - x).abs() <= 1e-9);
    }

    #[test]
    fn action_identities(k in 0usize..5, x in -3.0f64..3.0, y in -3.0f64..3.0, dt in 0.02f64..0.25) {
        let p = &catalog()[k];
        let a = action_data(p, 0.0, dt, &[x], &[y]).unwrap();
        let sol = solve_bvp(p, 0.0, dt, &[y], &[x], 1e-10).unwrap();
        prop_assert!((a.ds_dy[0] + sol.eta[0]).abs() <= 1e-8);
        prop_assert!((a.ds_dx[0] - sol.trajectory.endpoint().xi[0]).abs() <= 1e-8);
        prop_assert!(a.det_mixed.abs() >= 0.5 / dt);
    }

    #[test]
    fn hessian_is_symmetric(x0 in -5.0f64..5.0, x1 in -5.0f64..5.0, omega in 0.2f64..3.0) {
        let p = CatalogPotential::harmonic(omega, 2);
        let h = p.hessian(0.0, &[x0, x1]);
        prop_assert_eq!(h[0][1], h[1][0]);
        for p in catalog() {
            prop_assert!(p.hessian(0.07, &[x0]).iter().flatten().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn random_subdivisions_are_valid(slices in 1usize..40, seed in any::<u64>(), t in 0.5f64..3.0) {
        let delta_max = t / slices as f64 * 2.5;
        match Subdivision::random(0.0, t, slices, seed, delta_max) {
            Ok(sub) => {
                let times = sub.times();
                prop_assert_eq!(times.len(), slices + 1);
                prop_assert_eq!(times[0], 0.0);
                prop_assert!((times[slices] - t).abs() <= 1e-12);
                prop_assert!(times.windows(2).all(|w| w[1] > w[0]));
                prop_assert!(sub.mesh() <= delta_max);
            }
            Err(e) => prop_assert!(matches!(e, pathslice::Error::TimeStepTooLarge(_)), "{e}"),
        }
    }

    #[test]
    fn power_law_fit_recovers_exponent(slope in -1.0f64..4.0, c in 0.01f64..100.0) {
        let rows: Vec<(f64, f64)> = [0.05, 0.1, 0.2, 0.4].iter().map(|&x| (x, c * f64::powf(x, slope))).collect();
        let fit = fit_power_law(&rows).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-10);
        prop_assert!((fit.log_c - c.ln()).abs() <= 1e-9);
        prop_assert!(fit.r_squared >= 1.0 - 1e-12);
    }
}

#[test]
fn power_iteration_matches_dense_svd_on_random_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = CMatrix::from_fn(256, 256, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let a = compressed_norm(&m, NormMethod::PowerIteration).unwrap();
    let b = compressed_norm(&m, NormMethod::DenseSvd).unwrap();
    assert!(a.value >= 0.0);
    assert!(a.rel_residual <= 1e-8, "{}", a.rel_residual);
    assert!((a.value - b.value).abs() <= 1e-8 * b.value, "{} vs {}", a.value, b.value);
}

#[test]
fn trivial_norms() {
    let id = CMatrix::identity(64);
    assert!((compressed_norm(&id, NormMethod::PowerIteration).unwrap().value - 1.0).abs() < 1e-12);
    let diag = CMatrix::from_fn(64, 64, |i, j| {
        if i != j {
            Complex64::new(0.0, 0.0)
        } else if i == 10 {
            Complex64::new(3.0, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    });
    assert!((compressed_norm(&diag, NormMethod::DenseSvd).unwrap().value - 3.0).abs() < 1e-12);
}
