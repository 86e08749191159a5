use serde::{Deserialize, Serialize};

use super::integrator::State;
use super::{integrate_flow_with, to_vector, Decoded, FlowOptions, FlowSystem, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{mat_det, mat_inv, mat_vec};
use crate::potential::{Potential, Vector, MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpOptions {
    /// Absolute tolerance on |x(t; η) − x|.
    pub tol: f64,
    pub max_iters: usize,
    /// Largest admissible |t − s|.
    pub delta_max: f64,
    pub flow: FlowOptions,
    /// Starting momentum; the free-particle guess (x − y)/(t − s) if absent.
    #[serde(skip)]
    pub initial_eta: Option<Vector>,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            tol: 1e-10,
            max_iters: 25,
            delta_max: 0.25,
            flow: FlowOptions::default(),
            initial_eta: None,
        }
    }
}

impl BvpOptions {
    pub fn with_delta_max(delta_max: f64) -> Self {
        BvpOptions {
            delta_max,
            ..BvpOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValueSolution {
    pub eta: Vec<f64>,
    /// Scaled momentum (t − s)·η.
    pub zeta: Vec<f64>,
    pub newton_iters: usize,
    pub final_residual: f64,
    /// Integrator steps spent over all Newton iterations.
    pub shooting_steps: usize,
    pub trajectory: Trajectory,
}

/// Converged shot: the initial momentum, the final deviation state and the
/// states at the requested intermediate stops.
pub(crate) struct Shot {
    pub eta: Vector,
    pub iters: usize,
    pub residual: f64,
    pub end: State,
    pub stops: Vec<State>,
    pub steps: usize,
}

impl Shot {
    pub fn decode(&self, p: &dyn Potential, s: f64, t: f64, y: Vector) -> Decoded {
        FlowSystem::new(p, s, t, y, self.eta, f64::INFINITY).decode(t, &self.end)
    }
}

fn residual(d: usize, x: &Vector, reached: &Vector) -> (Vector, f64) {
    let mut r = [0.0; MAX_DIM];
    let mut n2 = 0.0;
    for i in 0..d {
        r[i] = x[i] - reached[i];
        n2 += r[i] * r[i];
    }
    (r, n2.sqrt())
}

/// Damped Newton shooting on η. `h_hint` carries the integrator step size
/// across calls so neighbouring solves start well.
#[allow(clippy::too_many_arguments)]
pub(crate) fn shoot(
    p: &dyn Potential,
    s: f64,
    t: f64,
    y: Vector,
    x: Vector,
    opts: &BvpOptions,
    stops: &[f64],
    h_hint: &mut f64,
) -> Result<Shot> {
    let d = p.dimension();
    let sigma = t - s;
    if sigma == 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidArgument("boundary problem needs t != s".into()));
    }
    if sigma.abs() > opts.delta_max {
        return Err(Error::TimeStepTooLarge(format!(
            "|t - s| = {} exceeds delta_max = {}",
            sigma.abs(),
            opts.delta_max
        )));
    }
    let mut eta = opts.initial_eta.unwrap_or_else(|| {
        let mut e = [0.0; MAX_DIM];
        for i in 0..d {
            e[i] = (x[i] - y[i]) / sigma;
        }
        e
    });
    let mut total_steps = 0;
    let attempt = |eta: Vector, h_hint: &mut f64, total: &mut usize| -> Result<(State, Vec<State>, Decoded)> {
        let mut sys = FlowSystem::new(p, s, t, y, eta, opts.flow.box_bound);
        let (end, st, steps) = sys.run(t, stops, &opts.flow, h_hint)?;
        *total += steps;
        let dec = sys.decode(t, &end);
        Ok((end, st, dec))
    };
    let (mut end, mut st, mut dec) = attempt(eta, h_hint, &mut total_steps)?;
    let (mut r, mut rn) = residual(d, &x, &dec.x);
    let mut iters = 0;
    loop {
        // ∂x̃/∂ζ = (∂x/∂η)/σ must stay well away from singular.
        let det_scaled = mat_det(d, &dec.xeta) / sigma.powi(d as i32);
        if !(det_scaled.abs() >= 0.5) {
            return Err(Error::TimeStepTooLarge(format!(
                "det dx/dzeta = {det_scaled:.3e} below 1/2"
            )));
        }
        if rn <= opts.tol {
            return Ok(Shot {
                eta,
                iters,
                residual: rn,
                end,
                stops: st,
                steps: total_steps,
            });
        }
        if iters >= opts.max_iters {
            return Err(Error::TimeStepTooLarge(format!(
                "Newton did not converge in {} iterations (residual {rn:.3e})",
                opts.max_iters
            )));
        }
        let inv = mat_inv(d, &dec.xeta)
            .ok_or_else(|| Error::TimeStepTooLarge("dx/deta is singular".into()))?;
        let step = mat_vec(d, &inv, &r);
        let mut lambda = 1.0;
        loop {
            let mut trial = eta;
            for i in 0..d {
                trial[i] += lambda * step[i];
            }
            let outcome = attempt(trial, h_hint, &mut total_steps);
            if let Ok((e2, s2, dec2)) = outcome {
                let (r2, rn2) = residual(d, &x, &dec2.x);
                if rn2 < rn || rn2 <= opts.tol {
                    eta = trial;
                    end = e2;
                    st = s2;
                    dec = dec2;
                    r = r2;
                    rn = rn2;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1.0 / 1024.0 {
                return Err(Error::TimeStepTooLarge(format!(
                    "damped Newton stalled at residual {rn:.3e}"
                )));
            }
        }
        iters += 1;
    }
}

/// Solves x(t; s, y, η) = x for η with the default options.
pub fn solve_bvp(p: &dyn Potential, s: f64, t: f64, y: &[f64], x: &[f64], tol: f64) -> Result<BoundaryValueSolution> {
    let opts = BvpOptions {
        tol,
        ..BvpOptions::default()
    };
    solve_bvp_with(p, s, t, y, x, &opts)
}

pub fn solve_bvp_with(
    p: &dyn Potential,
    s: f64,
    t: f64,
    y: &[f64],
    x: &[f64],
    opts: &BvpOptions,
) -> Result<BoundaryValueSolution> {
    if !(opts.tol > 0.0 && opts.tol <= 1e-8) {
        return Err(Error::InvalidArgument(format!("tol {} not in (0, 1e-8]", opts.tol)));
    }
    let d = p.dimension();
    let yv = to_vector(d, y)?;
    let xv = to_vector(d, x)?;
    let mut h = 0.0;
    let shot = shoot(p, s, t, yv, xv, opts, &[], &mut h)?;
    let trajectory = integrate_flow_with(p, s, t, y, &shot.eta[..d], &opts.flow)?;
    let sigma = t - s;
    Ok(BoundaryValueSolution {
        eta: shot.eta[..d].to_vec(),
        zeta: shot.eta[..d].iter().map(|e| sigma * e).collect(),
        newton_iters: shot.iters,
        final_residual: shot.residual,
        shooting_steps: shot.steps,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::CatalogPotential;
    use std::f64::consts::PI;

    #[test]
    fn free_particle_is_exact() {
        let p = CatalogPotential::free(1);
        let opts = BvpOptions::with_delta_max(1.0);
        let sol = solve_bvp_with(&p, 0.0, 0.5, &[1.0], &[2.0], &opts).unwrap();
        assert_eq!(sol.eta, vec![2.0]);
        assert_eq!(sol.newton_iters, 0);
        assert_eq!(sol.zeta, vec![1.0]);
    }

    #[test]
    fn harmonic_momentum_closed_form() {
        let p = CatalogPotential::harmonic(1.0, 1);
        let sol = solve_bvp(&p, 0.0, 0.1, &[0.0], &[1.0], 1e-10).unwrap();
        let exact = 1.0 / 0.1f64.sin();
        assert!((sol.eta[0] - 10.016686).abs() < 1e-6);
        assert!((sol.eta[0] - exact).abs() < 1e-8, "{}", sol.eta[0] - exact);
        assert!(sol.final_residual <= 1e-10);
        assert_eq!(sol.zeta[0], 0.1 * sol.eta[0]);
    }

    #[test]
    fn focal_point_is_rejected() {
        let p = CatalogPotential::harmonic(1.0, 1);
        let opts = BvpOptions::with_delta_max(4.0);
        let err = solve_bvp_with(&p, 0.0, PI, &[0.0], &[1.0], &opts).unwrap_err();
        assert!(matches!(err, Error::TimeStepTooLarge(_)));
        // Beyond delta_max the solver refuses outright.
        let err = solve_bvp(&p, 0.0, 0.3, &[0.0], &[1.0], 1e-10).unwrap_err();
        assert!(matches!(err, Error::TimeStepTooLarge(_)));
    }

    #[test]
    fn bump_converges_from_free_guess() {
        let p = CatalogPotential::bump(1.0);
        for &(y, x) in &[(-2.0, 2.0), (0.3, -0.4), (-5.0, 5.5), (0.9, 1.1)] {
            let sol = solve_bvp(&p, 0.0, 0.25, &[y], &[x], 1e-10).unwrap();
            assert!(sol.final_residual <= 1e-10);
            assert!((sol.trajectory.endpoint().x[0] - x).abs() < 1e-9);
        }
    }
}
