//! Hamiltonian flow of H = ½|ξ|² + V(t, x) with first variational equations,
//! the two-point boundary problem, and the action with its derivatives.
//!
//! The flow is integrated in deviation form around the free motion
//! x_f = y + η(τ−s), ξ_f = η. With σ = τ − s the state is
//!
//! ```text
//! u  = x − x_f          v  = ξ − η
//! EY = ∂x/∂y − I        FY = ∂ξ/∂y
//! EH = ∂x/∂η − σI       FH = ∂ξ/∂η − I
//! A1 = ∫ ½|v|²          A2 = ∫ V
//! ```
//!
//! which keeps every stored quantity small for short times, so ω and Δω are
//! obtained without cancelling the large free-particle parts.

pub(crate) mod action;
mod bvp;
pub(crate) mod integrator;
mod scaled;

pub use action::{action_data, action_data_with, gradient_check, ActionData, GradientCheck};
pub use bvp::{solve_bvp, solve_bvp_with, BoundaryValueSolution, BvpOptions};
pub(crate) use bvp::shoot;
pub use scaled::{
    flow_sweep, sample_lattice, scaled_flow_diagnostics, FlowSweep, FlowSweepRow,
    ScaledFlowDecomposition,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mat_identity, mat_inv, mat_mul, mat_zero};
use crate::potential::{Matrix, Potential, Vector, MAX_DIM};
use integrator::{integrate, Rhs, State, StepControl, STATE_LEN};

/// Step-control settings for the flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Relative local error per step, measured against per-component floors
    /// scaled to the step length t − s.
    pub rtol: f64,
    /// Trajectories leaving |x| ≤ box_bound raise `TrajectoryEscaped`.
    pub box_bound: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            rtol: 1e-11,
            box_bound: 1e3,
            max_steps: 200_000,
        }
    }
}

impl FlowOptions {
    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol <= 1e-3) {
            return Err(Error::InvalidArgument(format!("rtol {} not in (0, 1e-3]", self.rtol)));
        }
        Ok(())
    }
}

/// Offsets of the deviation blocks for dimension d.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub d: usize,
}

impl Layout {
    pub fn u(self) -> usize {
        0
    }
    pub fn v(self) -> usize {
        self.d
    }
    pub fn ey(self) -> usize {
        2 * self.d
    }
    pub fn fy(self) -> usize {
        2 * self.d + self.d * self.d
    }
    pub fn eh(self) -> usize {
        2 * self.d + 2 * self.d * self.d
    }
    pub fn fh(self) -> usize {
        2 * self.d + 3 * self.d * self.d
    }
    pub fn a1(self) -> usize {
        2 * self.d + 4 * self.d * self.d
    }
    pub fn a2(self) -> usize {
        self.a1() + 1
    }
    pub fn len(self) -> usize {
        self.a2() + 1
    }

    pub fn mat(self, st: &State, off: usize) -> Matrix {
        let mut m = mat_zero();
        for i in 0..self.d {
            for j in 0..self.d {
                m[i][j] = st[off + i * self.d + j];
            }
        }
        m
    }

    pub fn vec(self, st: &State, off: usize) -> Vector {
        let mut v = [0.0; MAX_DIM];
        v[..self.d].copy_from_slice(&st[off..off + self.d]);
        v
    }
}

/// The deviation-form flow for one (s, y, η).
pub(crate) struct FlowSystem<'a> {
    pub p: &'a dyn Potential,
    pub lay: Layout,
    pub s: f64,
    pub y: Vector,
    pub eta: Vector,
    pub box_bound: f64,
    floors: State,
}

impl<'a> FlowSystem<'a> {
    pub fn new(p: &'a dyn Potential, s: f64, t: f64, y: Vector, eta: Vector, box_bound: f64) -> Self {
        let lay = Layout { d: p.dimension() };
        let dt = (t - s).abs();
        let (t1, t2, t3) = (dt, dt * dt, dt * dt * dt);
        let mut floors = [0.0; STATE_LEN];
        let d = lay.d;
        let dd = d * d;
        floors[lay.u()..lay.u() + d].fill(t2);
        floors[lay.v()..lay.v() + d].fill(t1);
        floors[lay.ey()..lay.ey() + dd].fill(t2);
        floors[lay.fy()..lay.fy() + dd].fill(t1);
        floors[lay.eh()..lay.eh() + dd].fill(t3);
        floors[lay.fh()..lay.fh() + dd].fill(t2);
        floors[lay.a1()] = t3;
        floors[lay.a2()] = t3;
        FlowSystem {
            p,
            lay,
            s,
            y,
            eta,
            box_bound,
            floors,
        }
    }

    pub fn position(&self, tau: f64, st: &State) -> Vector {
        let sigma = tau - self.s;
        let mut x = [0.0; MAX_DIM];
        for (i, xi) in x.iter_mut().enumerate().take(self.lay.d) {
            *xi = self.y[i] + self.eta[i] * sigma + st[self.lay.u() + i];
        }
        x
    }

    pub fn decode(&self, tau: f64, st: &State) -> Decoded {
        let lay = self.lay;
        let d = lay.d;
        let sigma = tau - self.s;
        let u = lay.vec(st, lay.u());
        let v = lay.vec(st, lay.v());
        let mut xi = [0.0; MAX_DIM];
        for i in 0..d {
            xi[i] = self.eta[i] + v[i];
        }
        let id = mat_identity(d);
        let ey = lay.mat(st, lay.ey());
        let fy = lay.mat(st, lay.fy());
        let eh = lay.mat(st, lay.eh());
        let fh = lay.mat(st, lay.fh());
        let mut xy = ey;
        let mut xeta = eh;
        let mut peta = fh;
        for i in 0..d {
            xy[i][i] += id[i][i];
            xeta[i][i] += sigma;
            peta[i][i] += 1.0;
        }
        let eta2: f64 = self.eta[..d].iter().map(|e| e * e).sum();
        let eta_u: f64 = (0..d).map(|i| self.eta[i] * u[i]).sum();
        let a1 = st[lay.a1()];
        let a2 = st[lay.a2()];
        Decoded {
            sigma,
            x: self.position(tau, st),
            xi,
            u,
            v,
            xy,
            xeta,
            py: fy,
            peta,
            eh,
            fh,
            action: 0.5 * eta2 * sigma + eta_u + a1 - a2,
            a1,
            a2,
        }
    }

    /// Integrates from s to `t`, recording the state at each of `stops`.
    pub fn run(&mut self, t: f64, stops: &[f64], opts: &FlowOptions, h_hint: &mut f64) -> Result<(State, Vec<State>, usize)> {
        let breaks = self.p.time_discontinuities(self.s, t);
        let y0 = [0.0; STATE_LEN];
        let ctl = StepControl {
            rtol: opts.rtol,
            max_steps: opts.max_steps,
        };
        let mut all_stops = stops.to_vec();
        all_stops.push(t);
        let run = integrate(self, self.s, t, &y0, &breaks, &all_stops, ctl, h_hint, None)?;
        let mut states = run.stops;
        let end = states.pop().expect("end state recorded");
        Ok((end, states, run.accepted))
    }
}

impl Rhs for FlowSystem<'_> {
    fn len(&self) -> usize {
        self.lay.len()
    }

    fn eval(&mut self, tau_eval: f64, tau: f64, st: &State, dy: &mut State) -> Result<()> {
        let lay = self.lay;
        let d = lay.d;
        let sigma = tau - self.s;
        let x = self.position(tau, st);
        let r2: f64 = x[..d].iter().map(|c| c * c).sum();
        if !(r2 <= self.box_bound * self.box_bound) {
            return Err(Error::TrajectoryEscaped {
                tau,
                bound: self.box_bound,
            });
        }
        let loc = self.p.local(tau_eval, &x[..d]);
        let h = loc.hessian;
        let mut vv = 0.0;
        for i in 0..d {
            let vi = st[lay.v() + i];
            dy[lay.u() + i] = vi;
            dy[lay.v() + i] = -loc.gradient[i];
            vv += vi * vi;
        }
        for i in 0..d {
            for j in 0..d {
                let k = i * d + j;
                dy[lay.ey() + k] = st[lay.fy() + k];
                dy[lay.eh() + k] = st[lay.fh() + k];
                let mut hy = 0.0;
                let mut he = 0.0;
                for m in 0..d {
                    let id = if m == j { 1.0 } else { 0.0 };
                    hy += h[i][m] * (id + st[lay.ey() + m * d + j]);
                    he += h[i][m] * (id * sigma + st[lay.eh() + m * d + j]);
                }
                dy[lay.fy() + k] = -hy;
                dy[lay.fh() + k] = -he;
            }
        }
        dy[lay.a1()] = 0.5 * vv;
        dy[lay.a2()] = loc.value;
        Ok(())
    }

    fn floors(&self) -> &State {
        &self.floors
    }
}

/// Physical quantities recovered from a deviation state.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Decoded {
    pub sigma: f64,
    pub x: Vector,
    pub xi: Vector,
    pub u: Vector,
    pub v: Vector,
    pub xy: Matrix,
    pub xeta: Matrix,
    pub py: Matrix,
    pub peta: Matrix,
    pub eh: Matrix,
    pub fh: Matrix,
    pub action: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Decoded {
    /// Z = ∂²S/∂x² − I/σ = (FH − EH/σ)·(∂x/∂η)⁻¹, so that σΔω = tr Z.
    pub fn z(&self, d: usize) -> Option<Matrix> {
        let inv = mat_inv(d, &self.xeta)?;
        let mut m = mat_zero();
        for i in 0..d {
            for j in 0..d {
                m[i][j] = self.fh[i][j] - self.eh[i][j] / self.sigma;
            }
        }
        Some(mat_mul(d, &m, &inv))
    }

    /// S − |x_r − y|²/(2σ) at the reached endpoint x_r.
    pub fn action_deviation(&self, d: usize) -> f64 {
        let uu: f64 = self.u[..d].iter().map(|c| c * c).sum();
        self.a1 - self.a2 - uu / (2.0 * self.sigma)
    }
}

/// One recorded point of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub tau: f64,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    /// 2d×2d block matrix [[∂x/∂y, ∂x/∂η], [∂ξ/∂y, ∂ξ/∂η]].
    pub jacobian: Vec<Vec<f64>>,
    /// ∫ₛ^τ (½|ξ|² − V) dτ'.
    pub action: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub s: f64,
    pub t: f64,
    pub y: Vec<f64>,
    pub eta: Vec<f64>,
    pub samples: Vec<FlowSample>,
    pub action_accum: f64,
    pub step_count: usize,
}

impl Trajectory {
    pub fn endpoint(&self) -> &FlowSample {
        self.samples.last().expect("trajectory has samples")
    }

    /// Largest entrywise |JᵀΣJ − Σ| over all samples.
    pub fn symplectic_defect(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| symplectic_defect(&s.jacobian))
            .fold(0.0, f64::max)
    }
}

/// Entrywise max of |JᵀΣJ − Σ| with Σ = [[0, I], [−I, 0]].
pub fn symplectic_defect(j: &[Vec<f64>]) -> f64 {
    let n = j.len();
    let d = n / 2;
    let sigma = |a: usize, b: usize| -> f64 {
        if a < d && b == a + d {
            1.0
        } else if a >= d && b + d == a {
            -1.0
        } else {
            0.0
        }
    };
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                for l in 0..n {
                    acc += j[k][a] * sigma(k, l) * j[l][b];
                }
            }
            worst = worst.max((acc - sigma(a, b)).abs());
        }
    }
    worst
}

fn sample_from(sys: &FlowSystem<'_>, tau: f64, st: &State) -> FlowSample {
    let d = sys.lay.d;
    let dec = sys.decode(tau, st);
    let mut jac = vec![vec![0.0; 2 * d]; 2 * d];
    for i in 0..d {
        for k in 0..d {
            jac[i][k] = dec.xy[i][k];
            jac[i][d + k] = dec.xeta[i][k];
            jac[d + i][k] = dec.py[i][k];
            jac[d + i][d + k] = dec.peta[i][k];
        }
    }
    FlowSample {
        tau,
        x: dec.x[..d].to_vec(),
        xi: dec.xi[..d].to_vec(),
        jacobian: jac,
        action: dec.action,
    }
}

pub(crate) fn to_vector(d: usize, v: &[f64]) -> Result<Vector> {
    if v.len() != d {
        return Err(Error::InvalidArgument(format!(
            "expected a {d}-vector, got {} entries",
            v.len()
        )));
    }
    let mut out = [0.0; MAX_DIM];
    out[..d].copy_from_slice(v);
    Ok(out)
}

/// Integrates the flow from (s, y, η) to time t with default options and the
/// given relative tolerance, recording every accepted step.
pub fn integrate_flow(p: &dyn Potential, s: f64, t: f64, y: &[f64], eta: &[f64], rtol: f64) -> Result<Trajectory> {
    let opts = FlowOptions {
        rtol,
        ..FlowOptions::default()
    };
    integrate_flow_with(p, s, t, y, eta, &opts)
}

pub fn integrate_flow_with(
    p: &dyn Potential,
    s: f64,
    t: f64,
    y: &[f64],
    eta: &[f64],
    opts: &FlowOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    if t == s || !t.is_finite() || !s.is_finite() {
        return Err(Error::InvalidArgument("integrate_flow needs finite t != s".into()));
    }
    let d = p.dimension();
    let y = to_vector(d, y)?;
    let eta = to_vector(d, eta)?;
    let mut sys = FlowSystem::new(p, s, t, y, eta, opts.box_bound);
    let breaks = p.time_discontinuities(s, t);
    let ctl = StepControl {
        rtol: opts.rtol,
        max_steps: opts.max_steps,
    };
    let mut raw: Vec<(f64, State)> = Vec::new();
    let mut obs = |tau: f64, st: &State| raw.push((tau, *st));
    let mut h = 0.0;
    let run = integrate(&mut sys, s, t, &[0.0; STATE_LEN], &breaks, &[t], ctl, &mut h, Some(&mut obs))?;
    let samples: Vec<FlowSample> = raw.iter().map(|(tau, st)| sample_from(&sys, *tau, st)).collect();
    let action_accum = samples.last().map(|s| s.action).unwrap_or(0.0);
    Ok(Trajectory {
        s,
        t,
        y: y[..d].to_vec(),
        eta: eta[..d].to_vec(),
        samples,
        action_accum,
        step_count: run.accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::CatalogPotential;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn free_particle_flow() {
        let p = CatalogPotential::free(1);
        let tr = integrate_flow(&p, 0.0, 1.0, &[0.0], &[1.0], 1e-10).unwrap();
        let end = tr.endpoint();
        assert_eq!(end.x, vec![1.0]);
        assert_eq!(end.xi, vec![1.0]);
        assert!((tr.action_accum - 0.5).abs() < 1e-15);
        assert_eq!(end.jacobian, vec![vec![1.0, 1.0], vec![0.0, 1.0]]);
        let start = &tr.samples[0];
        assert_eq!(start.jacobian, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn harmonic_quarter_period() {
        let p = CatalogPotential::harmonic(1.0, 1);
        let tr = integrate_flow(&p, 0.0, FRAC_PI_2, &[1.0], &[0.0], 1e-10).unwrap();
        let end = tr.endpoint();
        assert!(end.x[0].abs() < 1e-9);
        assert!((end.xi[0] + 1.0).abs() < 1e-9);
        assert!(tr.symplectic_defect() < 1e-8);
    }

    #[test]
    fn backward_in_time() {
        let p = CatalogPotential::harmonic(1.0, 1);
        let tr = integrate_flow(&p, 0.0, -0.5, &[1.0], &[0.0], 1e-10).unwrap();
        assert!((tr.endpoint().x[0] - 0.5f64.cos()).abs() < 1e-10);
        assert!((tr.endpoint().xi[0] - 0.5f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn escape_guard() {
        let p = CatalogPotential::free(1);
        let opts = FlowOptions {
            box_bound: 5.0,
            ..FlowOptions::default()
        };
        let err = integrate_flow_with(&p, 0.0, 1.0, &[0.0], &[10.0], &opts).unwrap_err();
        assert!(matches!(err, Error::TrajectoryEscaped { .. }));
    }

    /// Fixed-step RK4 on the plain (x, ξ) system with steps aligned to the
    /// drive's jumps; 2·10⁴ steps per half period.
    fn driven_oracle(p: &CatalogPotential, t: f64, y: f64, eta: f64) -> (f64, f64) {
        let mut edges = vec![0.0];
        edges.extend(p.time_discontinuities(0.0, t));
        edges.push(t);
        let (mut x, mut xi) = (y, eta);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let f = |x: f64| -p.gradient(mid, &[x])[0];
            let n = 20_000;
            let h = (b - a) / n as f64;
            for _ in 0..n {
                let (k1x, k1p) = (xi, f(x));
                let (k2x, k2p) = (xi + 0.5 * h * k1p, f(x + 0.5 * h * k1x));
                let (k3x, k3p) = (xi + 0.5 * h * k2p, f(x + 0.5 * h * k2x));
                let (k4x, k4p) = (xi + h * k3p, f(x + h * k3x));
                x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
                xi += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            }
        }
        (x, xi)
    }

    #[test]
    fn driven_square_matches_segment_oracle() {
        let p = CatalogPotential::driven_square(0.2, 0.1);
        let tr = integrate_flow(&p, 0.0, 0.35, &[0.0], &[1.0], 1e-12).unwrap();
        let (x, xi) = driven_oracle(&p, 0.35, 0.0, 1.0);
        let end = tr.endpoint();
        assert!((end.x[0] - x).abs() < 1e-8, "{} vs {x}", end.x[0]);
        assert!((end.xi[0] - xi).abs() < 1e-8);
        // Every jump time is a step boundary.
        for jump in p.time_discontinuities(0.0, 0.35) {
            assert!(tr.samples.iter().any(|s| (s.tau - jump).abs() < 1e-14));
        }
    }

    #[test]
    fn two_dimensional_harmonic() {
        let p = CatalogPotential::harmonic(1.0, 2);
        let tr = integrate_flow(&p, 0.0, 0.7, &[1.0, -0.5], &[0.3, 2.0], 1e-10).unwrap();
        let end = tr.endpoint();
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        assert!((end.x[0] - (c + 0.3 * s)).abs() < 1e-10);
        assert!((end.x[1] - (-0.5 * c + 2.0 * s)).abs() < 1e-10);
        assert!((end.jacobian[0][2] - s).abs() < 1e-10);
        assert!(end.jacobian[0][3].abs() < 1e-12);
        assert!(tr.symplectic_defect() < 1e-8);
    }

    #[test]
    fn rtol_precondition() {
        let p = CatalogPotential::free(1);
        assert!(integrate_flow(&p, 0.0, 1.0, &[0.0], &[1.0], 1e-2).is_err());
        assert!(integrate_flow(&p, 1.0, 1.0, &[0.0], &[1.0], 1e-8).is_err());
    }
}
