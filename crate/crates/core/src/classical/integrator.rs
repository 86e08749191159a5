//! Dormand–Prince 5(4) with breakpoints.
//!
//! The integrator never steps across a breakpoint. Inside each smooth piece
//! the right-hand side receives a clamped evaluation time so a
//! right-continuous jump at the end of the piece is never sampled.

use crate::error::{Error, Result};

/// Longest state vector: d = 2 deviation system.
pub const STATE_LEN: usize = 22;
pub type State = [f64; STATE_LEN];

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Right-hand side f(τ_eval, τ, y, dy). `τ_eval` is τ clamped into the
/// current smooth piece and should be used for time-dependent coefficients.
pub trait Rhs {
    fn len(&self) -> usize;
    fn eval(&mut self, tau_eval: f64, tau: f64, y: &State, dy: &mut State) -> Result<()>;
    /// Per-component error floor; the tolerance for component i is
    /// rtol·(floor_i + |y_i|).
    fn floors(&self) -> &State;
}

#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub rtol: f64,
    pub max_steps: usize,
}

/// Outcome of one integration: states at each requested stop time (in the
/// order given) and the step count.
#[derive(Clone, Debug)]
pub struct Run {
    pub stops: Vec<State>,
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates from `t0` to `t1` (either direction).
///
/// `breaks` are times where the right-hand side may jump; `stops` are times
/// where the state is recorded (each must lie in the closed interval and be
/// monotone in the integration direction). `h_hint` carries the step size
/// between calls. `observer` sees every accepted step.
#[allow(clippy::too_many_arguments)]
pub fn integrate<R: Rhs>(
    rhs: &mut R,
    t0: f64,
    t1: f64,
    y0: &State,
    breaks: &[f64],
    stops: &[f64],
    ctl: StepControl,
    h_hint: &mut f64,
    mut observer: Option<&mut dyn FnMut(f64, &State)>,
) -> Result<Run> {
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let m = rhs.len();
    // Piece boundaries (jumps) and segment boundaries (jumps plus stops).
    let mut pieces: Vec<f64> = vec![t0];
    pieces.extend(breaks.iter().copied().filter(|&b| (b - t0) * dir > 0.0 && (t1 - b) * dir > 0.0));
    pieces.push(t1);
    let mut segs: Vec<f64> = pieces.clone();
    segs.extend(stops.iter().copied().filter(|&b| (b - t0) * dir > 0.0 && (t1 - b) * dir > 0.0));
    segs.sort_by(|a, b| (dir * a).total_cmp(&(dir * b)));
    segs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * span.max(1.0));

    let mut y = *y0;
    let mut run = Run {
        stops: Vec::with_capacity(stops.len()),
        accepted: 0,
        rejected: 0,
    };
    let mut next_stop = 0usize;
    let record_stops = |tau: f64, y: &State, run: &mut Run, next_stop: &mut usize| {
        while *next_stop < stops.len() && (stops[*next_stop] - tau).abs() <= 1e-14 * span.max(1.0) {
            run.stops.push(*y);
            *next_stop += 1;
        }
    };
    record_stops(t0, &y, &mut run, &mut next_stop);
    if let Some(obs) = observer.as_mut() {
        obs(t0, &y);
    }

    let mut h = if *h_hint > 0.0 { *h_hint } else { 0.05 * span };
    let mut k = [[0.0; STATE_LEN]; 7];
    let mut tmp = [0.0; STATE_LEN];
    let mut fsal_valid = false;

    for w in segs.windows(2) {
        let (a, b) = (w[0], w[1]);
        // Smooth piece containing this segment, shrunk slightly so a jump at
        // either end is sampled from the inside.
        let pi = pieces
            .iter()
            .rposition(|&p| (p - a) * dir <= 1e-15 * span.max(1.0))
            .unwrap_or(0);
        let (pa, pb) = (pieces[pi], pieces[(pi + 1).min(pieces.len() - 1)]);
        let eps = 1e-9 * (pb - pa).abs();
        let (lo, hi) = if pa <= pb { (pa + eps, pb - eps) } else { (pb + eps, pa - eps) };
        let clamp = |tau: f64| if !breaks.is_empty() { tau.clamp(lo, hi) } else { tau };

        let seg_len = (b - a).abs();
        let mut tau = a;
        fsal_valid = fsal_valid && breaks.is_empty();
        loop {
            let remaining = (b - tau).abs();
            if remaining <= 1e-15 * span.max(1.0) {
                break;
            }
            if run.accepted + run.rejected >= ctl.max_steps {
                return Err(Error::TimeStepTooLarge(format!(
                    "integrator exceeded {} steps",
                    ctl.max_steps
                )));
            }
            let mut last = false;
            let mut hs = h.min(seg_len);
            if hs >= remaining * (1.0 - 1e-12) {
                hs = remaining;
                last = true;
            }
            let hd = dir * hs;
            if !fsal_valid {
                rhs.eval(clamp(tau), tau, &y, &mut k[0])?;
            }
            for st in 1..7 {
                for i in 0..m {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(st) {
                        acc += A[st][j] * kj[i];
                    }
                    tmp[i] = y[i] + hd * acc;
                }
                let ts = tau + C[st] * hd;
                rhs.eval(clamp(ts), ts, &tmp, &mut k[st])?;
            }
            // tmp now holds the fifth-order solution (stage 7 argument).
            let floors = rhs.floors();
            let mut err = 0.0f64;
            for i in 0..m {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                let sc = ctl.rtol * (floors[i] + y[i].abs().max(tmp[i].abs()));
                err = err.max((hd * e).abs() / sc);
            }
            if !err.is_finite() {
                err = 1e10;
            }
            if err <= 1.0 {
                y[..m].copy_from_slice(&tmp[..m]);
                tau = if last { b } else { tau + hd };
                k[0] = k[6];
                fsal_valid = true;
                run.accepted += 1;
                if let Some(obs) = observer.as_mut() {
                    obs(tau, &y);
                }
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = hs * grow;
                } else {
                    h = h.max(hs * grow.min(1.0));
                }
            } else {
                // k[0] still belongs to (tau, y).
                run.rejected += 1;
                fsal_valid = true;
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        // A stop or jump ends the segment; the next stage-1 derivative must be
        // re-evaluated on the new piece.
        fsal_valid = fsal_valid && breaks.is_empty();
        record_stops(b, &y, &mut run, &mut next_stop);
    }
    *h_hint = h;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y'' = −y as a first-order system.
    struct Osc {
        floors: State,
    }

    impl Rhs for Osc {
        fn len(&self) -> usize {
            2
        }
        fn eval(&mut self, _te: f64, _t: f64, y: &State, dy: &mut State) -> Result<()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
        fn floors(&self) -> &State {
            &self.floors
        }
    }

    #[test]
    fn harmonic_oscillator_to_tolerance() {
        let mut rhs = Osc { floors: [1.0; STATE_LEN] };
        let mut y0 = [0.0; STATE_LEN];
        y0[0] = 1.0;
        let mut h = 0.0;
        let ctl = StepControl {
            rtol: 1e-12,
            max_steps: 100_000,
        };
        let run = integrate(&mut rhs, 0.0, 2.0, &y0, &[], &[0.5, 2.0], ctl, &mut h, None).unwrap();
        assert_eq!(run.stops.len(), 2);
        assert!((run.stops[0][0] - 0.5f64.cos()).abs() < 1e-11);
        assert!((run.stops[1][0] - 2f64.cos()).abs() < 1e-11);
        assert!((run.stops[1][1] + 2f64.sin()).abs() < 1e-11);
        // Backward from 2 to 0 returns to the start.
        let mut h = 0.0;
        let back = integrate(&mut rhs, 2.0, 0.0, &run.stops[1], &[], &[0.0], ctl, &mut h, None).unwrap();
        assert!((back.stops[0][0] - 1.0).abs() < 1e-10);
    }

    /// y' = sign-flipping coefficient: exact piecewise-linear solution.
    struct Jump {
        floors: State,
    }

    impl Rhs for Jump {
        fn len(&self) -> usize {
            1
        }
        fn eval(&mut self, te: f64, _t: f64, _y: &State, dy: &mut State) -> Result<()> {
            dy[0] = if te < 0.3 { 1.0 } else { -2.0 };
            Ok(())
        }
        fn floors(&self) -> &State {
            &self.floors
        }
    }

    #[test]
    fn breakpoints_are_respected() {
        let mut rhs = Jump { floors: [1.0; STATE_LEN] };
        let y0 = [0.0; STATE_LEN];
        let mut h = 0.0;
        let ctl = StepControl {
            rtol: 1e-12,
            max_steps: 1000,
        };
        let run = integrate(&mut rhs, 0.0, 1.0, &y0, &[0.3], &[1.0], ctl, &mut h, None).unwrap();
        assert!((run.stops[0][0] - (0.3 - 2.0 * 0.7)).abs() < 1e-14);
        assert!(run.accepted < 10);
    }
}
