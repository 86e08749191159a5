use serde::{Deserialize, Serialize};

use super::integrator::State;
use super::{to_vector, FlowOptions, FlowSystem};
use crate::analysis::fit_power_law;
use crate::error::{Error, Result};
use crate::linalg::mat_max_abs;
use crate::potential::{Matrix, Potential, Vector, MAX_DIM};

/// Scaled Jacobian blocks at one (y, ζ) sample, with σ = t − s:
/// ∂x/∂ζ = I − σ²A, ∂(σξ)/∂ζ = I − σ²B, ∂x/∂y = I − σ²C, ∂(σξ)/∂y = σ²C′.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledFlowDecomposition {
    pub y: Vec<f64>,
    pub zeta: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub c_prime: Vec<Vec<f64>>,
}

/// One step length of a sweep. The four norms are max-abs entries over the
/// sample set; the `max_*` columns bound the scaled blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSweepRow {
    pub dt: f64,
    pub norm_dxdy_minus_i: f64,
    pub norm_dxideta_minus_i: f64,
    pub norm_dxdeta: f64,
    pub norm_dxidy: f64,
    pub max_a: f64,
    pub max_b: f64,
    pub max_c: f64,
    pub max_c_prime: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSweep {
    pub potential: String,
    pub rows: Vec<FlowSweepRow>,
    /// Fitted exponents of the four norms against dt, in column order; `None`
    /// when the column is identically below the noise floor.
    pub slopes: [Option<f64>; 4],
}

impl FlowSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dt,norm_dxdy_minus_I,norm_dxideta_minus_I,norm_dxdeta,norm_dxidy\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                r.dt, r.norm_dxdy_minus_i, r.norm_dxideta_minus_i, r.norm_dxdeta, r.norm_dxidy
            ));
        }
        out
    }
}

/// k×k lattice of (y, ζ) pairs on [−y_max, y_max] × [−ζ_max, ζ_max]. In
/// d = 2 both vectors run along fixed oblique directions.
pub fn sample_lattice(d: usize, y_max: f64, zeta_max: f64, k: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let coord = |i: usize, m: f64| if k == 1 { 0.0 } else { -m + 2.0 * m * i as f64 / (k - 1) as f64 };
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let (u, w) = (coord(i, y_max), coord(j, zeta_max));
            if d == 1 {
                out.push((vec![u], vec![w]));
            } else {
                out.push((vec![u, -0.5 * u], vec![w, w / 3.0]));
            }
        }
    }
    out
}

fn rows(d: usize, m: &Matrix, scale: f64) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| m[i][j] * scale).collect()).collect()
}

fn final_state<'a>(p: &'a dyn Potential, s: f64, t: f64, y: Vector, eta: Vector, opts: &FlowOptions) -> Result<(FlowSystem<'a>, State)> {
    let mut sys = FlowSystem::new(p, s, t, y, eta, opts.box_bound);
    let mut h = 0.0;
    let (end, _, _) = sys.run(t, &[], opts, &mut h)?;
    Ok((sys, end))
}

/// Scaled decomposition at every sample, with η = ζ/(t − s).
pub fn scaled_flow_diagnostics(
    p: &dyn Potential,
    s: f64,
    t: f64,
    samples: &[(Vec<f64>, Vec<f64>)],
    delta_max: f64,
) -> Result<Vec<ScaledFlowDecomposition>> {
    let sigma = t - s;
    if !(sigma.abs() > 0.0 && sigma.abs() <= delta_max) {
        return Err(Error::InvalidArgument(format!(
            "|t - s| = {} not in (0, {delta_max}]",
            sigma.abs()
        )));
    }
    let d = p.dimension();
    let opts = FlowOptions::default();
    let s2 = sigma * sigma;
    samples
        .iter()
        .map(|(y, zeta)| {
            let yv = to_vector(d, y)?;
            let zv = to_vector(d, zeta)?;
            let mut eta = [0.0; MAX_DIM];
            for i in 0..d {
                eta[i] = zv[i] / sigma;
            }
            let (sys, end) = final_state(p, s, t, yv, eta, &opts)?;
            let dec = sys.decode(t, &end);
            let ey = sys.lay.mat(&end, sys.lay.ey());
            Ok(ScaledFlowDecomposition {
                y: y.clone(),
                zeta: zeta.clone(),
                a: rows(d, &dec.eh, -1.0 / (s2 * sigma)),
                b: rows(d, &dec.fh, -1.0 / s2),
                c: rows(d, &ey, -1.0 / s2),
                c_prime: rows(d, &dec.py, 1.0 / sigma),
            })
        })
        .collect()
}

fn max_abs_rows(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Sweeps the step length over `dts` at every sample, recording the
/// unscaled Jacobian norms and the scaled-block maxima.
pub fn flow_sweep(
    p: &dyn Potential,
    s: f64,
    dts: &[f64],
    samples: &[(Vec<f64>, Vec<f64>)],
    delta_max: f64,
) -> Result<FlowSweep> {
    if dts.is_empty() || samples.is_empty() {
        return Err(Error::InvalidArgument("flow sweep needs step lengths and samples".into()));
    }
    let d = p.dimension();
    let mut out = Vec::with_capacity(dts.len());
    for &dt in dts {
        let dec = scaled_flow_diagnostics(p, s, s + dt, samples, delta_max)?;
        let s2 = dt * dt;
        let mut row = FlowSweepRow {
            dt,
            norm_dxdy_minus_i: 0.0,
            norm_dxideta_minus_i: 0.0,
            norm_dxdeta: 0.0,
            norm_dxidy: 0.0,
            max_a: 0.0,
            max_b: 0.0,
            max_c: 0.0,
            max_c_prime: 0.0,
        };
        for sd in &dec {
            let (a, b, c, cp) = (max_abs_rows(&sd.a), max_abs_rows(&sd.b), max_abs_rows(&sd.c), max_abs_rows(&sd.c_prime));
            row.max_a = row.max_a.max(a);
            row.max_b = row.max_b.max(b);
            row.max_c = row.max_c.max(c);
            row.max_c_prime = row.max_c_prime.max(cp);
            row.norm_dxdy_minus_i = row.norm_dxdy_minus_i.max(s2 * c);
            row.norm_dxideta_minus_i = row.norm_dxideta_minus_i.max(s2 * b);
            row.norm_dxidy = row.norm_dxidy.max(dt * cp);
            // ∂x/∂η = σ(I − σ²A); the identity part dominates the max entry.
            let mut m = [[0.0; MAX_DIM]; MAX_DIM];
            for i in 0..d {
                for j in 0..d {
                    m[i][j] = dt * (if i == j { 1.0 } else { 0.0 } - s2 * sd.a[i][j]);
                }
            }
            row.norm_dxdeta = row.norm_dxdeta.max(mat_max_abs(d, &m));
        }
        out.push(row);
    }
    let slope = |f: &dyn Fn(&FlowSweepRow) -> f64| -> Option<f64> {
        let pts: Vec<(f64, f64)> = out.iter().map(|r| (r.dt, f(r))).collect();
        fit_power_law(&pts).ok().map(|fit| fit.slope)
    };
    let slopes = [
        slope(&|r| r.norm_dxdy_minus_i),
        slope(&|r| r.norm_dxideta_minus_i),
        slope(&|r| r.norm_dxdeta),
        slope(&|r| r.norm_dxidy),
    ];
    Ok(FlowSweep {
        potential: p.label(),
        rows: out,
        slopes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::CatalogPotential;

    fn dyadic(lo: f64, k: usize) -> Vec<f64> {
        (0..k).map(|i| lo * 2f64.powi(i as i32)).collect()
    }

    #[test]
    fn free_blocks_vanish() {
        let p = CatalogPotential::free(1);
        let samples = sample_lattice(1, 2.0, 1.0, 5);
        for sd in scaled_flow_diagnostics(&p, 0.0, 0.2, &samples, 0.25).unwrap() {
            assert_eq!(max_abs_rows(&sd.a), 0.0);
            assert_eq!(max_abs_rows(&sd.b), 0.0);
            assert_eq!(max_abs_rows(&sd.c), 0.0);
            assert_eq!(max_abs_rows(&sd.c_prime), 0.0);
        }
    }

    #[test]
    fn harmonic_jacobian_slopes() {
        let p = CatalogPotential::harmonic(1.0, 1);
        let samples = sample_lattice(1, 2.0, 1.0, 3);
        let sweep = flow_sweep(&p, 0.0, &dyadic(0.0125, 5), &samples, 0.25).unwrap();
        let expect = [2.0, 2.0, 1.0, 1.0];
        for (got, want) in sweep.slopes.iter().zip(expect) {
            assert!((got.unwrap() - want).abs() < 0.05, "{got:?} vs {want}");
        }
        // B = (1 − cos σ)/σ² → ½.
        assert!((sweep.rows[0].max_b - 0.5).abs() < 1e-3);
        assert!(sweep.to_csv().starts_with("dt,norm_dxdy_minus_I"));
    }

    #[test]
    fn bump_blocks_bounded() {
        let p = CatalogPotential::bump(1.0);
        let samples = sample_lattice(1, 3.0, 1.0, 21);
        let sweep = flow_sweep(&p, 0.0, &[0.0125, 0.025, 0.05], &samples, 0.25).unwrap();
        let coarse = sweep.rows[2].max_b;
        assert!(coarse > 0.0);
        for r in &sweep.rows {
            assert!(r.max_b <= 1.5 * coarse && r.max_b >= coarse / 1.5, "{} vs {coarse}", r.max_b);
        }
    }
}
