//! Windowed H^κ norms on a lattice of balls, estimated with central finite
//! differences.

use serde::{Deserialize, Serialize};

use crate::analysis::fit_power_law;
use crate::error::{Error, Result};

/// Real samples on a uniform grid with `n` points per axis starting at
/// `origin` (same on every axis). Values are row-major in d = 2.
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedFunction {
    pub d: usize,
    pub n: usize,
    pub origin: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl GriddedFunction {
    /// Samples `f` on the grid `origin + i·dx`, i < n, on each axis.
    pub fn sample(d: usize, n: usize, origin: f64, dx: f64, f: impl Fn(&[f64]) -> f64) -> Self {
        let x = |i: usize| origin + dx * i as f64;
        let values = match d {
            1 => (0..n).map(|i| f(&[x(i)])).collect(),
            _ => (0..n * n).map(|k| f(&[x(k / n), x(k % n)])).collect(),
        };
        GriddedFunction {
            d,
            n,
            origin,
            dx,
            values,
        }
    }

    fn coord(&self, i: usize) -> f64 {
        self.origin + self.dx * i as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowNorm {
    pub center: Vec<f64>,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevWindowReport {
    pub kappa: usize,
    pub ball_radius: f64,
    pub windows: Vec<WindowNorm>,
    pub sup_norm: f64,
    /// Slope of log sup_norm against log(1/Δx) over a refinement sweep; absent
    /// for a single resolution.
    pub refinement_trend: Option<f64>,
}

impl SobolevWindowReport {
    pub fn window_at(&self, center: &[f64]) -> Option<&WindowNorm> {
        self.windows
            .iter()
            .find(|w| w.center.iter().zip(center).all(|(a, b)| (a - b).abs() < 1e-9))
    }
}

/// Fourth-order central stencil for the k-th derivative, built as
/// D1^(k mod 2) · D2^(k div 2). Returned unscaled by Δx^k.
fn stencil(k: usize) -> Vec<f64> {
    fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }
    const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
    const D2: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
    let mut s = if k % 2 == 1 { D1.to_vec() } else { vec![1.0] };
    for _ in 0..k / 2 {
        s = convolve(&s, &D2);
    }
    s
}

/// Applies the k-th derivative stencil along `axis`; entries whose stencil
/// leaves the grid are NaN.
fn derivative_along(f: &GriddedFunction, values: &[f64], k: usize, axis: usize) -> Vec<f64> {
    if k == 0 {
        return values.to_vec();
    }
    let s = stencil(k);
    let hw = s.len() / 2;
    let scale = f.dx.powi(k as i32);
    let n = f.n;
    let (stride, count) = match (f.d, axis) {
        (1, _) => (1, 1),
        (_, 0) => (n, n),
        _ => (1, n),
    };
    let mut out = vec![f64::NAN; values.len()];
    for line in 0..count {
        let base = if f.d == 1 {
            0
        } else if axis == 0 {
            line
        } else {
            line * n
        };
        for i in hw..n - hw {
            let mut acc = 0.0;
            for (m, c) in s.iter().enumerate() {
                acc += c * values[base + (i + m - hw) * stride];
            }
            out[base + i * stride] = acc / scale;
        }
    }
    out
}

fn multi_indices(d: usize, kappa: usize) -> Vec<Vec<usize>> {
    match d {
        1 => (0..=kappa).map(|k| vec![k]).collect(),
        _ => (0..=kappa)
            .flat_map(|a| (0..=kappa - a).map(move |b| vec![a, b]))
            .collect(),
    }
}

/// Uniformly-local H^κ estimate: for every ball of radius `ball_radius` on a
/// lattice with stride radius/4 anchored at the origin, the square root of
/// Σ_{|α|≤κ} ‖D^α f‖² over the ball. In d = 1 the squared derivatives are
/// integrated exactly as piecewise-linear interpolants; in d = 2 by the
/// midpoint rule on grid cells inside the ball.
pub fn local_sobolev_norm(
    f: &GriddedFunction,
    kappa: usize,
    ball_radius: f64,
) -> Result<SobolevWindowReport> {
    if !(f.d == 1 || f.d == 2) {
        return Err(Error::InvalidArgument(format!("dimension {} unsupported", f.d)));
    }
    if f.values.len() != f.n.pow(f.d as u32) {
        return Err(Error::InvalidArgument("sample count does not match grid".into()));
    }
    if !(ball_radius > 0.0) {
        return Err(Error::InvalidArgument("ball radius must be positive".into()));
    }
    let hw = 2 * kappa.div_ceil(2);
    if 2 * hw + 1 > f.n {
        return Err(Error::InvalidArgument(format!(
            "order-{kappa} stencil exceeds a {}-point grid",
            f.n
        )));
    }
    // Squared-derivative density Σ_α |D^α f|².
    let mut density = vec![0.0; f.values.len()];
    for alpha in multi_indices(f.d, kappa) {
        let mut g = derivative_along(f, &f.values, alpha[0], 0);
        if f.d == 2 {
            g = derivative_along(f, &g, alpha[1], 1);
        }
        for (acc, v) in density.iter_mut().zip(&g) {
            *acc += v * v;
        }
    }
    // A κ-independent margin (for κ ≤ 8) keeps the window lattice identical
    // across orders, so sup norms are comparable between κ and κ+1.
    let margin = hw.max(8).min((f.n - 1) / 2);
    let lo = f.coord(margin) + ball_radius;
    let hi = f.coord(f.n - 1 - margin) - ball_radius;
    if lo > hi {
        return Err(Error::InvalidArgument(format!(
            "window of radius {ball_radius} does not fit in the sampled domain"
        )));
    }
    let stride = ball_radius / 4.0;
    let k_lo = (lo / stride - 1e-9).ceil() as i64;
    let k_hi = (hi / stride + 1e-9).floor() as i64;
    let centers: Vec<f64> = (k_lo..=k_hi).map(|k| k as f64 * stride).collect();

    let mut windows = Vec::new();
    match f.d {
        1 => {
            for &c in &centers {
                let sq = integrate_linear(f, &density, c - ball_radius, c + ball_radius);
                windows.push(WindowNorm {
                    center: vec![c],
                    norm: sq.max(0.0).sqrt(),
                });
            }
        }
        _ => {
            let r2 = ball_radius * ball_radius;
            let w = f.dx * f.dx;
            for &c0 in &centers {
                for &c1 in &centers {
                    let mut sq = 0.0;
                    for i in 0..f.n {
                        let a = f.coord(i) - c0;
                        if a * a > r2 {
                            continue;
                        }
                        for j in 0..f.n {
                            let b = f.coord(j) - c1;
                            if a * a + b * b <= r2 {
                                sq += density[i * f.n + j] * w;
                            }
                        }
                    }
                    windows.push(WindowNorm {
                        center: vec![c0, c1],
                        norm: sq.sqrt(),
                    });
                }
            }
        }
    }
    let sup_norm = windows.iter().map(|w| w.norm).fold(0.0, f64::max);
    Ok(SobolevWindowReport {
        kappa,
        ball_radius,
        windows,
        sup_norm,
        refinement_trend: None,
    })
}

/// ∫_a^b of the piecewise-linear interpolant of `g` (d = 1).
fn integrate_linear(f: &GriddedFunction, g: &[f64], a: f64, b: f64) -> f64 {
    let i0 = (((a - f.origin) / f.dx).floor().max(0.0)) as usize;
    let i1 = ((((b - f.origin) / f.dx).ceil()) as usize).min(f.n - 1);
    let mut total = 0.0;
    for i in i0..i1 {
        let (xa, xb) = (f.coord(i), f.coord(i + 1));
        let (l, r) = (a.max(xa), b.min(xb));
        if r <= l {
            continue;
        }
        let slope = (g[i + 1] - g[i]) / f.dx;
        let at = |x: f64| g[i] + slope * (x - xa);
        total += 0.5 * (at(l) + at(r)) * (r - l);
    }
    total
}

/// Runs [`local_sobolev_norm`] on `f` sampled over [lo, hi) with `n0·2^level`
/// points for each level in `0..levels`. Each report after the first carries
/// the fitted slope of log sup_norm against log(1/Δx) up to that level.
#[allow(clippy::too_many_arguments)]
pub fn sobolev_refinement(
    f: impl Fn(&[f64]) -> f64,
    d: usize,
    lo: f64,
    hi: f64,
    n0: usize,
    levels: usize,
    kappa: usize,
    ball_radius: f64,
) -> Result<Vec<SobolevWindowReport>> {
    let mut reports: Vec<SobolevWindowReport> = Vec::with_capacity(levels);
    let mut rows = Vec::new();
    for level in 0..levels {
        let n = n0 << level;
        let dx = (hi - lo) / n as f64;
        let g = GriddedFunction::sample(d, n, lo, dx, &f);
        let mut rep = local_sobolev_norm(&g, kappa, ball_radius)?;
        rows.push((1.0 / dx, rep.sup_norm.max(f64::MIN_POSITIVE)));
        if rows.len() >= 2 {
            rep.refinement_trend = Some(trend(&rows));
        }
        reports.push(rep);
    }
    Ok(reports)
}

fn trend(rows: &[(f64, f64)]) -> f64 {
    if rows.len() == 2 {
        return (rows[1].1 / rows[0].1).ln() / (rows[1].0 / rows[0].0).ln();
    }
    match fit_power_law(rows) {
        Ok(fit) => fit.slope,
        Err(_) => 0.0,
    }
}
