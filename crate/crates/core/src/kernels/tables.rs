//! Per-pair classical data on the grid: the phase deviation S − S_free, Δₓω,
//! and the first amplitude, one boundary solve per (x_i, y_j).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::classical::action::endpoint_data;
use crate::classical::{shoot, BvpOptions, FlowSystem};
use crate::error::{Error, Result};
use crate::linalg::mat_trace;
use crate::potential::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    pub bvp: BvpOptions,
    /// Gauss–Legendre nodes for the τ-integrals of the amplitudes.
    pub gl_nodes: usize,
    /// Take a₁ from the Gauss–Legendre quadrature instead of the closed form
    /// (σ/det ∂x/∂η)^{1/2}. The integrand is only C² in τ on the bump
    /// potential, so the quadrature converges slowly there.
    pub quadrature_a1: bool,
    /// Worker threads for table assembly; results do not depend on it.
    pub threads: usize,
}

impl Default for TableOptions {
    fn default() -> Self {
        let mut bvp = BvpOptions::default();
        // Phases enter as S/ℏ with ℏ ≥ 0.25; 1e-10 keeps them far below the
        // errors being measured at half the cost of the flow default.
        bvp.flow.rtol = 1e-10;
        TableOptions {
            bvp,
            gl_nodes: 8,
            quadrature_a1: false,
            threads: 1,
        }
    }
}

/// Row-major n×n tables over (x_i, y_j) for one step (s, t).
#[derive(Clone, Debug)]
pub struct ActionTable {
    pub s: f64,
    pub t: f64,
    pub grid: Grid,
    /// S(t, s, x_i, y_j) − |x_i − y_j|²/(2(t − s)).
    pub dev: Vec<f64>,
    /// Δₓω(t, s, x_i, y_j).
    pub lap_omega: Vec<f64>,
    /// a₁ = exp(−½∫(τ−s)Δₓω dτ) along the path.
    pub a1: Vec<f64>,
    /// (σ/det ∂x/∂η)^{1/2}, the closed form of the same integral.
    pub van_vleck: Vec<f64>,
    /// Path positions x(τ_k) at the Gauss–Legendre nodes, `gl_nodes` per
    /// pair; empty unless requested.
    pub paths: Vec<f64>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Largest |∂ₓ(S − S_free)| or |∂_y(S − S_free)| over all pairs.
    pub max_phase_gradient: f64,
    pub newton_iters_max: usize,
}

impl ActionTable {
    pub fn n(&self) -> usize {
        self.grid.n
    }
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if m == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[m - 1 - i] = 0.5 * (1.0 + z);
        weights[m - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (nodes, weights)
}

struct Column {
    dev: Vec<f64>,
    lap_omega: Vec<f64>,
    /// Δω at the transposed pair, filled only when the table is mirrored.
    lap_mirror: Vec<f64>,
    a1: Vec<f64>,
    van_vleck: Vec<f64>,
    paths: Vec<f64>,
    grad: f64,
    iters: usize,
}

/// Cubic Hermite extrapolation of η(x) one grid step past the last two
/// solves, from their momenta and slopes dη/dx = (∂x/∂η)⁻¹.
fn extrapolate(history: &[(f64, f64, f64)], x: f64) -> Option<f64> {
    match history {
        [.., (x0, e0, m0), (x1, e1, m1)] => {
            let h = x1 - x0;
            let u = (x - x0) / h;
            let (u2, u3) = (u * u, u * u * u);
            Some(
                (2.0 * u3 - 3.0 * u2 + 1.0) * e0
                    + (u3 - 2.0 * u2 + u) * h * m0
                    + (3.0 * u2 - 2.0 * u3) * e1
                    + (u3 - u2) * h * m1,
            )
        }
        [(x1, e1, m1)] => Some(e1 + (x - x1) * m1),
        [] => None,
    }
}

/// Solves every pair (x_i, y_j) of one column. With `mirror`, only i ≥ j is
/// solved and the transposed entries come from time reversal.
#[allow(clippy::too_many_arguments)]
fn column(
    p: &dyn Potential,
    s: f64,
    t: f64,
    grid: &Grid,
    j: usize,
    opts: &TableOptions,
    nodes: &[f64],
    weights: &[f64],
    keep_paths: bool,
    mirror: bool,
) -> Result<Column> {
    let n = grid.n;
    let sigma = t - s;
    let m = nodes.len();
    let stops: Vec<f64> = if keep_paths || opts.quadrature_a1 {
        nodes.iter().map(|u| s + sigma * u).collect()
    } else {
        Vec::new()
    };
    let y = [grid.point(j), 0.0];
    let mut col = Column {
        dev: vec![0.0; n],
        lap_omega: vec![0.0; n],
        lap_mirror: vec![0.0; n],
        a1: vec![0.0; n],
        van_vleck: vec![0.0; n],
        paths: if keep_paths { vec![0.0; n * m] } else { Vec::new() },
        grad: 0.0,
        iters: 0,
    };
    let sweeps: Vec<Vec<usize>> = if mirror {
        vec![(j..n).collect()]
    } else {
        vec![(j..n).collect(), (0..j).rev().collect()]
    };
    for sweep in sweeps {
        let mut history: Vec<(f64, f64, f64)> = Vec::with_capacity(n);
        let mut h_hint = 0.0;
        for i in sweep {
            let x = [grid.point(i), 0.0];
            let mut bvp = opts.bvp;
            bvp.initial_eta = extrapolate(&history, x[0]).map(|e| [e, 0.0]);
            let shot = shoot(p, s, t, y, x, &bvp, &stops, &mut h_hint)?;
            let dec = shot.decode(p, s, t, y);
            let ep = endpoint_data(1, &dec, shot.eta, &x)?;
            col.iters = col.iters.max(shot.iters);
            col.dev[i] = ep.deviation;
            col.lap_omega[i] = mat_trace(1, &ep.z) / sigma;
            // ∂²S/∂y² − 1/σ = (σ·∂x/∂y − ∂x/∂η)/(σ·∂x/∂η), written with the
            // deviation parts to avoid cancelling two O(1/σ) terms.
            let ey = dec.xy[0][0] - 1.0;
            col.lap_mirror[i] = (sigma * ey - dec.eh[0][0]) / (sigma * dec.xeta[0][0]) / sigma;
            let free = (x[0] - y[0]) / sigma;
            col.grad = col.grad.max((ep.xi[0] - free).abs()).max((free - ep.eta[0]).abs());
            col.van_vleck[i] = (sigma / dec.xeta[0][0]).sqrt();
            let sys = FlowSystem::new(p, s, t, y, shot.eta, f64::INFINITY);
            let mut integral = 0.0;
            for (k, st) in shot.stops.iter().enumerate() {
                let dk = sys.decode(stops[k], st);
                let z = dk
                    .z(1)
                    .ok_or_else(|| Error::TimeStepTooLarge("dx/deta singular along the path".into()))?;
                integral += weights[k] * mat_trace(1, &z);
                if keep_paths {
                    col.paths[i * m + k] = dk.x[0];
                }
            }
            col.a1[i] = if opts.quadrature_a1 {
                (-0.5 * sigma * integral).exp()
            } else {
                col.van_vleck[i]
            };
            history.push((x[0], ep.eta[0], ep.xeta_inv[0][0]));
        }
    }
    Ok(col)
}

/// Builds the tables for one step. Only d = 1 grids are supported.
pub fn action_table(p: &dyn Potential, s: f64, t: f64, grid: &Grid, opts: &TableOptions, keep_paths: bool) -> Result<ActionTable> {
    if grid.d != 1 || p.dimension() != 1 {
        return Err(Error::Unsupported("kernel tables are implemented for d = 1".into()));
    }
    if !(t > s) {
        return Err(Error::InvalidArgument(format!("kernel step needs t > s, got s = {s}, t = {t}")));
    }
    if opts.gl_nodes == 0 {
        return Err(Error::InvalidArgument("gl_nodes must be positive".into()));
    }
    let n = grid.n;
    let (nodes, weights) = gauss_legendre(opts.gl_nodes);
    // Autonomous Hamiltonians ξ²/2 + V(x) are time-reversible, so
    // S(x, y) = S(y, x) and the transposed path is the reversed one. The
    // quadrature variant of a₁ integrates along a specific direction and is
    // always computed in full.
    let mirror = p.is_autonomous() && !opts.quadrature_a1;
    let threads = opts.threads.clamp(1, n);
    let mut columns: Vec<Option<Result<Column>>> = (0..n).map(|_| None).collect();
    if threads == 1 {
        for (j, slot) in columns.iter_mut().enumerate() {
            *slot = Some(column(p, s, t, grid, j, opts, &nodes, &weights, keep_paths, mirror));
        }
    } else {
        let chunk = n.div_ceil(threads);
        std::thread::scope(|scope| {
            for (c, slots) in columns.chunks_mut(chunk).enumerate() {
                let (nodes, weights) = (&nodes, &weights);
                scope.spawn(move || {
                    for (k, slot) in slots.iter_mut().enumerate() {
                        let j = c * chunk + k;
                        *slot = Some(column(p, s, t, grid, j, opts, nodes, weights, keep_paths, mirror));
                    }
                });
            }
        });
    }
    let m = nodes.len();
    let mut table = ActionTable {
        s,
        t,
        grid: *grid,
        dev: vec![0.0; n * n],
        lap_omega: vec![0.0; n * n],
        a1: vec![0.0; n * n],
        van_vleck: vec![0.0; n * n],
        paths: if keep_paths { vec![0.0; n * n * m] } else { Vec::new() },
        nodes,
        weights,
        max_phase_gradient: 0.0,
        newton_iters_max: 0,
    };
    for (j, slot) in columns.into_iter().enumerate() {
        let col = slot.expect("every column computed")?;
        let rows = if mirror { j..n } else { 0..n };
        for i in rows {
            let k = i * n + j;
            table.dev[k] = col.dev[i];
            table.lap_omega[k] = col.lap_omega[i];
            table.a1[k] = col.a1[i];
            table.van_vleck[k] = col.van_vleck[i];
            if keep_paths {
                table.paths[k * m..(k + 1) * m].copy_from_slice(&col.paths[i * m..(i + 1) * m]);
            }
            if mirror && i != j {
                let kt = j * n + i;
                table.dev[kt] = col.dev[i];
                table.lap_omega[kt] = col.lap_mirror[i];
                table.a1[kt] = col.a1[i];
                table.van_vleck[kt] = col.van_vleck[i];
                if keep_paths {
                    // Gauss–Legendre nodes are symmetric about ½.
                    for q in 0..m {
                        table.paths[kt * m + q] = col.paths[i * m + m - 1 - q];
                    }
                }
            }
        }
        table.max_phase_gradient = table.max_phase_gradient.max(col.grad);
        table.newton_iters_max = table.newton_iters_max.max(col.iters);
    }
    Ok(table)
}

type CacheMap = HashMap<String, Arc<ActionTable>>;

fn cache() -> &'static Mutex<CacheMap> {
    static CACHE: OnceLock<Mutex<CacheMap>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Entries kept before the cache is flushed.
const CACHE_CAPACITY: usize = 64;

/// Drops every memoised table.
pub fn clear_table_cache() {
    cache().lock().expect("cache lock").clear();
}

/// Memoised [`action_table`]. Autonomous potentials are keyed by the step
/// length alone and always computed from s = 0, so every slice of a uniform
/// subdivision shares one table.
pub fn cached_action_table(
    p: &dyn Potential,
    s: f64,
    t: f64,
    grid: &Grid,
    opts: &TableOptions,
    keep_paths: bool,
) -> Result<Arc<ActionTable>> {
    let (s0, t0) = if p.is_autonomous() { (0.0, t - s) } else { (s, t) };
    let key = format!(
        "{}|{:e}|{:e}|{}|{:e}|{:e}|{:e}|{}|{}|{}",
        p.label(),
        s0,
        t0,
        grid.n,
        grid.half_width,
        opts.bvp.tol,
        opts.bvp.flow.rtol,
        opts.gl_nodes,
        opts.quadrature_a1,
        keep_paths
    );
    if let Some(hit) = cache().lock().expect("cache lock").get(&key) {
        return Ok(hit.clone());
    }
    // A table with paths also serves requests without them.
    if !keep_paths {
        let with_paths = format!("{}|true", key.strip_suffix("|false").unwrap_or(&key));
        if let Some(hit) = cache().lock().expect("cache lock").get(&with_paths) {
            return Ok(hit.clone());
        }
    }
    let table = Arc::new(action_table(p, s0, t0, grid, opts, keep_paths)?);
    let mut guard = cache().lock().expect("cache lock");
    if guard.len() >= CACHE_CAPACITY {
        guard.clear();
    }
    guard.insert(key, table.clone());
    Ok(table)
}

/// Fourth-order finite-difference x-Laplacian of a row-major table, applied
/// down each column. The two outermost rows copy their inner neighbour.
pub fn x_laplacian(values: &[f64], n: usize, dx: f64) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    let c = 1.0 / (12.0 * dx * dx);
    for i in 2..n - 2 {
        for j in 0..n {
            let at = |r: usize| values[r * n + j];
            out[i * n + j] = c * (-at(i - 2) + 16.0 * at(i - 1) - 30.0 * at(i) + 16.0 * at(i + 1) - at(i + 2));
        }
    }
    for j in 0..n {
        out[j] = out[2 * n + j];
        out[n + j] = out[2 * n + j];
        out[(n - 1) * n + j] = out[(n - 3) * n + j];
        out[(n - 2) * n + j] = out[(n - 3) * n + j];
    }
    out
}

/// Four-point cubic interpolation of column `j` of a row-major table at x.
pub fn interp_column(values: &[f64], grid: &Grid, j: usize, x: f64) -> f64 {
    let n = grid.n;
    let u = (x - grid.point(0)) / grid.dx();
    let i = (u.floor() as i64).clamp(1, n as i64 - 3) as usize;
    let f = u - i as f64;
    let v = |r: usize| values[r * n + j];
    let (p0, p1, p2, p3) = (v(i - 1), v(i), v(i + 1), v(i + 2));
    // Lagrange weights on nodes −1, 0, 1, 2.
    let w0 = -f * (f - 1.0) * (f - 2.0) / 6.0;
    let w1 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
    let w2 = -(f + 1.0) * f * (f - 2.0) / 2.0;
    let w3 = (f + 1.0) * f * (f - 1.0) / 6.0;
    w0 * p0 + w1 * p1 + w2 * p2 + w3 * p3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::CatalogPotential;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // Exact through degree 9.
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((integral - 0.1).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn harmonic_table_matches_closed_forms() {
        let grid = Grid::new(1, 64, 6.0, 0.5).unwrap();
        let p = CatalogPotential::harmonic(1.0, 1);
        let dt = 0.2;
        let opts = TableOptions {
            quadrature_a1: true,
            ..TableOptions::default()
        };
        let tab = action_table(&p, 0.0, dt, &grid, &opts, true).unwrap();
        let amp = (dt / dt.sin()).sqrt();
        let lap = (1.0 / dt.tan() - 1.0 / dt) / dt;
        for i in 0..64 {
            for j in 0..64 {
                let (x, y) = (grid.point(i), grid.point(j));
                let s_h = ((x * x + y * y) * dt.cos() - 2.0 * x * y) / (2.0 * dt.sin());
                let k = i * 64 + j;
                assert!((tab.dev[k] - (s_h - (x - y).powi(2) / (2.0 * dt))).abs() < 1e-9 * (1.0 + s_h.abs()));
                assert!((tab.a1[k] - amp).abs() < 1e-12, "{}", tab.a1[k] - amp);
                assert!((tab.van_vleck[k] - amp).abs() < 1e-12);
                assert!((tab.lap_omega[k] - lap).abs() < 1e-9);
            }
        }
        // The path at the last node lies between y and x.
        let (i, j) = (40, 20);
        let xk = tab.paths[(i * 64 + j) * 8 + 7];
        assert!(xk > grid.point(j) && xk < grid.point(i) + 0.1);
    }

    #[test]
    fn threads_do_not_change_results() {
        let grid = Grid::new(1, 64, 6.0, 0.5).unwrap();
        let p = CatalogPotential::bump(1.0);
        let one = action_table(&p, 0.0, 0.1, &grid, &TableOptions::default(), false).unwrap();
        let opts = TableOptions {
            threads: 3,
            ..TableOptions::default()
        };
        let three = action_table(&p, 0.0, 0.1, &grid, &opts, false).unwrap();
        assert_eq!(one.dev, three.dev);
        assert_eq!(one.a1, three.a1);
    }

    #[test]
    fn bump_amplitude_agrees_with_van_vleck() {
        let grid = Grid::new(1, 64, 6.0, 0.5).unwrap();
        let p = CatalogPotential::bump(1.0);
        let opts = TableOptions {
            gl_nodes: 32,
            quadrature_a1: true,
            ..TableOptions::default()
        };
        let tab = action_table(&p, 0.0, 0.2, &grid, &opts, false).unwrap();
        let worst = tab
            .a1
            .iter()
            .zip(&tab.van_vleck)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn mirrored_table_matches_full_solve() {
        let grid = Grid::new(1, 64, 6.0, 0.5).unwrap();
        let p = CatalogPotential::bump(1.0);
        let half = action_table(&p, 0.0, 0.2, &grid, &TableOptions::default(), true).unwrap();
        let opts = TableOptions {
            quadrature_a1: true,
            ..TableOptions::default()
        };
        let full = action_table(&p, 0.0, 0.2, &grid, &opts, true).unwrap();
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff(&half.dev, &full.dev) < 1e-10);
        // Δω reaches O(10) near the bump; both routes agree to the flow tolerance.
        assert!(diff(&half.lap_omega, &full.lap_omega) < 1e-6);
        assert!(diff(&half.van_vleck, &full.van_vleck) < 1e-8);
        assert!(diff(&half.paths, &full.paths) < 1e-8);
    }

    #[test]
    fn laplacian_and_interpolation_are_exact_on_cubics() {
        let grid = Grid::new(1, 64, 6.0, 0.5).unwrap();
        let n = 64;
        let vals: Vec<f64> = (0..n * n)
            .map(|k| {
                let x = grid.point(k / n);
                x * x * x - 2.0 * x + (k % n) as f64
            })
            .collect();
        let lap = x_laplacian(&vals, n, grid.dx());
        for i in 2..n - 2 {
            assert!((lap[i * n + 3] - 6.0 * grid.point(i)).abs() < 1e-9);
        }
        let x = 0.123;
        assert!((interp_column(&vals, &grid, 5, x) - (x * x * x - 2.0 * x + 5.0)).abs() < 1e-12);
    }
}
