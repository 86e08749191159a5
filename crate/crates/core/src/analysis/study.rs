//! Convergence sweeps and the residual / strong-limit checks.
//!
//! Every error is a windowed operator norm ‖P(E − U)P‖. Operators are only
//! ever applied to the n×r block QΛ of the window, so a sweep never forms a
//! dense product of step kernels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fit::{fit_power_law, PowerLawFit};
use super::norm::{compressed_norm, NormMethod};
use super::window::{Window, WindowSpec};
use crate::error::{Error, Result};
use crate::kernels::{
    build_amplitudes_with, build_e0_with, build_en_gn_with, reference_on_window, Grid, KernelOperator,
    ReferenceBlock, ReferenceOptions, Spectral, Subdivision, TableOptions, WaveFunction,
};
use crate::linalg::{norm, Block};
use crate::potential::Potential;

/// Default largest slice length.
pub const DELTA_MAX: f64 = 0.25;

/// Rows whose error is within this factor of the reference's Richardson
/// estimate are kept in the table but left out of the fit.
pub const FLOOR_FACTOR: f64 = 10.0;

/// Allowed growth of the error under bisection of every slice.
pub const MONOTONE_SLACK: f64 = 1.1;

/// Numerical settings shared by every study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyContext {
    pub grid: Grid,
    pub window: WindowSpec,
    pub norm: NormMethod,
    pub reference: ReferenceOptions,
    pub tables: TableOptions,
    pub delta_max: f64,
    /// Rows of a sweep run on this many threads.
    pub threads: usize,
}

impl StudyContext {
    pub fn new(grid: Grid) -> Self {
        StudyContext {
            grid,
            window: WindowSpec::smooth(grid.rho),
            norm: NormMethod::PowerIteration,
            reference: ReferenceOptions::default(),
            tables: TableOptions::default(),
            delta_max: DELTA_MAX,
            threads: 1,
        }
    }

    fn window(&self, hbar: f64) -> Result<std::sync::Arc<Window>> {
        Window::cached(&self.grid, self.window, hbar)
    }

    /// Windowed norm of an n×r image block of QΛ, cross-checked against the
    /// other estimator. Returns (value, relative disagreement).
    fn norm_of(&self, window: &Window, image: &Block) -> Result<(f64, f64)> {
        let m = window.compress(image);
        let main = compressed_norm(&m, self.norm)?.value;
        let other = match self.norm {
            NormMethod::PowerIteration => NormMethod::DenseSvd,
            NormMethod::DenseSvd => NormMethod::PowerIteration,
        };
        let check = compressed_norm(&m, other)?.value;
        let scale = main.max(check);
        let disagreement = if scale > 0.0 { (main - check).abs() / scale } else { 0.0 };
        Ok((main, disagreement))
    }
}

/// Runs `f` over `items` on up to `threads` scoped threads; output order
/// follows the input.
fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let f = &f;
                scope.spawn(move || {
                    (w..items.len())
                        .step_by(threads)
                        .map(|k| (k, f(&items[k])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (k, r) in h.join().expect("study worker panicked") {
                slots[k] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every row computed")).collect()
}

/// The step operator E⁽ᴺ⁾(t, s).
fn step_operator(p: &dyn Potential, s: f64, t: f64, hbar: f64, order: usize, ctx: &StudyContext) -> Result<KernelOperator> {
    if order == 0 {
        build_e0_with(p, s, t, &ctx.grid, hbar, &ctx.tables)
    } else {
        Ok(build_en_gn_with(p, s, t, &ctx.grid, hbar, order, &ctx.tables)?.0)
    }
}

/// E⁽ᴺ⁾(Ω)·QΛ, reusing one step matrix when the potential is autonomous and
/// the slices are equal.
fn chain_block(p: &dyn Potential, sub: &Subdivision, hbar: f64, order: usize, ctx: &StudyContext, start: &Block) -> Result<Block> {
    let times = sub.times();
    let h0 = times[1] - times[0];
    let uniform = sub.intervals().all(|(a, b)| ((b - a) - h0).abs() <= 1e-12 * h0.max(1.0));
    let mut block = start.clone();
    if p.is_autonomous() && uniform {
        let op = step_operator(p, times[0], times[1], hbar, order, ctx)?;
        for _ in 0..sub.slices() {
            block = op.apply_block(&block);
        }
    } else {
        for (a, b) in sub.intervals() {
            block = step_operator(p, a, b, hbar, order, ctx)?.apply_block(&block);
        }
    }
    Ok(block)
}

/// Windowed error of one subdivision against a reference block on the same
/// window. Returns (error, estimator disagreement).
pub fn subdivision_error(
    p: &dyn Potential,
    sub: &Subdivision,
    hbar: f64,
    order: usize,
    ctx: &StudyContext,
    reference: &ReferenceBlock,
) -> Result<(f64, f64)> {
    let window = ctx.window(hbar)?;
    let block = chain_block(p, sub, hbar, order, ctx, &window.right())?;
    ctx.norm_of(&window, &block.sub(&reference.block))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    /// ω(Ω), or t − s for single-step studies.
    pub mesh: f64,
    pub slices: usize,
    pub error: f64,
    /// False when the row sits on the reference error floor.
    pub fitted: bool,
    /// Relative disagreement between power iteration and dense SVD.
    pub norm_disagreement: f64,
    /// Telescoping bound r·Σ_k ‖E‖^k from the single-step remainder, when
    /// computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triangle_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub mesh: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub scenario: String,
    pub potential: String,
    pub hbar: f64,
    #[serde(rename = "N")]
    pub order: usize,
    pub s: f64,
    pub t: f64,
    pub rows: Vec<StudyRow>,
    pub dropped: Vec<DroppedRow>,
    pub fit: Option<PowerLawFit>,
    /// Why no slope was fitted.
    pub degenerate: Option<String>,
    /// Largest Richardson estimate among the references used.
    pub reference_error: f64,
    /// Refining by bisection never grew the error by more than 10%.
    pub monotone: bool,
}

/// The JSON summary written next to the CSV table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub scenario: String,
    pub slope: Option<f64>,
    #[serde(rename = "logC")]
    pub log_c: Option<f64>,
    pub r_squared: Option<f64>,
    pub hbar: f64,
    #[serde(rename = "N")]
    pub order: usize,
    pub potential: String,
    pub rows: usize,
    pub degenerate: Option<String>,
}

impl ConvergenceStudy {
    fn finish(mut self) -> Self {
        let floor = FLOOR_FACTOR * self.reference_error;
        for r in &mut self.rows {
            r.fitted = r.error > floor;
        }
        let pts: Vec<(f64, f64)> = self.rows.iter().filter(|r| r.fitted).map(|r| (r.mesh, r.error)).collect();
        match fit_power_law(&pts) {
            Ok(f) => self.fit = Some(f),
            Err(Error::DegenerateFit(why)) => self.degenerate = Some(why),
            Err(e) => self.degenerate = Some(e.to_string()),
        }
        self.monotone = monotone(&self.rows, floor);
        self
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn summary(&self) -> StudySummary {
        StudySummary {
            scenario: self.scenario.clone(),
            slope: self.fit.map(|f| f.slope),
            log_c: self.fit.map(|f| f.log_c),
            r_squared: self.fit.map(|f| f.r_squared),
            hbar: self.hbar,
            order: self.order,
            potential: self.potential.clone(),
            rows: self.rows.len(),
            degenerate: self.degenerate.clone(),
        }
    }

    /// `mesh,error,hbar,N` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mesh,error,hbar,N\n");
        for r in &self.rows {
            out.push_str(&format!("{:.12e},{:.12e},{},{}\n", r.mesh, r.error, self.hbar, self.order));
        }
        out
    }

    /// Largest disagreement between the two norm estimators over the rows.
    pub fn norm_disagreement(&self) -> f64 {
        self.rows.iter().map(|r| r.norm_disagreement).fold(0.0, f64::max)
    }

    /// True when no row exceeds its telescoping bound by more than 10%.
    pub fn triangle_holds(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.triangle_bound.is_none_or(|b| r.error <= MONOTONE_SLACK * b))
    }
}

fn monotone(rows: &[StudyRow], floor: f64) -> bool {
    rows.iter().all(|a| {
        rows.iter()
            .filter(|b| b.slices == 2 * a.slices)
            .all(|b| b.error <= MONOTONE_SLACK * a.error + floor)
    })
}

fn check_order(order: usize) -> Result<()> {
    if order > 2 {
        return Err(Error::InvalidArgument(format!("parametrix order {order} not in {{0, 1, 2}}")));
    }
    Ok(())
}

/// ‖E⁽ᴺ⁾(Ω_L) − U_ref(t, s)‖ over uniform subdivisions with the given slice
/// counts, fitted against ω(Ω).
pub fn convergence_study(
    p: &dyn Potential,
    s: f64,
    t: f64,
    hbar: f64,
    order: usize,
    slices: &[usize],
    ctx: &StudyContext,
) -> Result<ConvergenceStudy> {
    check_order(order)?;
    if slices.is_empty() {
        return Err(Error::InvalidArgument("empty mesh list".into()));
    }
    let subs = slices
        .iter()
        .map(|&l| Subdivision::uniform(s, t, l, ctx.delta_max))
        .collect::<Result<Vec<_>>>()?;
    let window = ctx.window(hbar)?;
    let reference = reference_on_window(p, s, t, hbar, &window, &ctx.reference)?;
    let mut study = ConvergenceStudy {
        scenario: format!("converge_{}", p.label()),
        potential: p.label(),
        hbar,
        order,
        s,
        t,
        rows: Vec::new(),
        dropped: Vec::new(),
        fit: None,
        degenerate: None,
        reference_error: reference.richardson,
        monotone: true,
    };
    let row_ctx = StudyContext {
        tables: TableOptions {
            threads: if ctx.threads > 1 && subs.len() > 1 { 1 } else { ctx.tables.threads },
            ..ctx.tables
        },
        ..*ctx
    };
    let results = par_map(&subs, ctx.threads, |sub| {
        let (error, disagreement) = subdivision_error(p, sub, hbar, order, &row_ctx, &reference)?;
        let bound = if p.is_autonomous() && order == 0 {
            Some(triangle_bound(p, sub, hbar, order, &row_ctx, &window)?)
        } else {
            None
        };
        Ok::<_, Error>((error, disagreement, bound))
    });
    for (sub, res) in subs.iter().zip(results) {
        match res {
            Ok((error, norm_disagreement, triangle_bound)) => study.rows.push(StudyRow {
                mesh: sub.mesh(),
                slices: sub.slices(),
                error,
                fitted: true,
                norm_disagreement,
                triangle_bound,
            }),
            Err(e @ Error::UndersampledPhase { .. }) => study.dropped.push(DroppedRow {
                mesh: sub.mesh(),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(study.finish())
}

/// r·Σ_{k<L} ‖E‖^k with r = ‖E(h) − U(h)‖ for a uniform autonomous E⁽⁰⁾ sweep;
/// the telescoping sum with ‖U‖ ≤ 1.
fn triangle_bound(p: &dyn Potential, sub: &Subdivision, hbar: f64, order: usize, ctx: &StudyContext, window: &Window) -> Result<f64> {
    let (a, b) = sub.intervals().next().expect("at least one slice");
    let op = step_operator(p, a, b, hbar, order, ctx)?;
    let right = window.right();
    let image = op.apply_block(&right);
    let step_ref = reference_on_window(p, a, b, hbar, window, &ctx.reference)?;
    let r = ctx.norm_of(window, &image.sub(&step_ref.block))?.0;
    let e = ctx.norm_of(window, &image)?.0;
    Ok(r * (0..sub.slices()).map(|k| e.powi(k as i32)).sum::<f64>())
}

/// ‖E⁽ᴺ⁾(s + h, s) − U_ref(s + h, s)‖ for each step h, fitted against h.
pub fn single_step_study(
    p: &dyn Potential,
    s: f64,
    hbar: f64,
    order: usize,
    dts: &[f64],
    ctx: &StudyContext,
) -> Result<ConvergenceStudy> {
    check_order(order)?;
    if dts.is_empty() {
        return Err(Error::InvalidArgument("empty step list".into()));
    }
    if let Some(&bad) = dts.iter().find(|&&h| !(h > 0.0 && h <= ctx.delta_max)) {
        return Err(Error::InvalidArgument(format!("step {bad} not in (0, {}]", ctx.delta_max)));
    }
    let window = ctx.window(hbar)?;
    let mut study = ConvergenceStudy {
        scenario: format!("single_step_{}", p.label()),
        potential: p.label(),
        hbar,
        order,
        s,
        t: s + dts.iter().copied().fold(0.0, f64::max),
        rows: Vec::new(),
        dropped: Vec::new(),
        fit: None,
        degenerate: None,
        reference_error: 0.0,
        monotone: true,
    };
    let results = par_map(dts, ctx.threads, |&h| {
        let reference = reference_on_window(p, s, s + h, hbar, &window, &ctx.reference)?;
        let sub = Subdivision::new(vec![s, s + h], ctx.delta_max)?;
        let (error, disagreement) = subdivision_error(p, &sub, hbar, order, ctx, &reference)?;
        Ok::<_, Error>((error, disagreement, reference.richardson))
    });
    for (&h, res) in dts.iter().zip(results) {
        match res {
            Ok((error, norm_disagreement, rich)) => {
                study.reference_error = study.reference_error.max(rich);
                study.rows.push(StudyRow {
                    mesh: h,
                    slices: 1,
                    error,
                    fitted: true,
                    norm_disagreement,
                    triangle_bound: None,
                });
            }
            Err(e @ Error::UndersampledPhase { .. }) => study.dropped.push(DroppedRow {
                mesh: h,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(study.finish())
}

/// Error of one uniform sweep point at several ℏ, scaled by ℏᴺ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbarScaling {
    pub potential: String,
    #[serde(rename = "N")]
    pub order: usize,
    pub mesh: f64,
    /// (ℏ, error, error/ℏᴺ)
    pub rows: Vec<(f64, f64, f64)>,
    /// max/min − 1 of the scaled errors.
    pub spread: f64,
}

pub fn hbar_scaling(
    p: &dyn Potential,
    s: f64,
    t: f64,
    order: usize,
    slices: usize,
    hbars: &[f64],
    ctx: &StudyContext,
) -> Result<HbarScaling> {
    check_order(order)?;
    if hbars.is_empty() {
        return Err(Error::InvalidArgument("empty hbar list".into()));
    }
    let sub = Subdivision::uniform(s, t, slices, ctx.delta_max)?;
    let mut rows = Vec::new();
    for &hbar in hbars {
        let window = ctx.window(hbar)?;
        let reference = reference_on_window(p, s, t, hbar, &window, &ctx.reference)?;
        let (error, _) = subdivision_error(p, &sub, hbar, order, ctx, &reference)?;
        rows.push((hbar, error, error / hbar.powi(order as i32)));
    }
    let hi = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let lo = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    Ok(HbarScaling {
        potential: p.label(),
        order,
        mesh: sub.mesh(),
        rows,
        spread: hi / lo - 1.0,
    })
}

/// Residual identity defect for one test function at one (t, ℏ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityDefect {
    pub dt: f64,
    pub hbar: f64,
    pub function: usize,
    /// ‖(iℏ∂ₜ + ½ℏ²Δ − V)E⁽⁰⁾f − G⁽⁰⁾f‖/‖f‖
    pub relative_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub dt: f64,
    pub g_norm: f64,
    pub hbar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub potential: String,
    pub s: f64,
    pub rows: Vec<ResidualRow>,
    pub identity: Vec<IdentityDefect>,
    /// Fit of ‖G⁽⁰⁾‖ against t − s, one per ℏ.
    pub dt_fits: Vec<(f64, Option<PowerLawFit>)>,
    /// Fit of ‖G⁽⁰⁾‖ against ℏ, one per t − s.
    pub hbar_fits: Vec<(f64, Option<PowerLawFit>)>,
    pub max_defect: f64,
}

impl ResidualReport {
    /// `dt,g_norm,hbar` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dt,g_norm,hbar\n");
        for r in &self.rows {
            out.push_str(&format!("{:.12e},{:.12e},{}\n", r.dt, r.g_norm, r.hbar));
        }
        out
    }

    /// ‖G⁽⁰⁾‖ at ℏ = a over ℏ = b, at step `dt`.
    pub fn hbar_ratio(&self, dt: f64, a: f64, b: f64) -> Option<f64> {
        let find = |h: f64| {
            self.rows
                .iter()
                .find(|r| r.dt == dt && r.hbar == h)
                .map(|r| r.g_norm)
        };
        Some(find(a)? / find(b)?)
    }
}

/// FD half-width in t for the residual identity.
pub const RESIDUAL_FD_STEP: f64 = 1e-4;

/// Checks (iℏ∂ₜ + ½ℏ²Δ − V)E⁽⁰⁾(t, s)f = G⁽⁰⁾(t, s)f on each test function and
/// measures ‖G⁽⁰⁾(t, s)‖ on the window for every (t − s, ℏ).
pub fn residual_check(
    p: &dyn Potential,
    s: f64,
    dts: &[f64],
    hbars: &[f64],
    functions: &[WaveFunction],
    ctx: &StudyContext,
) -> Result<ResidualReport> {
    if dts.is_empty() || hbars.is_empty() {
        return Err(Error::InvalidArgument("residual check needs steps and hbar values".into()));
    }
    if functions.iter().any(|f| f.grid != ctx.grid) {
        return Err(Error::InvalidArgument("test function lives on a different grid".into()));
    }
    let h = RESIDUAL_FD_STEP;
    let spectral = Spectral::new(&ctx.grid);
    let xs = ctx.grid.points();
    let mut report = ResidualReport {
        potential: p.label(),
        s,
        rows: Vec::new(),
        identity: Vec::new(),
        dt_fits: Vec::new(),
        hbar_fits: Vec::new(),
        max_defect: 0.0,
    };
    for &hbar in hbars {
        let window = ctx.window(hbar)?;
        for &dt in dts {
            if !(dt > h && dt <= ctx.delta_max) {
                return Err(Error::InvalidArgument(format!("step {dt} not in ({h}, {}]", ctx.delta_max)));
            }
            let t = s + dt;
            let (e, g) = build_en_gn_with(p, s, t, &ctx.grid, hbar, 0, &ctx.tables)?;
            let g_norm = ctx.norm_of(&window, &g.apply_block(&window.right()))?.0;
            report.rows.push(ResidualRow { dt, g_norm, hbar });
            let near_jump = !p.time_discontinuities(t - 2.0 * h, t + 2.0 * h).is_empty();
            if near_jump || functions.is_empty() {
                continue;
            }
            let plus = build_e0_with(p, s, t + h, &ctx.grid, hbar, &ctx.tables)?;
            let minus = build_e0_with(p, s, t - h, &ctx.grid, hbar, &ctx.tables)?;
            for (idx, f) in functions.iter().enumerate() {
                let ef = e.matrix.apply(&f.values);
                let lap = spectral.laplacian(&ef);
                let dplus = plus.matrix.apply(&f.values);
                let dminus = minus.matrix.apply(&f.values);
                let gf = g.matrix.apply(&f.values);
                let i_hbar = Complex64::new(0.0, hbar);
                let defect: Vec<Complex64> = (0..xs.len())
                    .map(|k| {
                        let dt_term = i_hbar * (dplus[k] - dminus[k]) / (2.0 * h);
                        let v = p.value(t, &[xs[k]]);
                        dt_term + 0.5 * hbar * hbar * lap[k] - v * ef[k] - gf[k]
                    })
                    .collect();
                let rel = norm(&defect) / norm(&f.values);
                report.max_defect = report.max_defect.max(rel);
                report.identity.push(IdentityDefect {
                    dt,
                    hbar,
                    function: idx,
                    relative_defect: rel,
                });
            }
        }
    }
    let fit_of = |pts: Vec<(f64, f64)>| fit_power_law(&pts).ok();
    for &hbar in hbars {
        let pts = report.rows.iter().filter(|r| r.hbar == hbar).map(|r| (r.dt, r.g_norm)).collect();
        report.dt_fits.push((hbar, fit_of(pts)));
    }
    for &dt in dts {
        let pts = report.rows.iter().filter(|r| r.dt == dt).map(|r| (r.hbar, r.g_norm)).collect();
        report.hbar_fits.push((dt, fit_of(pts)));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongLimitReport {
    pub potential: String,
    pub hbar: f64,
    /// (t, ‖E⁽⁰⁾(t, 0)f − f‖)
    pub rows: Vec<(f64, f64)>,
    pub f_norm: f64,
    pub strictly_decreasing: bool,
    /// Last error over ‖f‖.
    pub final_ratio: f64,
    pub passed: bool,
}

/// Largest final error allowed, relative to ‖f‖.
pub const STRONG_LIMIT_FINAL: f64 = 0.05;

/// ‖E⁽⁰⁾(t, 0)f − f‖ along decreasing times.
pub fn strong_limit_check(p: &dyn Potential, hbar: f64, f: &WaveFunction, ts: &[f64], ctx: &StudyContext) -> Result<StrongLimitReport> {
    if ts.is_empty() {
        return Err(Error::InvalidArgument("empty time list".into()));
    }
    if ts.windows(2).any(|w| !(w[1] < w[0])) || ts.iter().any(|&t| !(t > 0.0 && t <= ctx.delta_max)) {
        return Err(Error::InvalidArgument(format!(
            "times must decrease strictly within (0, {}]",
            ctx.delta_max
        )));
    }
    if f.grid != ctx.grid {
        return Err(Error::InvalidArgument("test function lives on a different grid".into()));
    }
    let f_norm = f.l2_norm();
    let w = ctx.grid.weight().sqrt();
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let e = build_e0_with(p, 0.0, t, &ctx.grid, hbar, &ctx.tables)?;
        let ef = e.matrix.apply(&f.values);
        let diff: Vec<Complex64> = ef.iter().zip(&f.values).map(|(a, b)| a - b).collect();
        rows.push((t, norm(&diff) * w));
    }
    let strictly_decreasing = rows.windows(2).all(|r| r[1].1 < r[0].1);
    let final_ratio = rows.last().expect("non-empty").1 / f_norm;
    Ok(StrongLimitReport {
        potential: p.label(),
        hbar,
        rows,
        f_norm,
        strictly_decreasing,
        final_ratio,
        passed: strictly_decreasing && final_ratio <= STRONG_LIMIT_FINAL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeRow {
    pub dt: f64,
    pub a1_min: f64,
    pub a1_max: f64,
    /// max |a₁ − 1| on the inner window.
    pub a1_dev: f64,
    /// max |a₂| on the inner window (order 2 only).
    pub a2_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSweep {
    pub potential: String,
    pub rows: Vec<AmplitudeRow>,
    pub a1_fit: Option<PowerLawFit>,
    pub a2_fit: Option<PowerLawFit>,
}

/// Sup-norms of the amplitudes over pairs with both points in |x| ≤ ρL.
pub fn amplitude_sweep(p: &dyn Potential, s: f64, dts: &[f64], order: usize, ctx: &StudyContext) -> Result<AmplitudeSweep> {
    if dts.is_empty() {
        return Err(Error::InvalidArgument("empty step list".into()));
    }
    let grid = ctx.grid;
    let n = grid.n;
    let radius = grid.rho * grid.half_width;
    let inner: Vec<usize> = (0..n).filter(|&i| grid.point(i).abs() <= radius).collect();
    let mut rows = Vec::new();
    for &dt in dts {
        if !(dt > 0.0 && dt <= ctx.delta_max) {
            return Err(Error::InvalidArgument(format!("step {dt} not in (0, {}]", ctx.delta_max)));
        }
        // The amplitudes do not depend on ℏ.
        let amps = build_amplitudes_with(p, s, s + dt, &grid, order, 1.0, &ctx.tables)?;
        let pick = |v: &[f64]| -> Vec<f64> {
            inner.iter().flat_map(|&i| inner.iter().map(move |&j| v[i * n + j])).collect()
        };
        let a1 = pick(&amps.a[0]);
        let a2_max = amps.a.get(1).map(|a2| pick(a2).iter().map(|v| v.abs()).fold(0.0, f64::max));
        rows.push(AmplitudeRow {
            dt,
            a1_min: a1.iter().copied().fold(f64::INFINITY, f64::min),
            a1_max: a1.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            a1_dev: a1.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max),
            a2_max,
        });
    }
    let a1_fit = fit_power_law(&rows.iter().map(|r| (r.dt, r.a1_dev)).collect::<Vec<_>>()).ok();
    let a2_fit = if order == 2 {
        fit_power_law(&rows.iter().map(|r| (r.dt, r.a2_max.unwrap_or(0.0))).collect::<Vec<_>>()).ok()
    } else {
        None
    };
    Ok(AmplitudeSweep {
        potential: p.label(),
        rows,
        a1_fit,
        a2_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::CatalogPotential;

    fn ctx() -> StudyContext {
        StudyContext::new(Grid::new(1, 256, 12.0, 0.5).unwrap())
    }

    #[test]
    fn free_sweep_is_exact_and_degenerate() {
        let p = CatalogPotential::free(1);
        let study = convergence_study(&p, 0.0, 0.4, 1.0, 0, &[2, 4, 8, 16], &ctx()).unwrap();
        assert!(study.rows.iter().all(|r| r.error <= 1e-6), "{:?}", study.rows);
        assert!(study.fit.is_none() && study.degenerate.is_some());
        assert!(study.to_csv().starts_with("mesh,error,hbar,N\n"));
    }

    #[test]
    fn harmonic_sweep_is_first_order() {
        let p = CatalogPotential::harmonic(1.0, 1);
        let study = convergence_study(&p, 0.0, 0.4, 1.0, 0, &[2, 4, 8, 16], &ctx()).unwrap();
        let slope = study.slope().unwrap();
        assert!((slope - 1.0).abs() < 0.15, "{slope}");
        assert!(study.monotone && study.triangle_holds());
        assert!(study.norm_disagreement() < 1e-8);
    }

    #[test]
    fn threads_do_not_change_the_rows() {
        let p = CatalogPotential::harmonic(1.0, 1);
        let one = convergence_study(&p, 0.0, 0.4, 1.0, 0, &[2, 4], &ctx()).unwrap();
        let two = convergence_study(&p, 0.0, 0.4, 1.0, 0, &[2, 4], &StudyContext { threads: 2, ..ctx() }).unwrap();
        assert_eq!(one.rows, two.rows);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let p = CatalogPotential::harmonic(1.0, 1);
        assert!(convergence_study(&p, 0.0, 0.4, 1.0, 0, &[], &ctx()).is_err());
        assert!(single_step_study(&p, 0.0, 1.0, 0, &[0.5], &ctx()).is_err());
    }

    #[test]
    fn free_strong_limit_is_exact() {
        let c = ctx();
        let f = WaveFunction::gaussian(c.grid, 0.3, 0.7, 0.0);
        let p = CatalogPotential::free(1);
        let rep = strong_limit_check(&p, 1.0, &f, &[0.2, 0.1, 0.05], &c).unwrap();
        // E⁽⁰⁾ = U for V = 0; the distance to f is free spreading, not error.
        let exact = crate::kernels::exact_propagator(crate::kernels::ExactKind::Free, 0.0, 0.2, &c.grid, 1.0).unwrap();
        let want = exact.matrix.apply(&f.values);
        let got = build_e0_with(&p, 0.0, 0.2, &c.grid, 1.0, &c.tables).unwrap().matrix.apply(&f.values);
        let gap = got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(gap <= 1e-10);
        assert!(rep.strictly_decreasing);
    }

    #[test]
    fn residual_identity_holds_for_harmonic() {
        let c = ctx();
        let p = CatalogPotential::harmonic(1.0, 1);
        let f = WaveFunction::gaussian(c.grid, 0.0, 0.8, 0.5);
        let rep = residual_check(&p, 0.0, &[0.05, 0.1, 0.2], &[1.0, 0.5], &[f], &c).unwrap();
        assert!(rep.max_defect <= 1e-4, "{rep:?}");
        let r = rep.hbar_ratio(0.1, 1.0, 0.5).unwrap();
        assert!((r - 2.0).abs() < 0.3, "{r}");
    }
}
