//! TOML scenario files.
//!
//! Every value that a precondition can reject is read as `Spanned`, so a
//! validation failure points at the offending line of the file.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::analysis::{StudyContext, WindowSpec, DELTA_MAX};
use crate::error::{Error, Result};
use crate::kernels::{Grid, ReferenceOptions, TableOptions};
use crate::potential::{make_potential, CatalogId, CatalogPotential, Params, Potential};

type S<T> = Spanned<T>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<S<String>>,
    potential: Option<RawPotential>,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    converge: RawConverge,
    #[serde(default)]
    window: RawWindow,
    #[serde(default)]
    numerics: RawNumerics,
    #[serde(default)]
    thresholds: RawThresholds,
    #[serde(default)]
    flow: RawFlow,
    #[serde(default)]
    action: RawAction,
    #[serde(default)]
    assume_a: RawAssume,
    #[serde(default)]
    higher_order: RawHigher,
    #[serde(default)]
    residual: RawResidual,
    #[serde(default)]
    strong_limit: RawStrong,
    #[serde(default)]
    report: RawReport,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    id: S<String>,
    #[serde(default)]
    params: BTreeMap<String, S<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    d: Option<S<usize>>,
    n: Option<S<usize>>,
    #[serde(rename = "L")]
    half_width: Option<S<f64>>,
    rho: Option<S<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    hbar: Option<S<Vec<f64>>>,
    #[serde(rename = "N")]
    order: Option<S<usize>>,
    s: Option<S<f64>>,
    t: Option<S<f64>>,
    slices: Option<S<Vec<usize>>>,
    meshes: Option<S<Vec<f64>>>,
    dts: Option<S<Vec<f64>>>,
    seed: Option<u64>,
    out: Option<String>,
    delta_max: Option<S<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConverge {
    random_slices: Option<S<Vec<usize>>>,
    random_draws: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    kind: Option<S<String>>,
    edge: Option<f64>,
    band: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    substeps: Option<usize>,
    richardson_tol: Option<f64>,
    max_substeps: Option<usize>,
    gl_nodes: Option<S<usize>>,
    quadrature_a1: Option<bool>,
    norm: Option<S<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    slope: Option<f64>,
    slope_tol: Option<f64>,
    r_squared: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    lattice: Option<S<usize>>,
    y_max: Option<f64>,
    zeta_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    pairs: Option<S<Vec<[f64; 2]>>>,
    dt: Option<S<f64>>,
    fd_step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAssume {
    resolutions: Option<S<Vec<usize>>>,
    times: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHigher {
    amplitude_dts: Option<S<Vec<f64>>>,
    scaling_hbar: Option<S<Vec<f64>>>,
    scaling_slices: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResidual {
    /// [x0, sigma, k0] per test function.
    gaussians: Option<S<Vec<[f64; 3]>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrong {
    ts: Option<S<Vec<f64>>>,
    gaussian: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    manifests: Option<S<Vec<String>>>,
    allow_mixed: Option<bool>,
}

/// A validated scenario file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub path: PathBuf,
    /// SHA-256 of the file bytes.
    pub hash: String,
    pub scenario: Option<String>,
    pub catalog_id: CatalogId,
    pub params: Params,
    #[serde(skip)]
    pub potential: CatalogPotential,
    pub grid: Grid,
    pub hbar: Vec<f64>,
    pub order: usize,
    pub s: f64,
    pub t: f64,
    /// Slice counts for sweeps, from `slices` or from `meshes`.
    pub slices: Vec<usize>,
    pub dts: Vec<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub delta_max: f64,
    pub random: RandomSection,
    pub window: WindowSpec,
    pub reference: ReferenceOptions,
    pub tables: TableOptions,
    pub norm: crate::analysis::NormMethod,
    pub thresholds: Thresholds,
    pub flow: FlowSection,
    pub action: ActionSection,
    pub assume_a: AssumeSection,
    pub higher_order: HigherSection,
    pub residual: ResidualSection,
    pub strong_limit: StrongSection,
    pub report: ReportSection,
}

/// Overrides for the pass/fail slope test of `converge` and `single-step`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Thresholds {
    pub slope: Option<f64>,
    pub slope_tol: Option<f64>,
    pub r_squared: Option<f64>,
}

/// Seeded random subdivisions checked against the uniform fit. Every slice
/// of a random subdivision needs its own kernel table, so keep the counts small.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RandomSection {
    pub slices: Vec<usize>,
    pub draws: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowSection {
    pub lattice: usize,
    pub y_max: f64,
    pub zeta_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionSection {
    /// (x, y) along the first axis.
    pub pairs: Vec<[f64; 2]>,
    pub dt: f64,
    pub fd_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumeSection {
    pub resolutions: Vec<usize>,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HigherSection {
    pub amplitude_dts: Vec<f64>,
    pub scaling_hbar: Vec<f64>,
    pub scaling_slices: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualSection {
    pub gaussians: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongSection {
    pub ts: Vec<f64>,
    pub gaussian: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportSection {
    pub manifests: Vec<PathBuf>,
    pub allow_mixed: bool,
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Located<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Located<'_> {
    fn err(&self, span: Range<usize>, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!("{}:{}: {msg}", self.path.display(), line_of(self.text, span.start)))
    }

    fn plain(&self, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!("{}: {msg}", self.path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: cannot read: {e}", path.display())))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let loc = Located { path, text };
        let raw: RawConfig = toml::from_str(text).map_err(|e| match e.span() {
            Some(span) => loc.err(span, e.message()),
            None => loc.plain(e.message()),
        })?;
        build(&loc, raw)
    }

    /// Numerical settings for the analysis layer.
    pub fn context(&self, threads: usize) -> StudyContext {
        StudyContext {
            grid: self.grid,
            window: self.window,
            norm: self.norm,
            reference: self.reference,
            tables: TableOptions {
                threads,
                ..self.tables
            },
            delta_max: self.delta_max,
            threads,
        }
    }

    /// Scenario id: the `scenario` key, or `<subcommand>_<catalog id>`.
    pub fn scenario_id(&self, subcommand: &str) -> String {
        self.scenario
            .clone()
            .unwrap_or_else(|| format!("{}_{}", subcommand.replace('-', "_"), self.catalog_id))
    }
}

fn positive_list(loc: &Located, v: &S<Vec<f64>>, what: &str, upper: Option<f64>) -> Result<Vec<f64>> {
    let list = v.get_ref();
    if list.is_empty() {
        return Err(loc.err(v.span(), format!("{what} must not be empty")));
    }
    for &x in list {
        if !(x > 0.0 && x.is_finite()) {
            return Err(loc.err(v.span(), format!("{what} must be positive, got {x}")));
        }
        if let Some(u) = upper {
            if x > u {
                return Err(loc.err(v.span(), format!("{what} entry {x} exceeds delta_max = {u}")));
            }
        }
    }
    Ok(list.clone())
}

fn build_potential(loc: &Located, raw: &RawPotential) -> Result<(CatalogPotential, CatalogId, Params)> {
    let id_span = raw.id.span();
    let catalog_id: CatalogId = raw
        .id
        .get_ref()
        .parse()
        .map_err(|e: Error| loc.err(id_span.clone(), e))?;
    let mut params = Params::new();
    for (k, v) in &raw.params {
        params.insert(k.clone(), *v.get_ref());
    }
    let potential = make_potential(catalog_id, &params).map_err(|e| {
        let span = match &e {
            Error::InvalidParam { key, .. } => raw.params.get(key).map(|v| v.span()),
            _ => None,
        };
        loc.err(span.unwrap_or(id_span), e)
    })?;
    Ok((potential, catalog_id, params))
}

fn build(loc: &Located, raw: RawConfig) -> Result<ScenarioConfig> {
    // A report-only file may leave out [potential].
    let potential = match &raw.potential {
        Some(p) => Some(build_potential(loc, p)?),
        None if raw.report.manifests.is_some() => None,
        None => return Err(loc.plain("missing [potential] section")),
    };

    let desk = Grid::desk();
    let gval = |v: &Option<S<usize>>, dflt| v.as_ref().map(|x| *x.get_ref()).unwrap_or(dflt);
    let d = gval(&raw.grid.d, desk.d);
    let n = gval(&raw.grid.n, desk.n);
    let half_width = raw.grid.half_width.as_ref().map(|x| *x.get_ref()).unwrap_or(desk.half_width);
    let rho = raw.grid.rho.as_ref().map(|x| *x.get_ref()).unwrap_or(desk.rho);
    let grid = Grid::new(d, n, half_width, rho).map_err(|e| {
        let span = raw
            .grid
            .n
            .as_ref()
            .map(|x| x.span())
            .or(raw.grid.d.as_ref().map(|x| x.span()))
            .or(raw.grid.half_width.as_ref().map(|x| x.span()))
            .or(raw.grid.rho.as_ref().map(|x| x.span()));
        match span {
            Some(sp) => loc.err(sp, e),
            None => loc.plain(e),
        }
    })?;
    let (potential, catalog_id, params) =
        potential.unwrap_or_else(|| (CatalogPotential::free(d), CatalogId::Free, Params::new()));
    if potential.dimension() != d {
        let span = raw
            .grid
            .d
            .as_ref()
            .map(|x| x.span())
            .or(raw.potential.as_ref().map(|p| p.id.span()))
            .unwrap_or_default();
        return Err(loc.err(
            span,
            format!("potential has dimension {} but the grid has d = {d}", potential.dimension()),
        ));
    }

    let run = raw.run;
    let delta_max = match &run.delta_max {
        Some(v) if !(*v.get_ref() > 0.0) => return Err(loc.err(v.span(), "delta_max must be positive")),
        Some(v) => *v.get_ref(),
        None => DELTA_MAX,
    };
    let hbar = match &run.hbar {
        Some(v) => positive_list(loc, v, "hbar", None)?,
        None => vec![1.0],
    };
    let order = match &run.order {
        Some(v) if *v.get_ref() > 2 => return Err(loc.err(v.span(), format!("N = {} not in {{0, 1, 2}}", v.get_ref()))),
        Some(v) => *v.get_ref(),
        None => 0,
    };
    let s = run.s.as_ref().map(|v| *v.get_ref()).unwrap_or(0.0);
    let t = run.t.as_ref().map(|v| *v.get_ref()).unwrap_or(0.8);
    if !(t > s) {
        let span = run.t.as_ref().or(run.s.as_ref()).map(|v| v.span());
        let msg = format!("need t > s, got s = {s}, t = {t}");
        return Err(span.map(|sp| loc.err(sp, &msg)).unwrap_or_else(|| loc.plain(&msg)));
    }
    let slices = match (&run.slices, &run.meshes) {
        (Some(a), Some(_)) => return Err(loc.err(a.span(), "give either slices or meshes, not both")),
        (Some(v), None) => {
            let list = v.get_ref();
            if list.is_empty() {
                return Err(loc.err(v.span(), "slices must not be empty"));
            }
            if let Some(&bad) = list.iter().find(|&&l| l == 0 || (t - s) / l as f64 > delta_max) {
                return Err(loc.err(
                    v.span(),
                    format!("slice count {bad} gives a mesh above delta_max = {delta_max}"),
                ));
            }
            list.clone()
        }
        (None, Some(v)) => {
            let meshes = positive_list(loc, v, "meshes", Some(delta_max))?;
            let mut out = Vec::new();
            for m in meshes {
                let l = ((t - s) / m).round();
                if !(l >= 1.0) || ((t - s) / l - m).abs() > 1e-9 * m.max(1.0) {
                    return Err(loc.err(v.span(), format!("mesh {m} does not divide t - s = {}", t - s)));
                }
                out.push(l as usize);
            }
            out
        }
        (None, None) => vec![4, 8, 16, 32, 64],
    };
    let dts = match &run.dts {
        Some(v) => positive_list(loc, v, "dts", Some(delta_max))?,
        None => vec![0.02, 0.04, 0.08, 0.12, 0.2],
    };

    let random = match &raw.converge.random_slices {
        Some(v) if v.get_ref().iter().any(|&l| l == 0) => {
            return Err(loc.err(v.span(), "random_slices entries must be positive"))
        }
        Some(v) => RandomSection {
            slices: v.get_ref().clone(),
            draws: raw.converge.random_draws.unwrap_or(2),
        },
        None => RandomSection::default(),
    };

    let window = match raw.window.kind.as_ref().map(|k| (k.get_ref().as_str(), k.span())) {
        None | Some(("smooth", _)) => WindowSpec::Smooth {
            rho,
            edge: raw.window.edge.unwrap_or(0.5),
            band: raw.window.band.unwrap_or(6.0),
        },
        Some(("sharp", _)) => WindowSpec::Sharp { rho },
        Some((other, span)) => return Err(loc.err(span, format!("window kind `{other}` is not smooth or sharp"))),
    };

    let mut reference = ReferenceOptions::default();
    if let Some(v) = raw.numerics.substeps {
        reference.substeps = v;
    }
    if let Some(v) = raw.numerics.richardson_tol {
        reference.richardson_tol = v;
    }
    if let Some(v) = raw.numerics.max_substeps {
        reference.max_substeps = v;
    }
    let mut tables = TableOptions::default();
    tables.bvp.delta_max = tables.bvp.delta_max.max(delta_max);
    if let Some(v) = &raw.numerics.gl_nodes {
        if *v.get_ref() == 0 {
            return Err(loc.err(v.span(), "gl_nodes must be positive"));
        }
        tables.gl_nodes = *v.get_ref();
    }
    if let Some(v) = raw.numerics.quadrature_a1 {
        tables.quadrature_a1 = v;
    }
    let norm = match raw.numerics.norm.as_ref().map(|k| (k.get_ref().as_str(), k.span())) {
        None | Some(("power_iteration", _)) => crate::analysis::NormMethod::PowerIteration,
        Some(("dense_svd", _)) => crate::analysis::NormMethod::DenseSvd,
        Some((other, span)) => return Err(loc.err(span, format!("norm `{other}` is not power_iteration or dense_svd"))),
    };

    let flow = FlowSection {
        lattice: match &raw.flow.lattice {
            Some(v) if *v.get_ref() < 2 => return Err(loc.err(v.span(), "lattice needs at least 2 points per axis")),
            Some(v) => *v.get_ref(),
            None => 11,
        },
        y_max: raw.flow.y_max.unwrap_or(2.0),
        zeta_max: raw.flow.zeta_max.unwrap_or(0.5),
    };
    let action = ActionSection {
        pairs: match &raw.action.pairs {
            Some(v) if v.get_ref().is_empty() => return Err(loc.err(v.span(), "pairs must not be empty")),
            Some(v) => v.get_ref().clone(),
            None => vec![[1.0, 0.0], [0.5, -0.5], [-1.2, 0.3]],
        },
        dt: match &raw.action.dt {
            Some(v) if !(*v.get_ref() > 0.0 && *v.get_ref() <= delta_max) => {
                return Err(loc.err(v.span(), format!("action dt must lie in (0, {delta_max}]")))
            }
            Some(v) => *v.get_ref(),
            None => 0.2,
        },
        fd_step: raw.action.fd_step.unwrap_or(1e-4),
    };
    let assume_a = AssumeSection {
        resolutions: match &raw.assume_a.resolutions {
            Some(v) if v.get_ref().is_empty() => return Err(loc.err(v.span(), "resolutions must not be empty")),
            Some(v) => v.get_ref().clone(),
            None => vec![grid.n, 2 * grid.n],
        },
        times: raw.assume_a.times.clone().unwrap_or_else(|| vec![s]),
    };
    let higher_order = HigherSection {
        amplitude_dts: match &raw.higher_order.amplitude_dts {
            Some(v) => positive_list(loc, v, "amplitude_dts", Some(delta_max))?,
            None => vec![0.05, 0.1, 0.2],
        },
        scaling_hbar: match &raw.higher_order.scaling_hbar {
            Some(v) => positive_list(loc, v, "scaling_hbar", None)?,
            None => vec![1.0, 0.5, 0.25],
        },
        scaling_slices: raw.higher_order.scaling_slices.unwrap_or(8),
    };
    let residual = ResidualSection {
        gaussians: match &raw.residual.gaussians {
            Some(v) if v.get_ref().iter().any(|g| !(g[1] > 0.0)) => {
                return Err(loc.err(v.span(), "gaussian widths must be positive"))
            }
            Some(v) => v.get_ref().clone(),
            None => vec![[0.0, 0.8, 0.5]],
        },
    };
    let strong_limit = StrongSection {
        ts: match &raw.strong_limit.ts {
            Some(v) => positive_list(loc, v, "ts", Some(delta_max))?,
            None => vec![0.2, 0.1, 0.05, 0.025],
        },
        gaussian: raw.strong_limit.gaussian.unwrap_or([0.5, 0.8, 0.0]),
    };
    let base = loc.path.parent().unwrap_or(Path::new("."));
    let report = ReportSection {
        manifests: raw
            .report
            .manifests
            .as_ref()
            .map(|v| v.get_ref().iter().map(|m| base.join(m)).collect())
            .unwrap_or_default(),
        allow_mixed: raw.report.allow_mixed.unwrap_or(false),
    };

    Ok(ScenarioConfig {
        path: loc.path.to_path_buf(),
        hash: sha256_hex(loc.text.as_bytes()),
        scenario: raw.scenario.map(|v| v.into_inner()),
        catalog_id,
        params,
        potential,
        grid,
        hbar,
        order,
        s,
        t,
        slices,
        dts,
        seed: run.seed.unwrap_or(0),
        out: run.out.map(|o| base.join(o)),
        delta_max,
        random,
        window,
        reference,
        tables,
        norm,
        thresholds: Thresholds {
            slope: raw.thresholds.slope,
            slope_tol: raw.thresholds.slope_tol,
            r_squared: raw.thresholds.r_squared,
        },
        flow,
        action,
        assume_a,
        higher_order,
        residual,
        strong_limit,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig> {
        ScenarioConfig::parse(Path::new("test.toml"), text)
    }

    #[test]
    fn minimal_config_uses_desk_defaults() {
        let c = parse("[potential]\nid = \"harmonic\"\nparams = { omega0 = 1.0 }\n").unwrap();
        assert_eq!(c.grid, Grid::desk());
        assert_eq!(c.slices, vec![4, 8, 16, 32, 64]);
        assert_eq!(c.scenario_id("converge"), "converge_harmonic");
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn empty_mesh_list_points_at_its_line() {
        let text = "[potential]\nid = \"free\"\n\n[run]\nslices = []\n";
        let err = parse(text).unwrap_err().to_string();
        assert!(err.contains("test.toml:5") && err.contains("must not be empty"), "{err}");
    }

    #[test]
    fn meshes_convert_to_slices() {
        let text = "[potential]\nid = \"free\"\n[run]\nt = 0.8\nmeshes = [0.2, 0.1]\n";
        assert_eq!(parse(text).unwrap().slices, vec![4, 8]);
        let bad = "[potential]\nid = \"free\"\n[run]\nt = 0.8\nmeshes = [0.3]\n";
        assert!(parse(bad).unwrap_err().to_string().contains("delta_max"));
    }

    #[test]
    fn unknown_keys_and_ids_are_located() {
        let err = parse("[potential]\nid = \"quartic\"\n").unwrap_err().to_string();
        assert!(err.contains("test.toml:2") && err.contains("quartic"), "{err}");
        let err = parse("[potential]\nid = \"free\"\n[grid]\nsize = 3\n").unwrap_err().to_string();
        assert!(err.contains("test.toml:4"), "{err}");
        let err = parse("[potential]\nid = \"harmonic\"\n").unwrap_err().to_string();
        assert!(err.contains("omega0"), "{err}");
        let err = parse("[run]\nN = 1\n").unwrap_err().to_string();
        assert!(err.contains("missing [potential]"), "{err}");
        let c = parse("[report]\nmanifests = [\"a.manifest.json\"]\n").unwrap();
        assert_eq!(c.potential, CatalogPotential::free(1));
    }
}
