//! Merging run manifests into one report with plot-ready log-log tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::manifest::{Check, Figure, Manifest, MANIFEST_SCHEMA};
use super::{ArtifactWriter, Findings};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub manifest: String,
    pub subcommand: String,
    pub config_hash: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub figures: Vec<String>,
}

/// One line of the slope table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub scenario: String,
    pub figure: String,
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
    pub expected_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub scenarios: BTreeMap<String, ReportEntry>,
    pub slope_table: Vec<SlopeRow>,
    pub warnings: Vec<String>,
}

/// `log10_x,log10_y` rows; points with a non-positive coordinate are left out.
fn figure_csv(fig: &Figure) -> String {
    let mut out = format!("log10_{},log10_{}\n", fig.x_label, fig.y_label);
    for &(x, y) in &fig.points {
        if x > 0.0 && y > 0.0 {
            out.push_str(&format!("{:.12e},{:.12e}\n", x.log10(), y.log10()));
        }
    }
    out
}

/// Merges manifests keyed by scenario id. A scenario id seen twice gets a
/// `#k` suffix and a warning; if the two runs came from different configs
/// the merge is refused unless `allow_mixed` is set.
pub fn emit_report(manifests: &[PathBuf], allow_mixed: bool) -> Result<(Report, Vec<(String, String)>)> {
    if manifests.is_empty() {
        return Err(Error::Config("report needs at least one manifest".into()));
    }
    let mut report = Report {
        schema: MANIFEST_SCHEMA.into(),
        scenarios: BTreeMap::new(),
        slope_table: Vec::new(),
        warnings: Vec::new(),
    };
    let mut hashes: BTreeMap<String, String> = BTreeMap::new();
    let mut figures = Vec::new();
    for path in manifests {
        let m = Manifest::read(path)?;
        if let Some(first) = hashes.get(&m.scenario) {
            if *first != m.config_hash && !allow_mixed {
                return Err(Error::Config(format!(
                    "scenario `{}` appears with config hashes {} and {}; rerun with --allow-mixed to merge",
                    m.scenario,
                    &first[..12],
                    &m.config_hash[..12.min(m.config_hash.len())]
                )));
            }
        } else {
            hashes.insert(m.scenario.clone(), m.config_hash.clone());
        }
        let mut key = m.scenario.clone();
        let mut k = 1;
        while report.scenarios.contains_key(&key) {
            k += 1;
            key = format!("{}#{k}", m.scenario);
        }
        if k > 1 {
            let msg = format!("duplicate scenario `{}` from {} stored as `{key}`", m.scenario, path.display());
            eprintln!("warning: {msg}");
            report.warnings.push(msg);
        }
        let mut names = Vec::new();
        for fig in &m.figures {
            let file = format!("figure_{}_{}.csv", key.replace('#', "_"), fig.name);
            figures.push((file.clone(), figure_csv(fig)));
            names.push(file);
            report.slope_table.push(SlopeRow {
                scenario: key.clone(),
                figure: fig.name.clone(),
                slope: fig.fit.map(|f| f.slope),
                r_squared: fig.fit.map(|f| f.r_squared),
                expected_slope: fig.expected_slope,
            });
        }
        report.scenarios.insert(
            key,
            ReportEntry {
                manifest: path.display().to_string(),
                subcommand: m.subcommand.clone(),
                config_hash: m.config_hash.clone(),
                passed: m.passed(),
                checks: m.checks.clone(),
                figures: names,
            },
        );
    }
    Ok((report, figures))
}

pub(crate) fn run(cfg: &ScenarioConfig, allow_mixed: bool, scenario: &str, w: &mut ArtifactWriter) -> Result<Findings> {
    let (report, figures) = emit_report(&cfg.report.manifests, allow_mixed)?;
    for (name, body) in &figures {
        w.csv(name, body)?;
    }
    let checks = report
        .scenarios
        .iter()
        .map(|(key, e)| {
            let failed: Vec<&str> = e.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            let detail = if failed.is_empty() {
                format!("{} checks passed", e.checks.len())
            } else {
                format!("failed: {}", failed.join(", "))
            };
            Check::new(key.clone(), e.passed, detail)
        })
        .collect();
    let studies = serde_json::to_value(&report).map_err(|e| Error::Io(e.to_string()))?;
    w.json(&format!("{scenario}.json"), &studies)?;
    Ok(Findings {
        checks,
        figures: Vec::new(),
        studies,
    })
}

/// Manifests in `dir`, sorted by file name.
pub fn manifests_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".manifest.json"))
        .collect();
    out.sort();
    Ok(out)
}
