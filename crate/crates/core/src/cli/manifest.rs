use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::PowerLawFit;
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA: &str = "v1";

/// One pass/fail line of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Plot-ready (x, y) series with its power-law fit, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Figure {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
    pub fit: Option<PowerLawFit>,
    pub expected_slope: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    ThresholdMissed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub subcommand: String,
    pub scenario: String,
    pub config_path: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub versions: BTreeMap<String, String>,
    pub wall_time_s: f64,
    pub status: Status,
    pub checks: Vec<Check>,
    /// File names relative to the manifest's directory.
    pub artifacts: Vec<String>,
    pub figures: Vec<Figure>,
    /// Full study results as written to the JSON artifacts.
    pub studies: serde_json::Value,
}

pub fn versions() -> BTreeMap<String, String> {
    let mut v = BTreeMap::new();
    v.insert("pathslice".into(), env!("CARGO_PKG_VERSION").into());
    v.insert("manifest".into(), MANIFEST_SCHEMA.into());
    v
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: corrupt manifest: {e}", path.display())))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::Config(format!(
                "{}: manifest schema `{}`, expected `{MANIFEST_SCHEMA}`",
                path.display(),
                m.schema
            )));
        }
        Ok(m)
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Passed
    }
}
