//! Config-driven scenario runs.
//!
//! Each subcommand reads one TOML scenario file, runs the matching studies and
//! writes CSV tables, a JSON result file and a `v1` manifest into the output
//! directory. Every CSV starts with a `# config_hash=...` comment line.

mod config;
mod manifest;
mod report;
mod scenarios;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};

pub use config::{sha256_hex, ScenarioConfig};
pub use manifest::{versions, Check, Figure, Manifest, Status, MANIFEST_SCHEMA};
pub use report::{emit_report, manifests_in, Report, ReportEntry, SlopeRow};

use crate::error::{Error, Result};

/// Environment variable that overrides the output directory of the config.
pub const OUT_ENV: &str = "PATHSLICE_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    Flow,
    Action,
    AssumeA,
    Converge,
    SingleStep,
    HigherOrder,
    Residual,
    StrongLimit,
    Report,
}

impl Subcommand {
    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Flow => "flow",
            Subcommand::Action => "action",
            Subcommand::AssumeA => "assume-a",
            Subcommand::Converge => "converge",
            Subcommand::SingleStep => "single-step",
            Subcommand::HigherOrder => "higher-order",
            Subcommand::Residual => "residual",
            Subcommand::StrongLimit => "strong-limit",
            Subcommand::Report => "report",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pathslice", version, about = "Time-slicing parametrix experiments")]
pub struct Args {
    #[arg(value_enum)]
    pub subcommand: Subcommand,
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides PATHSLICE_OUT and the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `report` only: merge manifests of one scenario id produced by
    /// different configs.
    #[arg(long)]
    pub allow_mixed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub threads: usize,
    pub seed: Option<u64>,
    pub allow_mixed: bool,
}

/// What a finished run left behind.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    /// 0 when every check passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.manifest.passed() {
            0
        } else {
            2
        }
    }
}

fn out_dir(cfg: &ScenarioConfig, opts: &RunOptions) -> PathBuf {
    if let Some(o) = &opts.out {
        return o.clone();
    }
    if let Some(o) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(o);
    }
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Collects artifacts of one run; every file carries the config hash.
pub(crate) struct ArtifactWriter {
    dir: PathBuf,
    hash: String,
    pub written: Vec<String>,
}

impl ArtifactWriter {
    fn new(dir: &Path, hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &str) -> Result<()> {
        self.write(name, &format!("# config_hash={}\n{table}", self.hash))
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let wrapped = serde_json::json!({ "config_hash": self.hash, "result": value });
        let text = serde_json::to_string_pretty(&wrapped).map_err(|e| Error::Io(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }
}

/// Output of one subcommand before the manifest is assembled.
#[derive(Default)]
pub(crate) struct Findings {
    pub checks: Vec<Check>,
    pub figures: Vec<Figure>,
    pub studies: serde_json::Value,
}

pub fn run_scenario(cfg: &ScenarioConfig, sub: Subcommand, opts: &RunOptions) -> Result<RunOutcome> {
    let started = Instant::now();
    let threads = opts.threads.max(1);
    let seed = opts.seed.unwrap_or(cfg.seed);
    let dir = out_dir(cfg, opts);
    let scenario = cfg.scenario_id(sub.as_str());
    let mut writer = ArtifactWriter::new(&dir, &cfg.hash)?;
    let findings = match sub {
        Subcommand::Report => report::run(cfg, opts.allow_mixed || cfg.report.allow_mixed, &scenario, &mut writer)?,
        _ => scenarios::run(cfg, sub, &scenario, threads, seed, &mut writer)?,
    };
    let status = if findings.checks.iter().all(|c| c.passed) {
        Status::Passed
    } else {
        Status::ThresholdMissed
    };
    let manifest_name = format!("{scenario}.manifest.json");
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        subcommand: sub.as_str().into(),
        scenario: scenario.clone(),
        config_path: cfg.path.display().to_string(),
        config_hash: cfg.hash.clone(),
        seed,
        threads,
        versions: versions(),
        wall_time_s: started.elapsed().as_secs_f64(),
        status,
        checks: findings.checks,
        artifacts: writer.written.clone(),
        figures: findings.figures,
        studies: findings.studies,
    };
    let manifest_path = dir.join(&manifest_name);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&manifest_path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", manifest_path.display())))?;
    Ok(RunOutcome {
        manifest,
        manifest_path,
        out_dir: dir,
    })
}

/// Parses arguments, runs, prints the checks and returns the process exit
/// code: 0 passed, 2 threshold missed, 1 operational error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let opts = RunOptions {
        out: args.out.clone(),
        threads: args.threads,
        seed: args.seed,
        allow_mixed: args.allow_mixed,
    };
    let result = ScenarioConfig::load(&args.config).and_then(|cfg| run_scenario(&cfg, args.subcommand, &opts));
    match result {
        Ok(outcome) => {
            for c in &outcome.manifest.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("manifest: {}", outcome.manifest_path.display());
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
