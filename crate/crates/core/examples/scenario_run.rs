//! Runs a scenario through the CLI layer from an inline config and prints
//! the manifest checks.

use pathslice::cli::{run_scenario, RunOptions, ScenarioConfig, Subcommand};

const CONFIG: &str = r#"
scenario = "example_flow"

[potential]
id = "harmonic"
params = { omega0 = 1.0 }

[run]
dts = [0.01, 0.02, 0.04, 0.08, 0.16]
"#;

fn main() -> pathslice::Result<()> {
    let dir = std::env::temp_dir().join("pathslice_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("flow.toml");
    std::fs::write(&path, CONFIG)?;
    let cfg = ScenarioConfig::parse(&path, CONFIG)?;
    let opts = RunOptions {
        out: Some(dir.join("out")),
        threads: 1,
        ..RunOptions::default()
    };
    let outcome = run_scenario(&cfg, Subcommand::Flow, &opts)?;
    for c in &outcome.manifest.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("artifacts in {}: {:?}", outcome.out_dir.display(), outcome.manifest.artifacts);

    // A config error names the offending line.
    let bad = CONFIG.replace("[run]\n", "[run]\nslices = []\n");
    if let Err(e) = ScenarioConfig::parse(&path, &bad) {
        println!("{e}");
    }
    Ok(())
}
