//! End-to-end runs through the command-line entry point.

use std::path::{Path, PathBuf};

use pathslice::cli::{emit_report, main_with_args, manifests_in, Manifest};

const FLOW: &str = r#"
scenario = "{id}"

[potential]
id = "harmonic"
params = { omega0 = {omega} }

[run]
dts = [0.01, 0.02, 0.04, 0.08, 0.16]

[flow]
lattice = 9
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn flow_config(dir: &Path, file: &str, id: &str, omega: f64) -> PathBuf {
    let text = FLOW.replace("{id}", id).replace("{omega}", &format!("{omega:?}"));
    write(dir, file, &text)
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        "pathslice".to_string(),
        sub.to_string(),
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    main_with_args(args)
}

#[test]
fn empty_mesh_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "empty.toml",
        "scenario = \"empty\"\n[potential]\nid = \"free\"\n[run]\nslices = []\n",
    );
    assert_eq!(run("converge", &cfg, &dir.path().join("out"), &[]), 1);
    assert!(!dir.path().join("out").join("empty.manifest.json").exists());
}

#[test]
fn unknown_key_and_missing_file_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.toml", "scenario = \"t\"\n[potential]\nid = \"free\"\nslope = 1\n");
    assert_eq!(run("flow", &cfg, dir.path(), &[]), 1);
    assert_eq!(run("flow", &dir.path().join("absent.toml"), dir.path(), &[]), 1);
}

#[test]
fn negative_control_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "abs.toml",
        "scenario = \"abs\"\n[potential]\nid = \"abs_cubed\"\n[assume_a]\nresolutions = [512, 1024]\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run("assume-a", &cfg, &out, &[]), 0);
    let m = Manifest::read(&out.join("abs.manifest.json")).unwrap();
    assert_eq!(m.subcommand, "assume-a");
    assert_eq!(m.config_hash.len(), 64);
    for name in &m.artifacts {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        assert!(text.contains(&m.config_hash), "{name} lacks the config hash");
    }
}

#[test]
fn flow_run_writes_manifest_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = flow_config(dir.path(), "flow.toml", "flow_h", 1.0);
    let out = dir.path().join("out");
    assert_eq!(run("flow", &cfg, &out, &["--seed", "9"]), 0);
    let m = Manifest::read(&out.join("flow_h.manifest.json")).unwrap();
    assert!(m.passed());
    assert_eq!(m.seed, 9);
    let csv = out.join(m.artifacts.iter().find(|a| a.ends_with(".csv")).unwrap());
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with(&format!("# config_hash={}\n", m.config_hash)));
}

#[test]
fn report_merges_and_guards_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let a = flow_config(dir.path(), "a.toml", "flow_a", 1.0);
    let b = flow_config(dir.path(), "b.toml", "flow_b", 1.5);
    assert_eq!(run("flow", &a, &out, &[]), 0);
    assert_eq!(run("flow", &b, &out, &[]), 0);
    let manifests = manifests_in(&out).unwrap();
    assert_eq!(manifests.len(), 2);

    let report_cfg = write(
        dir.path(),
        "report.toml",
        "scenario = \"rep\"\n[report]\nmanifests = [\"out/flow_a.manifest.json\", \"out/flow_b.manifest.json\"]\n",
    );
    let rep_out = dir.path().join("rep");
    assert_eq!(run("report", &report_cfg, &rep_out, &[]), 0);
    let m = Manifest::read(&rep_out.join("rep.manifest.json")).unwrap();
    assert_eq!(m.checks.len(), 2);
    assert!(m.artifacts.iter().any(|a| a.starts_with("figure_flow_a_")));

    // The same manifest twice: kept under a suffixed key with a warning.
    let twice = vec![manifests[0].clone(), manifests[0].clone()];
    let (report, _) = emit_report(&twice, false).unwrap();
    assert!(report.scenarios.contains_key("flow_a#2"));
    assert_eq!(report.warnings.len(), 1);

    // One scenario id from two different configs is refused unless allowed.
    let mixed_dir = dir.path().join("mixed");
    let c = flow_config(dir.path(), "c.toml", "flow_a", 2.0);
    assert_eq!(run("flow", &c, &mixed_dir, &[]), 0);
    let mixed = vec![manifests[0].clone(), mixed_dir.join("flow_a.manifest.json")];
    assert!(emit_report(&mixed, false).is_err());
    let (report, _) = emit_report(&mixed, true).unwrap();
    assert_eq!(report.scenarios.len(), 2);
}
