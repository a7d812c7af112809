use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvstab::output::sha256_hex;
use mvstab::RunManifest;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mvstab"));
    c.env("RUST_LOG", "warn");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join(RunManifest::FILE)).unwrap()).unwrap()
}

const SMALL_KURAMOTO: &str = r#"{
  "model": {"variant": "kuramoto", "coupling": 5.0, "sigma": 0.5},
  "target": {"kind": "uniform"},
  "numerics": {"modes": 12},
  "simulation": {"t_end": 4.0, "samples": 41}
}"#;

#[test]
fn synthesize_then_simulate_with_stored_law() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "k5.json", SMALL_KURAMOTO);

    let law_dir = tmp.path().join("law");
    let out = run("synthesize", &cfg, &law_dir, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let law = law_dir.join("feedback_law.json");
    assert!(law.exists());

    let sim_dir = tmp.path().join("sim");
    let law_override = format!("control.law_file={}", serde_json::to_string(&law).unwrap());
    let out = run("simulate", &cfg, &sim_dir, &["--override", &law_override]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let m = manifest(&sim_dir);
    assert!(m.pass);
    assert_eq!(m.kind, "simulate");
    assert!(m.assertions.iter().any(|a| a.name == "controlled/mass"));
    for f in &m.outputs {
        let bytes = fs::read(sim_dir.join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes, "{}", f.path);
        assert_eq!(sha256_hex(&bytes), f.sha256, "{}", f.path);
    }
    let names: Vec<&str> = m.outputs.iter().map(|f| f.path.as_str()).collect();
    for want in [
        "trajectory_controlled.csv",
        "trajectory_uncontrolled.csv",
        "comparison.json",
    ] {
        assert!(names.contains(&want), "{names:?}");
    }

    let traj = fs::read_to_string(sim_dir.join("trajectory_controlled.csv")).unwrap();
    let header = traj.lines().next().unwrap();
    assert_eq!(
        header,
        "t,norm_weighted,norm_l2,free_energy,mass_defect,min_density,u_1,u_2,u_3,u_4"
    );
    assert_eq!(traj.lines().count(), 42);

    let cmp: Value = serde_json::from_str(&fs::read_to_string(sim_dir.join("comparison.json")).unwrap()).unwrap();
    let rates = cmp["fitted_rates"].as_array().unwrap();
    // controlled decays, uncontrolled grows away from the unstable uniform state
    assert!(rates[0].as_f64().unwrap() < -0.9, "{cmp}");
    assert!(rates[1].as_f64().unwrap() > 0.0, "{cmp}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "k5.json", SMALL_KURAMOTO);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert!(run("simulate", &cfg, dir, &["--threads", "2"]).status.success());
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma.outputs, mb.outputs);
}

#[test]
fn compare_subcommand_reads_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "k5.json", SMALL_KURAMOTO);
    let sim = tmp.path().join("sim");
    assert!(run("simulate", &cfg, &sim, &[]).status.success());

    let cmp_dir = tmp.path().join("cmp");
    let out = bin()
        .arg("compare")
        .arg(sim.join("trajectory_controlled.csv"))
        .arg(sim.join("trajectory_uncontrolled.csv"))
        .arg("--out")
        .arg(&cmp_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&cmp_dir);
    assert!(m.outputs.iter().any(|f| f.path == "comparison.csv"));
    // the file-based comparison agrees with the one written during the run
    let direct: Value = serde_json::from_str(&fs::read_to_string(sim.join("comparison.json")).unwrap()).unwrap();
    let loaded: Value = serde_json::from_str(&fs::read_to_string(cmp_dir.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(direct["window"], loaded["window"]);
    let (r0, r1) = (
        direct["fitted_rates"][0].as_f64().unwrap(),
        loaded["fitted_rates"][0].as_f64().unwrap(),
    );
    assert!((r0 - r1).abs() < 1e-12, "{r0} vs {r1}");
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "stationary.json",
        r#"{
  "model": {"variant": "kuramoto", "coupling": 1.0, "sigma": 0.5},
  "target": {"kind": "synchronized"},
  "numerics": {"modes": 16},
  "sweep": {"couplings": [0.8, 2.0]}
}"#,
    );
    let out_dir = tmp.path().join("out");
    assert!(run("stationary", &cfg, &out_dir, &[]).status.success());
    for label in ["coupling_0.8", "coupling_2"] {
        assert!(out_dir.join(label).join("density.csv").exists(), "{label}");
    }
    let m = manifest(&out_dir);
    assert_eq!(m.outputs.len(), 4);
}

#[test]
fn failed_assertion_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    // without control shapes the unstable first mode cannot be reached
    let cfg = write_config(
        tmp.path(),
        "blind.json",
        r#"{
  "model": {"variant": "kuramoto", "coupling": 5.0, "sigma": 0.5},
  "target": {"kind": "uniform"},
  "numerics": {"modes": 8},
  "control": {"count": 0}
}"#,
    );
    let out_dir = tmp.path().join("out");
    let out = run("hautus", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAILED hautus"));
    let m = manifest(&out_dir);
    assert!(!m.pass);
}

#[test]
fn config_errors_name_the_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "typo.json",
        "{\n  \"model\": {\"variant\": \"kuramoto\", \"coupling\": 5.0, \"sigma\": 0.5},\n  \"numerics\": {\"mdoes\": 8}\n}",
    );
    let out = run("spectrum", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("mdoes"), "{err}");
}

#[test]
fn kind_in_config_must_match_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "k.json",
        r#"{"kind": "simulate", "model": {"variant": "kuramoto", "coupling": 5.0, "sigma": 0.5}}"#,
    );
    let out = run("hautus", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not hautus"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = mvstab::ExperimentConfig::load(&path, &[]).unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
        assert!(cfg.kind.is_some(), "{}", path.display());
        cfg.validate().unwrap();
        n += 1;
    }
    assert!(n >= 10);
}
