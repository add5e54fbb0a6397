use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kqsd::config::{self, ConfigError, ExperimentConfig};

fn kqsd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kqsd"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    kqsd().args(args).output().expect("spawn kqsd")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FREE_TRANSPORT: &str = r#"
kind = "simulate"
seed = 1

[model.catalog]
name = "free-transport"
sigma = 0.0

[domain]
type = "interval"
lo = -1.0
hi = 1.0

[integrator]
dt = 0.01
max_time = 5.0

[simulate.initial]
type = "point"
q = [0.0]
p = [1.0]
"#;

#[test]
fn catalog_lists_models_and_parameters() {
    let o = run(&["catalog"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["harmonic-langevin", "double-well-langevin", "nonconservative-langevin", "interval"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    assert!(text.contains("F(q, p) = -grad U(q) - l(q) - gamma p"));
    for key in ["potential", "ell", "alpha_drift", "beta_drift"] {
        assert!(text.contains(key), "{key} missing");
    }
    assert_eq!(text, String::from_utf8(run(&["catalog"]).stdout).unwrap());
}

#[test]
fn free_transport_exit_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), FREE_TRANSPORT);
    let out = tmp.path().join("out");
    let o = run(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let mut rdr = csv::Reader::from_path(out.join("exits.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["sample_id", "exit_time", "exit_q0", "exit_p0", "classification", "survived_flag"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let tau: f64 = rows[0][1].parse().unwrap();
    let q: f64 = rows[0][2].parse().unwrap();
    let p: f64 = rows[0][3].parse().unwrap();
    assert!((tau - 1.0).abs() < 1e-12);
    assert!((q - 1.0).abs() < 1e-12);
    assert!((p - 1.0).abs() < 1e-12);
    assert_eq!(&rows[0][4], "outgoing");
    assert_eq!(&rows[0][5], "false");

    for name in ["manifest.json", "summary.txt"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "simulate");
    assert_eq!(manifest["verdict"], "pass");
    assert_eq!(manifest["config"]["integrator"]["seed"], 1);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(manifest["version"].is_string());
}

#[test]
fn bounded_lyapunov_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("lyapunov-bounded.toml");
    let o = run(&["run", cfg.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("lyapunov.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn negative_dt_names_dt() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &FREE_TRANSPORT.replace("dt = 0.01", "dt = -0.01"));
    let o = run(&["run", cfg.to_str().unwrap(), "--output-dir", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("integrator.dt"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn validation_lists_every_offending_key() {
    let text = FREE_TRANSPORT
        .replace("seed = 1", "seed = 1\ncolour = \"red\"")
        .replace("max_time = 5.0", "max_time = -5.0\nsubsteps = 4")
        .replace("type = \"point\"", "type = \"point\"\nweight = 2.0");
    let err = config::parse_str(&text).unwrap_err();
    let ConfigError::Invalid(problems) = &err else {
        panic!("expected validation errors, got {err}");
    };
    let keys: Vec<&str> = problems.iter().map(|p| p.key.as_str()).collect();
    for key in ["colour", "integrator.substeps", "simulate.initial.weight", "integrator.max_time"] {
        assert!(keys.contains(&key), "{key} not in {keys:?}");
    }
}

#[test]
fn missing_kind_table_is_reported() {
    let text = FREE_TRANSPORT.replace("kind = \"simulate\"", "kind = \"fleming-viot\"");
    let msg = config::parse_str(&text).unwrap_err().to_string();
    assert!(msg.contains("fleming-viot"), "{msg}");
    assert!(msg.contains("simulate"), "{msg}");
}

#[test]
fn runtime_error_exits_one_and_names_stage() {
    // A reference file that does not exist fails at run time, not at validation.
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs_dir().join("harmonic-conditioned.toml"))
        .unwrap()
        .replace("n_samples = 1000000", "n_samples = 100")
        .replace("../kqsd-out/harmonic-fleming-viot/qsd.json", "missing.json");
    let cfg = write_config(tmp.path(), &text);
    let o = run(&["run", cfg.to_str().unwrap(), "--output-dir", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("reference"), "{}", stderr(&o));
}

#[test]
fn sample_configs_validate_and_round_trip() {
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let cfg = config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let back = config::parse_str(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back, "{}", path.display());
        let json = serde_json::to_string(&cfg).unwrap();
        let from_json: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, from_json, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 9);
}

#[test]
fn seed_override_takes_precedence() {
    let mut cfg = config::parse_str(FREE_TRANSPORT).unwrap();
    cfg.resolve(Some(99), None);
    assert_eq!(cfg.seed, Some(99));
    assert_eq!(cfg.integrator.as_ref().unwrap().seed, 99);
    let mut cfg = config::parse_str(FREE_TRANSPORT).unwrap();
    cfg.resolve(None, None);
    assert_eq!(cfg.integrator.as_ref().unwrap().seed, 1);
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn manifest_rerun_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
kind = "simulate"
seed = 5

[model.catalog]
name = "double-well-langevin"
h = 1.0
q0 = 1.0
gamma = 1.0
kt = 0.3

[domain]
type = "interval"
lo = -1.3
hi = 1.3

[integrator]
dt = 0.01
max_time = 20.0

[simulate]
n_samples = 400
survival_points = 41

[simulate.initial]
type = "gaussian-momentum"
q = [0.0]
sd = 0.5
"#;
    let cfg = write_config(tmp.path(), text);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = run(&["run", cfg.to_str().unwrap(), "--output-dir", a.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.code().is_some_and(|c| c != 1), "{}", stderr(&o));
    let manifest = a.join("manifest.json");
    let o = run(&["run", manifest.to_str().unwrap(), "--output-dir", b.to_str().unwrap(), "--threads", "3"]);
    assert!(o.status.code().is_some_and(|c| c != 1), "{}", stderr(&o));
    let (fa, fb) = (artifacts(&a), artifacts(&b));
    assert_eq!(fa.iter().map(|f| &f.0).collect::<Vec<_>>(), fb.iter().map(|f| &f.0).collect::<Vec<_>>());
    assert!(fa.iter().any(|f| f.0 == "survival.csv"));
    for (x, y) in fa.iter().zip(&fb) {
        assert!(x.1 == y.1, "{} differs", x.0);
    }
}
