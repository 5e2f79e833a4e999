use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_smalldev"));
    c.env_remove("SMALLDEV_THREADS").env("RUST_LOG", "error");
    c
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut c = bin();
    if let Some(p) = config {
        c.arg("--config").arg(p);
    }
    c.arg("--out").arg(out).args(args);
    c.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn iid_probability_reports_three_engines() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["probability"], Some(&shipped("iid.json")), tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&tmp.path().join("probability.json"));
    let engines = doc["payload"]["engines"].as_array().unwrap();
    let methods: Vec<&str> = engines
        .iter()
        .map(|e| e["method"].as_str().unwrap())
        .collect();
    assert_eq!(methods, ["qmc", "monte-carlo", "transfer"]);
    assert_eq!(doc["payload"]["sandwich"], Value::Bool(true));
    assert_eq!(doc["payload"]["agreement"], Value::Bool(true));
    assert!(engines.iter().all(|e| e.get("wall_time_ms").is_none()));
    let csv = std::fs::read_to_string(tmp.path().join("probability.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
}

#[test]
fn repeated_seed_gives_identical_payloads() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = shipped("iid.json");
    assert_eq!(
        code(&run(&["--seed", "9", "probability"], Some(&cfg), a.path())),
        0
    );
    let mut c = bin();
    c.args(["--threads", "3", "--seed", "9", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(b.path())
        .arg("probability");
    assert_eq!(code(&c.output().unwrap()), 0);
    let (ja, jb) = (
        json(&a.path().join("probability.json")),
        json(&b.path().join("probability.json")),
    );
    assert_eq!(ja["sha256"], jb["sha256"]);
    assert_eq!(ja["payload"], jb["payload"]);
    assert_eq!(ja["payload"]["config"]["seed"], 9);
    assert_eq!(
        std::fs::read(a.path().join("probability.csv")).unwrap(),
        std::fs::read(b.path().join("probability.csv")).unwrap()
    );
}

#[test]
fn different_seeds_change_the_payload() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = shipped("iid.json");
    run(&["--seed", "1", "probability"], Some(&cfg), a.path());
    run(&["--seed", "2", "probability"], Some(&cfg), b.path());
    let (ja, jb) = (
        json(&a.path().join("probability.json")),
        json(&b.path().join("probability.json")),
    );
    assert_ne!(ja["sha256"], jb["sha256"]);
}

#[test]
fn malformed_config_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(tmp.path(), r#"{"measure": {"label": "x"}, "N": "#);
    let o = run(&["probability"], Some(&p), tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid config"));
}

#[test]
fn unknown_field_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(
        tmp.path(),
        r#"{"measure": {"label": "iid", "density": [{"kind": "flat", "level": 0.1}]},
            "boundary": {"family": "constant", "f": 1.0}, "N": 4, "engnes": {}}"#,
    );
    assert_eq!(code(&run(&["probability"], Some(&p), tmp.path())), 2);
}

#[test]
fn negated_atom_weight_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let p = write_config(
        tmp.path(),
        r#"{"measure": {"label": "bad", "atoms": [[1.0, -0.5], [-1.0, -0.5]]},
            "boundary": {"family": "constant", "f": 0.1}, "N": 16}"#,
    );
    let o = run(&["validate", "--trials", "1"], Some(&p), tmp.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("weight"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&run(&["probability"], None, tmp.path())), 2);
    assert_eq!(code(&run(&["reproduce", "nonsense"], None, tmp.path())), 2);
}

#[test]
fn validate_on_iid_passes() {
    let tmp = TempDir::new().unwrap();
    let o = run(
        &["validate", "--trials", "3"],
        Some(&shipped("iid.json")),
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let doc = json(&tmp.path().join("validate.json"));
    assert_eq!(doc["payload"]["pass"], Value::Bool(true));
    assert_eq!(doc["payload"]["suites"].as_array().unwrap().len(), 5);
    let names: Vec<&str> = doc["payload"]["instance"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["psd", "sandwich", "log-concavity"]);
}

#[test]
fn validate_is_stable_across_seeds() {
    let tmp = TempDir::new().unwrap();
    let o = run(
        &["--seed", "100", "validate", "--trials", "2", "--seeds", "5"],
        None,
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let doc = json(&tmp.path().join("validate.json"));
    assert_eq!(doc["payload"]["seeds"].as_array().unwrap().len(), 5);
}

#[test]
fn reproduce_dirac_quick_writes_report_plot_and_json() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["reproduce", "dirac", "--quick"], None, tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l == "dirac: PASS"));
    let csv = std::fs::read_to_string(tmp.path().join("dirac.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "theorem,N,f,predicted,measured,err,verdict"
    );
    assert_eq!(csv.lines().count(), 1 + 8);
    let svg = std::fs::read_to_string(tmp.path().join("dirac.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("<!-- data\npanel,series,x,y,err"));
    assert_eq!(svg.matches("<polyline").count(), 4);
    let doc = json(&tmp.path().join("dirac.json"));
    assert_eq!(doc["payload"]["pass"], Value::Bool(true));
}

#[test]
fn reproduce_failure_exits_with_one() {
    // The asymptote is still 17% off at f = 6.
    let tmp = TempDir::new().unwrap();
    let o = run(&["reproduce", "transfer", "--quick"], None, tmp.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("transfer: FAIL"));
    assert!(tmp.path().join("transfer.svg").exists());
}

#[test]
fn rate_reports_regime_and_bounds() {
    let tmp = TempDir::new().unwrap();
    let o = run(
        &["rate"],
        Some(&shipped("fgn-brownian-scale.json")),
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&tmp.path().join("rate.json"));
    assert_eq!(doc["payload"]["regime"], "to-infinity-sub-scale");
    let p = &doc["payload"]["predictions"][0];
    assert_eq!(p["theorem"], "fbm-rate");
    let expected = -std::f64::consts::PI.powi(2) / 8.0 * 64.0 / 8.0;
    assert!((p["log_p"].as_f64().unwrap() - expected).abs() < 1e-9);

    let o = run(&["rate"], Some(&shipped("atoms.json")), tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sample_formats_agree() {
    let tmp = TempDir::new().unwrap();
    let cfg = shipped("iid.json");
    assert_eq!(
        code(&run(&["sample", "--count", "5"], Some(&cfg), tmp.path())),
        0
    );
    let o = run(
        &["sample", "--count", "5", "--format", "binary"],
        Some(&cfg),
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(tmp.path().join("paths.csv")).unwrap();
    let bin = std::fs::read(tmp.path().join("paths.bin")).unwrap();
    assert_eq!(&bin[..5], b"SDLB1");
    assert_eq!(bin.len(), 5 + 16 + 5 * 16 * 8);
    let first: f64 = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    let raw = f64::from_le_bytes(bin[21..29].try_into().unwrap());
    assert_eq!(first, raw);
}
