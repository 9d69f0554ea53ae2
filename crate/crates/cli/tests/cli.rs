use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn harmonic(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_harmonic"));
    cmd.args(args).env_remove("HARMONIC_SEED");
    if let Some(s) = env_seed {
        cmd.env("HARMONIC_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

const LEMMA: &str = "experiment = \"lemma-campaign\"\nseed = 42\n[lemma]\nm = 3\nn = 4\nks = [0.0, 0.5, 1.0]\nsamples = 200\n";

#[test]
fn lemma_campaign_passes_and_honours_seed_precedence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "lemma.toml", LEMMA);
    let out = tmp.path().join("a");
    let o = harmonic(&["lemma", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["seed"], 42);
    assert_eq!(r["tables"]["total_violations"], 0);
    assert_eq!(r["schema_version"], 1);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    assert!(out.join("lemma_checks.csv").exists());

    let b = tmp.path().join("b");
    harmonic(&["lemma", "--config", &cfg, "--out", b.to_str().unwrap()], Some("7"));
    assert_eq!(report(&b)["seed"], 7);
    let c = tmp.path().join("c");
    harmonic(&["lemma", "--config", &cfg, "--out", c.to_str().unwrap(), "--seed", "9"], Some("7"));
    assert_eq!(report(&c)["seed"], 9);
}

#[test]
fn every_tolerance_is_recorded_and_scaled() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "lemma.toml", LEMMA);
    let out = tmp.path().join("o");
    harmonic(&["lemma", "--config", &cfg, "--out", out.to_str().unwrap(), "--tol-scale", "10"], None);
    let r = report(&out);
    assert_eq!(r["tol_scale"], 10.0);
    let tols = r["tolerances"].as_object().unwrap();
    for c in r["checks"].as_array().unwrap() {
        let name = c["name"].as_str().unwrap();
        let t = tols[name].as_f64().unwrap();
        assert_eq!(c["bound"].as_f64().unwrap(), 0.0 - t, "{name}");
    }
    assert!((tols["q1_nonnegative"].as_f64().unwrap() - 1e-9).abs() < 1e-20);
}

#[test]
fn small_flow_writes_monotone_trajectory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "flow.toml",
        r#"
experiment = "flow"
seed = 3
[flow]
target = { kind = "flat-torus", dim = 2 }
map = { kind = "torus-sine", matrix = [[1.0, 0.0], [1.0, 2.0]], amplitude = 0.05 }
resolution = 12
max_steps = 5000
tau_tol = 1e-8
perturbation = 0.01
expect_verdict = "totally-geodesic"
"#,
    );
    let out = tmp.path().join("o");
    let o = harmonic(&["flow", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "step,time,energy,sup_tau");
    let e: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(e.len() > 2 && e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    for f in ["final_state.json", "energy.svg", "tension.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let o = harmonic(&["flow", "--config", tmp.path().join("missing.toml").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read config"));

    let cfg = write(
        tmp.path(),
        "neg.toml",
        "experiment = \"flow\"\n[flow]\ntarget = { kind = \"flat-torus\" }\nmap = { kind = \"linear-torus\", matrix = [[1.0, 0.0], [0.0, 1.0]] }\nresolution = 8\ndt = -0.01\nmax_steps = 10\ntau_tol = 1e-8\n",
    );
    let o = harmonic(&["flow", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("flow.dt"));

    let cfg = write(tmp.path(), "lemma.toml", LEMMA);
    let o = harmonic(&["flow", "--config", &cfg], None);
    assert_eq!(o.status.code(), Some(2));

    let o = harmonic(&["lemma", "--config", &cfg, "--tol-scale", "-1"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn engine_error_exits_3_with_partial_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.toml",
        r#"
experiment = "prescription"
[prescription]
[[prescription.structures]]
name = "disk"
g = { kind = "hyperbolic-disk", dim = 2 }
h = { kind = "hyperbolic-disk", dim = 2 }
map = { kind = "identity" }
alpha = 1.0
points = [{ chart = 0, coords = [1.5, 0.0] }]
"#,
    );
    let out = tmp.path().join("o");
    let o = harmonic(&["prescribe", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3));
    let r = report(&out);
    assert!(r["error"].as_str().unwrap().contains("domain"));
    assert_eq!(r["pass"], false);
}

#[test]
fn failed_check_exits_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "b.toml",
        r#"
experiment = "bochner"
[bochner]
source = { kind = "flat-torus", dim = 2 }
target = { kind = "flat-torus", dim = 2 }
map = { kind = "torus-sine", amplitude = 0.3 }
grid = { kind = "periodic", n = 8 }
"#,
    );
    let out = tmp.path().join("o");
    let o = harmonic(&["bochner", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&out);
    let tau = r["checks"].as_array().unwrap().iter().find(|c| c["name"] == "sup_tension").unwrap();
    assert_eq!(tau["pass"], false);
    assert!(!r["checks"].as_array().unwrap().iter().any(|c| c["name"] == "sup_residual"));
}
