use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use vcone_core::correlations::Behavior;
use vcone_core::quantum::{behavior_from_quantum, QuantumSetup};

fn vcone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcone"))
        .args(args)
        .env_remove("VCONE_SEED")
        .env_remove("VCONE_OUT")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn geometry_at_r2() {
    let out = vcone(&["geometry", "--r", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["pattern_matches"], Value::Bool(true));
    assert_eq!(v["exact"]["events"][1]["position"], "17/24");
    assert!((v["speed_a_to_d_prime"].as_f64().unwrap() - 37.0 / 35.0).abs() < 1e-12);
    assert!((v["d_prime"]["time"].as_f64().unwrap() - 35.0 / 48.0).abs() < 1e-12);
    assert!(String::from_utf8_lossy(&out.stderr).contains("B∼C"));
}

#[test]
fn geometry_rejects_r1() {
    let out = vcone(&["geometry", "--r", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("speed ratio"));
    assert_eq!(vcone(&["geometry"]).status.code(), Some(2));
    assert_eq!(vcone(&["geometry", "--sweep", "1:2"]).status.code(), Some(2));
}

#[test]
fn geometry_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = vcone(&["--out", dir.path().to_str().unwrap(), "geometry", "--r", "2", "--sweep", "1.1:100:20"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 21);
    assert!(lines[0].starts_with("r,d_prime_x"));
    for row in &lines[1..] {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 7);
        assert!(cols[3] > 1.0 && cols[6] > 1.0);
    }
    assert_eq!(fs::read_to_string(dir.path().join("sweep.csv")).unwrap(), text);
}

#[test]
fn lemma_bound_variants() {
    let out = vcone(&["lemma-bound", "--rational"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["exact"]["optimum"], "7");
    assert!((v["optimum"].as_f64().unwrap() - 7.0).abs() < 1e-6);
    assert_eq!(v["certificate"]["status"], "Optimal");

    let zero = json(&vcone(&["lemma-bound", "--builtin", "zero"]));
    assert!(zero["optimum"].as_f64().unwrap().abs() < 1e-12);

    let abcd = json(&vcone(&["lemma-bound", "--builtin", "abcd"]));
    assert!((abcd["optimum"].as_f64().unwrap() - 8.0).abs() < 1e-6);

    assert_eq!(vcone(&["lemma-bound", "--builtin", "chsh"]).status.code(), Some(2));
}

#[test]
fn lemma_bound_reads_expression_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_json(dir.path(), "s.json", &vcone_core::correlations::BellExpression::lemma_s());
    let v = json(&vcone(&["lemma-bound", "--expr", &path]));
    assert!((v["optimum"].as_f64().unwrap() - 7.0).abs() < 1e-6);
    fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    let bad = dir.path().join("broken.json").display().to_string();
    assert_eq!(vcone(&["lemma-bound", "--expr", &bad]).status.code(), Some(2));
}

#[test]
fn quantum_opt_chsh_and_usage() {
    let v = json(&vcone(&["quantum-opt", "--builtin", "chsh", "--restarts", "10"]));
    assert!((v["value"].as_f64().unwrap() - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-4);
    assert_eq!(vcone(&["quantum-opt", "--restarts", "0"]).status.code(), Some(2));
    assert_eq!(vcone(&["quantum-opt", "--restarts", "many"]).status.code(), Some(2));
}

#[test]
fn environment_overrides_flags_defaults() {
    let run = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_vcone"))
            .args(["quantum-opt", "--builtin", "chsh", "--restarts", "2"])
            .env("VCONE_SEED", seed)
            .output()
            .unwrap()
    };
    let a = json(&run("5"));
    assert_eq!(a["config"]["seed"], 5);
    let b = json(&vcone(&["quantum-opt", "--builtin", "chsh", "--restarts", "2", "--seed", "5"]));
    assert_eq!(a, b);
}

#[test]
fn demo_outcomes() {
    let out = vcone(&["demo", "--r", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let rep = &v["report"];
    assert_eq!(rep["verdict"], "signalling certified");
    assert!(rep["step3_marginals"]["simulated_value"].as_f64().unwrap() > 7.0);
    assert_eq!(rep["step5_signalling"]["no_signalling"], false);
    assert!(rep["step6_channel"]["speed"].as_f64().unwrap() > 1.0);

    assert_eq!(vcone(&["demo", "--r", "0.5"]).status.code(), Some(2));
}

#[test]
fn demo_with_local_target_forces_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let local = Behavior::deterministic(&[[0, 1], [1, 0], [0, 0], [1, 1]]).unwrap();
    let path = write_json(dir.path(), "local-behavior.json", &local);
    let out = vcone(&["demo", "--r", "2", "--target", &path]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["report"]["verdict"], "no signalling forced");
    assert!(String::from_utf8_lossy(&out.stderr).contains("no signalling forced"));

    let setup = write_json(dir.path(), "setup.json", &QuantumSetup::cluster_fixture());
    assert_eq!(vcone(&["demo", "--target", &setup]).status.code(), Some(0));
}

#[test]
fn check_behaviors() {
    let dir = tempfile::tempdir().unwrap();
    let q = behavior_from_quantum(&QuantumSetup::cluster_fixture()).unwrap();
    let ok = write_json(dir.path(), "quantum.json", &q);
    let out = vcone(&["check", &ok]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["no_signalling"], true);
    assert_eq!(v["conditional_bc_given_ad"].as_array().unwrap().len(), 16);

    // C answers with B's setting, so P(a, c, d) jumps between 0 and 1/4 as y flips.
    let leaky = Behavior::from_fn(4, |o, s| if o[2] == s[1] { 1.0 / 8.0 } else { 0.0 }).unwrap();
    let bad = write_json(dir.path(), "leaky.json", &leaky);
    let out = vcone(&["check", &bad]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    let witness = &v["signalling"]["entries"][v["signalling"]["witness"].as_u64().unwrap() as usize];
    assert_eq!(witness["excluded"], "B");
    assert_eq!(witness["variation"], 0.25);
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));

    fs::write(dir.path().join("junk.json"), "[1, 2").unwrap();
    let junk = dir.path().join("junk.json").display().to_string();
    assert_eq!(vcone(&["check", &junk]).status.code(), Some(2));
    assert_eq!(vcone(&["check", "/nonexistent/behavior.json"]).status.code(), Some(2));
}

#[test]
fn identical_configuration_gives_identical_files() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let dir = d.path().to_str().unwrap();
        assert_eq!(vcone(&["--out", dir, "quantum-opt", "--restarts", "8", "--seed", "3"]).status.code(), Some(0));
        assert_eq!(vcone(&["--out", dir, "--jobs", "2", "lemma-bound"]).status.code(), Some(0));
        assert_eq!(vcone(&["--out", dir, "geometry", "--r", "5/2"]).status.code(), Some(0));
    }
    for f in ["quantum_opt.json", "lemma_certificate.json", "geometry.json"] {
        let a = fs::read(d1.path().join(f)).unwrap();
        let b = fs::read(d2.path().join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    // Thread count does not change the result.
    let one = vcone(&["--jobs", "1", "quantum-opt", "--restarts", "8", "--seed", "3"]);
    assert_eq!(one.stdout, fs::read(d1.path().join("quantum_opt.json")).unwrap());
}
