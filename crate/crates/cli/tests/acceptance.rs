//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line straight to
//! stderr, so the verdicts show up even when libtest captures output.

use std::io::Write;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use vcone_core::correlations::{conditional_bc_given_ad, supports_only_ABD_ACD, BellExpression};
use vcone_core::polytope::{local_membership, max_bell_local};
use vcone_core::quantum::{behavior_from_quantum, seesaw_maximize, QuantumSetup, SeesawConfig};
use vcone_core::spacetime::{channel_sample, figure3_geometry, figure3_geometry_exact, randomized_schedule, ratio, Event, Geometry};
use vcone_core::vmodel::{marginal_consistency_check, simulate, trivial_sequential_model, VStrategy, DEMO_DELTA};

fn report(name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {name}: {detail}");
    assert!(pass, "{name}: {detail}");
}

fn vcone(args: &[&str]) -> (Output, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_vcone"))
        .args(args)
        .env_remove("VCONE_SEED")
        .env_remove("VCONE_OUT")
        .output()
        .expect("binary runs");
    (out, start.elapsed())
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn fig3_schedule() -> [Geometry; 3] {
    randomized_schedule(&figure3_geometry(2.0).unwrap(), DEMO_DELTA).unwrap()
}

#[test]
fn lemma_bound_on_s() {
    let (out, took) = vcone(&["lemma-bound", "--builtin", "s", "--rational"]);
    let v = stdout_json(&out);
    let exact = v["exact"]["optimum"].as_str().unwrap_or("missing").to_string();
    let float = v["optimum"].as_f64().unwrap_or(f64::NAN);
    let pass = out.status.success() && exact == "7" && (float - 7.0).abs() <= 1e-6 && took < Duration::from_secs(10);
    report(
        "lemma bound",
        pass,
        &format!("exact {exact}, float {float:.9}, {:.2} s (want exactly 7, 7 ± 1e-6, < 10 s)", took.as_secs_f64()),
    );
}

#[test]
fn quantum_violation_of_s() {
    let (out, took) = vcone(&["quantum-opt", "--builtin", "s", "--restarts", "50", "--seed", "0"]);
    let value = stdout_json(&out)["value"].as_f64().unwrap_or(f64::NAN);
    let pass = out.status.success() && (7.19..=7.21).contains(&value) && took < Duration::from_secs(60);
    report(
        "quantum violation",
        pass,
        &format!("see-saw S = {value:.6} in {:.2} s (want within [7.19, 7.21], < 60 s)", took.as_secs_f64()),
    );
}

#[test]
fn s_reads_only_abd_and_acd() {
    let pass = supports_only_ABD_ACD(&BellExpression::lemma_s());
    report("marginal support", pass, &format!("supports_only_ABD_ACD(S) = {pass}"));
}

/// CHSH over the 16 deterministic assignments a(x), b(y), written out by hand.
fn chsh_vertex_max() -> f64 {
    let mut best = f64::NEG_INFINITY;
    for m in 0..16u32 {
        let a = [(m & 1) as i32, ((m >> 1) & 1) as i32];
        let b = [((m >> 2) & 1) as i32, ((m >> 3) & 1) as i32];
        let e = |x: usize, y: usize| if a[x] == b[y] { 1.0 } else { -1.0 };
        best = best.max(e(0, 0) + e(0, 1) + e(1, 0) - e(1, 1));
    }
    best
}

#[test]
fn chsh_local_and_quantum_pair() {
    let chsh = BellExpression::chsh();
    let lp = max_bell_local(&chsh).unwrap();
    let brute = chsh_vertex_max();
    let seesaw = seesaw_maximize(&chsh, &SeesawConfig::default()).unwrap().value;
    let tsirelson = 2.0 * std::f64::consts::SQRT_2;
    let pass = (lp - 2.0).abs() < 1e-9 && (brute - 2.0).abs() < 1e-12 && (seesaw - tsirelson).abs() <= 1e-4;
    report(
        "CHSH oracle pair",
        pass,
        &format!("local LP {lp:.9}, vertex enumeration {brute}, see-saw {seesaw:.6} (want 2, 2, 2√2 ± 1e-4)"),
    );
}

#[test]
fn geometry_coordinates_and_channel_speed() {
    let g = figure3_geometry_exact(&ratio(2, 1)).unwrap();
    let want = [("A", (0, 1), (0, 1)), ("B", (17, 24), (2, 3)), ("C", (19, 24), (2, 3)), ("D", (1, 1), (1, 2))];
    let mut coords_ok = true;
    for (label, (xn, xd), (tn, td)) in want {
        let e = g.event(label).unwrap();
        coords_ok &= e.position == ratio(xn, xd) && e.time == ratio(tn, td);
    }
    let pattern_ok = g.to_f64().unwrap().matches("A<D<(B∼C)").unwrap();
    let mut speeds = Vec::new();
    for r in [1.1, 2.0, 10.0, 100.0] {
        let s = channel_sample(r).unwrap();
        speeds.push((r, s.speed_a_to_d_prime.min(s.speed_d_to_a_prime)));
    }
    let speeds_ok = speeds.iter().all(|&(_, v)| v > 1.0);
    let listed: Vec<String> = speeds.iter().map(|(r, v)| format!("r={r}: {v:.6}c")).collect();
    report(
        "geometry",
        coords_ok && pattern_ok && speeds_ok,
        &format!(
            "exact coordinates {coords_ok}, ordering A<D<(B∼C) {pattern_ok}, channel speeds {}",
            listed.join(", ")
        ),
    );
}

#[test]
fn trivial_sequential_model_fidelity() {
    let g = Geometry::new(2.0, vec![Event::new("A", 0.0, 0.0), Event::new("B", 1.0, 1.0)]).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let q = behavior_from_quantum(&QuantumSetup::random(2, &mut rng).unwrap()).unwrap();
        let model = trivial_sequential_model(&q, "A<B").unwrap();
        worst = worst.max(simulate(&model, &g).unwrap().behavior.max_abs_diff(&q));
    }
    report(
        "trivial sequential model fidelity",
        worst <= 1e-9,
        &format!("20 random bipartite setups, worst entry deviation {worst:.3e} (want ≤ 1e-9)"),
    );
}

#[test]
fn unordered_bc_conditionals_are_local() {
    let [_, _, sim] = fig3_schedule();
    let mut cells = 0usize;
    let mut failures = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = VStrategy::random(4, 1 + (seed as usize % 4), &mut rng).unwrap();
        let p = simulate(&s, &sim).unwrap().behavior;
        for c in conditional_bc_given_ad(&p).unwrap() {
            if let Some(cb) = c.behavior {
                cells += 1;
                if !local_membership(&cb).unwrap().member {
                    failures.push((seed, c.a, c.x, c.d, c.w));
                }
            }
        }
    }
    report(
        "BC|AD locality",
        failures.is_empty(),
        &format!("100 random strategies under A<D<(B∼C), {cells} cells, {} nonlocal {failures:?}", failures.len()),
    );
}

#[test]
fn abd_marginals_survive_dropping_the_bc_order() {
    let [bc, _, sim] = fig3_schedule();
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let s = VStrategy::random(4, 1 + (seed as usize % 4), &mut rng).unwrap();
        worst = worst.max(marginal_consistency_check(&s, &bc, &sim).unwrap().max_deviation);
    }
    report(
        "ABD marginal consistency",
        worst <= 1e-12,
        &format!("100 random strategies, A<D<B<C vs A<D<(B∼C), worst deviation {worst:.3e} (want ≤ 1e-12)"),
    );
}

#[test]
fn end_to_end_demo() {
    let args = ["demo", "--r", "2", "--seed", "0"];
    let (first, took) = vcone(&args);
    let (second, _) = vcone(&args);
    let v = stdout_json(&first);
    let rep = &v["report"];
    let s = rep["step3_marginals"]["simulated_value"].as_f64().unwrap_or(f64::NAN);
    let local = rep["step4_locality"]["cells_present"] == rep["step4_locality"]["cells_local"];
    let ns = rep["step5_signalling"]["no_signalling"].as_bool().unwrap_or(true);
    let witness = rep["step5_signalling"]["witness"].to_string();
    let speed = rep["step6_channel"]["speed"].as_f64().unwrap_or(f64::NAN);
    let identical = first.stdout == second.stdout;
    let pass = first.status.success()
        && rep["verdict"] == "signalling certified"
        && s >= 7.19
        && local
        && !ns
        && rep["step5_signalling"]["witness"].is_object()
        && speed > 1.0
        && identical
        && took < Duration::from_secs(120);
    report(
        "end-to-end demo",
        pass,
        &format!(
            "S = {s:.6}, BC|AD local {local}, no-signalling {ns}, witness {witness}, speed {speed:.6}c, identical reruns {identical}, {:.2} s",
            took.as_secs_f64()
        ),
    );
}
