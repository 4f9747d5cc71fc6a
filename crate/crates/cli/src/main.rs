//! `vcone`: command-line front end for the v-causal toolkit.
//!
//! Every subcommand prints its JSON result on stdout and a short human
//! summary on stderr. With `--out DIR` the JSON artifacts are also written
//! there. Exit codes: 0 success, 1 check failed or no signalling forced,
//! 2 usage or bad input, 3 internal failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use vcone_core::correlations::{
    conditional_bc_given_ad, evaluate_bell, is_no_signalling, Behavior, BellExpression,
};
use vcone_core::polytope::{lemma_polytope_max, lemma_polytope_max_exact, local_membership, max_bell_local};
use vcone_core::quantum::{behavior_from_quantum, seesaw_maximize, QuantumSetup, SeesawConfig};
use vcone_core::spacetime::{
    broadcast_meeting_events, channel_sweep, effective_speed, figure3_geometry, figure3_geometry_exact,
    parse_rational,
};
use vcone_core::vmodel::{signalling_demo, DemoTarget, Verdict};
use vcone_core::Error;

/// Tolerance used by `check` for normalization and no-signalling.
const CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "vcone", version, about = "Bell bounds, see-saw optimization and signalling demos for v-causal models")]
struct Cli {
    /// Worker threads for the parallel sections (default: all cores).
    #[arg(long, global = true, env = "VCONE_JOBS")]
    jobs: Option<usize>,
    /// Directory for JSON/CSV artifacts.
    #[arg(long, global = true, env = "VCONE_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Event coordinates, causal ordering and broadcast meeting points.
    ///
    /// With --sweep lo:hi:n prints CSV with columns
    /// r,d_prime_x,d_prime_t,speed_a_to_d_prime,a_prime_x,a_prime_t,speed_d_to_a_prime
    /// for n speed ratios spaced linearly over [lo, hi].
    Geometry {
        /// Speed ratio v/c, as a decimal or a fraction like 5/2.
        #[arg(long, env = "VCONE_R")]
        r: Option<String>,
        #[arg(long, value_name = "LO:HI:N")]
        sweep: Option<String>,
    },
    /// Maximum of a Bell expression over no-signalling behaviors with local BC|AD conditionals.
    LemmaBound {
        #[command(flatten)]
        expr: ExprArgs,
        /// Also solve in exact rational arithmetic.
        #[arg(long, env = "VCONE_RATIONAL")]
        rational: bool,
    },
    /// See-saw maximization of a Bell expression over qubit strategies.
    QuantumOpt {
        #[command(flatten)]
        expr: ExprArgs,
        #[command(flatten)]
        seesaw: SeesawArgs,
    },
    /// Full signalling argument at speed ratio r.
    Demo {
        #[arg(long, env = "VCONE_R", default_value = "2")]
        r: f64,
        /// Behavior or quantum setup JSON to reproduce (default: see-saw optimum of S).
        #[arg(long)]
        target: Option<PathBuf>,
        #[command(flatten)]
        seesaw: SeesawArgs,
    },
    /// Validate a behavior file and test no-signalling and BC|AD locality.
    Check {
        behavior: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ExprArgs {
    /// Bell expression JSON.
    #[arg(long, conflicts_with = "builtin")]
    expr: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "s")]
    builtin: Builtin,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Builtin {
    S,
    Chsh,
    Abcd,
    Zero,
}

#[derive(Debug, Args)]
struct SeesawArgs {
    #[arg(long, env = "VCONE_RESTARTS", default_value_t = 50)]
    restarts: usize,
    #[arg(long, env = "VCONE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "VCONE_MAX_ITER", default_value_t = 500)]
    max_iter: usize,
    #[arg(long, env = "VCONE_TOL", default_value_t = 1e-10)]
    tol: f64,
}

impl SeesawArgs {
    fn config(&self) -> Result<SeesawConfig, Failure> {
        if self.restarts == 0 {
            return Err(Failure::Usage("--restarts must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Failure::Usage("--tol must be a positive number".into()));
        }
        Ok(SeesawConfig {
            restarts: self.restarts,
            max_iterations: self.max_iter,
            tol: self.tol,
            seed: self.seed,
        })
    }
}

#[derive(Debug)]
enum Failure {
    /// Check failed or the demo had nothing to certify; the JSON was still produced.
    Negative,
    Usage(String),
    Internal(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) => Failure::Usage(m),
            other => Failure::Internal(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.jobs {
        Some(0) => Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Failure::Internal(e.into())),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Negative) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let out = cli.out.as_deref();
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    match &cli.command {
        Command::Geometry { r, sweep } => cmd_geometry(r.as_deref(), sweep.as_deref(), out),
        Command::LemmaBound { expr, rational } => cmd_lemma_bound(expr, *rational, out),
        Command::QuantumOpt { expr, seesaw } => cmd_quantum_opt(expr, seesaw, out),
        Command::Demo { r, target, seesaw } => cmd_demo(*r, target.as_deref(), seesaw, out),
        Command::Check { behavior } => cmd_check(behavior, out),
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>, file: &str) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).context("serializing output")?;
    println!("{text}");
    if let Some(dir) = out {
        let path = dir.join(file);
        fs::write(&path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_expression(args: &ExprArgs) -> Result<BellExpression, Failure> {
    if let Some(path) = &args.expr {
        return read_json(path);
    }
    Ok(match args.builtin {
        Builtin::S => BellExpression::lemma_s(),
        Builtin::Chsh => BellExpression::chsh(),
        Builtin::Abcd => BellExpression::abcd_correlator(),
        Builtin::Zero => BellExpression::zero(4)?,
    })
}

fn parse_sweep(text: &str) -> Result<(f64, f64, usize), Failure> {
    let bad = || Failure::Usage(format!("--sweep expects lo:hi:n, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo = parts[0].trim().parse::<f64>().map_err(|_| bad())?;
    let hi = parts[1].trim().parse::<f64>().map_err(|_| bad())?;
    let n = parts[2].trim().parse::<usize>().map_err(|_| bad())?;
    Ok((lo, hi, n))
}

fn cmd_geometry(r: Option<&str>, sweep: Option<&str>, out: Option<&Path>) -> Result<(), Failure> {
    if let Some(spec) = sweep {
        let (lo, hi, n) = parse_sweep(spec)?;
        let samples = channel_sweep(lo, hi, n)?;
        let mut csv = String::from("r,d_prime_x,d_prime_t,speed_a_to_d_prime,a_prime_x,a_prime_t,speed_d_to_a_prime\n");
        for s in &samples {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.speed_ratio,
                s.d_prime.position,
                s.d_prime.time,
                s.speed_a_to_d_prime,
                s.a_prime.position,
                s.a_prime.time,
                s.speed_d_to_a_prime
            ));
        }
        print!("{csv}");
        if let Some(dir) = out {
            let path = dir.join("sweep.csv");
            fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
        }
        let slowest = samples
            .iter()
            .map(|s| s.speed_a_to_d_prime.min(s.speed_d_to_a_prime))
            .fold(f64::INFINITY, f64::min);
        eprintln!("{} speed ratios, slowest broadcast channel {slowest:.6}c", samples.len());
        return Ok(());
    }
    let text = r.ok_or_else(|| Failure::Usage("geometry needs --r or --sweep".into()))?;
    let exact_r = parse_rational(text)?;
    let exact = figure3_geometry_exact(&exact_r)?;
    let g = exact.to_f64()?;
    let ordering = g.ordering();
    let (d_prime, a_prime) = broadcast_meeting_events(&g)?;
    let a = g.require("A")?;
    let d = g.require("D")?;
    let report = json!({
        "speed_ratio": g.speed_ratio,
        "exact": exact,
        "geometry": g,
        "ordering": ordering,
        "pattern": "A<D<(B∼C)",
        "pattern_matches": g.matches("A<D<(B∼C)")?,
        "d_prime": d_prime,
        "speed_a_to_d_prime": effective_speed(a, &d_prime)?,
        "a_prime": a_prime,
        "speed_d_to_a_prime": effective_speed(d, &a_prime)?,
    });
    emit(&report, out, "geometry.json")?;
    eprintln!(
        "r = {text}: {} ; A→D' at {:.6}c, D→A' at {:.6}c",
        ordering.describe(),
        report["speed_a_to_d_prime"].as_f64().unwrap_or(f64::NAN),
        report["speed_d_to_a_prime"].as_f64().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_lemma_bound(args: &ExprArgs, rational: bool, out: Option<&Path>) -> Result<(), Failure> {
    let e = load_expression(args)?;
    if e.n_parties != 4 {
        return Err(Failure::Usage(format!("lemma-bound needs a four-party expression, {} has {}", e.name, e.n_parties)));
    }
    let float = lemma_polytope_max(&e)?;
    let exact = if rational { Some(lemma_polytope_max_exact(&e)?) } else { None };
    let report = json!({
        "expression": e.name,
        "optimum": float.optimum,
        "local_max": max_bell_local(&e)?,
        "classical_bound": e.classical_bound,
        "certificate": float,
        "exact": exact.as_ref().and_then(|r| r.exact.clone()),
    });
    emit(&report, out, "lemma_certificate.json")?;
    match exact.as_ref().and_then(|r| r.exact.as_ref()) {
        Some(c) => eprintln!("{}: lemma maximum {} (exact)", e.name, c.optimum),
        None => eprintln!("{}: lemma maximum {:.12}", e.name, float.optimum.unwrap_or(f64::NAN)),
    }
    Ok(())
}

fn cmd_quantum_opt(args: &ExprArgs, seesaw: &SeesawArgs, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = seesaw.config()?;
    let e = load_expression(args)?;
    let result = seesaw_maximize(&e, &cfg)?;
    let behavior = behavior_from_quantum(&result.setup)?;
    let report = json!({
        "expression": e.name,
        "config": cfg,
        "value": result.value,
        "result": result,
        "behavior": behavior,
    });
    emit(&report, out, "quantum_opt.json")?;
    eprintln!(
        "{}: see-saw value {:.10} (best restart {} of {})",
        e.name, result.value, result.best_restart, result.restarts_used
    );
    Ok(())
}

fn load_target(path: &Path) -> Result<DemoTarget, Failure> {
    let value: Value = read_json(path)?;
    if value.get("table").is_some() {
        let b: Behavior = serde_json::from_value(value).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        Ok(DemoTarget::Behavior(b))
    } else {
        let s: QuantumSetup =
            serde_json::from_value(value).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        Ok(DemoTarget::Quantum(s))
    }
}

fn cmd_demo(r: f64, target: Option<&Path>, seesaw: &SeesawArgs, out: Option<&Path>) -> Result<(), Failure> {
    let e = BellExpression::lemma_s();
    let (target, source) = match target {
        Some(path) => (load_target(path)?, json!({ "file": path.display().to_string() })),
        None => {
            let cfg = seesaw.config()?;
            // Check r before spending time on the optimization.
            figure3_geometry(r)?;
            let best = seesaw_maximize(&e, &cfg)?;
            (
                DemoTarget::Quantum(best.setup),
                json!({ "seesaw": cfg, "value": best.value, "best_restart": best.best_restart }),
            )
        }
    };
    let report = signalling_demo(r, &target, &e)?;
    emit(&json!({ "target_source": source, "report": report }), out, "demo_report.json")?;
    let s3 = &report.step3_marginals;
    let s5 = &report.step5_signalling;
    let s6 = &report.step6_channel;
    eprintln!(
        "r = {r}: S = {:.6} (bound {}), BC|AD local {}/{}, max signalling {:.6} ({} vs {}), {}→{} at {:.6}c",
        s3.simulated_value,
        s3.bound,
        report.step4_locality.cells_local,
        report.step4_locality.cells_present,
        s5.max_variation,
        s5.witness.marginal,
        s5.witness.excluded,
        s6.source.label,
        s6.target.label,
        s6.speed
    );
    let verdict = serde_json::to_value(report.verdict).context("serializing verdict")?;
    eprintln!("verdict: {}", verdict.as_str().unwrap_or("?"));
    if report.verdict == Verdict::SignallingCertified {
        Ok(())
    } else {
        Err(Failure::Negative)
    }
}

fn cmd_check(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let value: Value = read_json(path)?;
    let b: Behavior = serde_json::from_value(value).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let (ns, report) = is_no_signalling(&b, CHECK_TOL);
    let mut cells = Vec::new();
    if b.n_parties() == 4 {
        for c in conditional_bc_given_ad(&b)? {
            let local = match &c.behavior {
                Some(cb) => Some(local_membership(cb)?.member),
                None => None,
            };
            cells.push(json!({
                "a": c.a, "x": c.x, "d": c.d, "w": c.w,
                "weight": c.weight,
                "local": local,
            }));
        }
    }
    let result = json!({
        "n_parties": b.n_parties(),
        "valid": true,
        "no_signalling": ns,
        "signalling": report,
        "conditional_bc_given_ad": if b.n_parties() == 4 { Value::Array(cells.clone()) } else { Value::Null },
        "s_value": if b.n_parties() == 4 {
            json!(evaluate_bell(&BellExpression::lemma_s(), &b)?)
        } else { Value::Null },
    });
    emit(&result, out, "check.json")?;
    if ns {
        let nonlocal = cells.iter().filter(|c| c["local"] == json!(false)).count();
        eprintln!("no-signalling: pass (max variation {:.3e}); nonlocal BC|AD cells: {nonlocal}", report.max_variation);
        Ok(())
    } else {
        let w = report.witness_entry();
        eprintln!(
            "no-signalling: FAIL, marginal {} moves by {:.6} with {}'s setting (outcomes {:?}, settings {:?})",
            w.marginal, w.variation, w.excluded, w.witness_outcomes, w.witness_settings
        );
        Err(Failure::Negative)
    }
}
