//! `liestab`: checks, certificates and simulations for class-A systems.
//!
//! Exit codes: 0 pass, 1 hypothesis or certificate failure, 2 input error,
//! 3 numeric divergence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use liestab::dynamics::{ClassASystem, Trajectory};
use liestab::nalgebra::DVector;
use liestab::scenario::{self, Scenario, ScenarioFile};
use liestab::stability::{self, SolvableOptions, SolvableVerdict};
use liestab::Error;
use serde_json::{json, Value};

/// Step sizes for the finite-difference Jacobian order check.
const JACOBIAN_STEPS: [f64; 4] = [1e-1, 5e-2, 2.5e-2, 1.25e-2];
/// Radius at which the class-A majorant is reported.
const MAJORANT_RADIUS: f64 = 1.0;
/// Multistart count for the equilibrium search.
const EQUILIBRIUM_STARTS: usize = 32;
/// Random samples for the invariance check.
const INVARIANCE_SAMPLES: usize = 64;
/// Random runs behind a deadbeat verdict.
const DEADBEAT_RUNS: usize = 100;
/// Steps simulated past the deadbeat horizon.
const DEADBEAT_EXTRA: usize = 5;
/// Default zero tolerance for deadbeat runs.
const DEADBEAT_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "liestab", version, about = "Stability certificates and simulations for Lie-algebraic discrete-time systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Verify the class-A, equilibrium, invariance and Jacobian hypotheses.
    Check(RunArgs),
    /// Issue a nilpotent certificate or a solvable-case report.
    Certify(RunArgs),
    /// Simulate and write trajectory CSV and JSON.
    Simulate(RunArgs),
    /// Compute and verify the finite-time convergence horizon.
    Deadbeat(RunArgs),
    /// Simulate the scenario's own initial condition and write norm columns.
    Reproduce(RunArgs),
    /// Write a built-in scenario as an editable JSON file.
    Export(RunArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    scenario: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    builtin: Option<String>,
    /// Number of steps; overrides the scenario's horizon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Seed for every randomized check.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "liestab-out")]
    out: PathBuf,
    /// Pass tolerance: deadbeat zero level, or the final-norm target of
    /// `reproduce` relative to `max(1, ‖X[0]‖)`.
    #[arg(long)]
    tol: Option<f64>,
    /// Certificate margin `ε`; overrides the scenario's value.
    #[arg(long)]
    epsilon: Option<f64>,
}

/// Command outcome: exit code plus a one-line summary.
struct Outcome {
    code: u8,
    summary: String,
}

impl Outcome {
    fn pass(summary: impl Into<String>) -> Self {
        Outcome { code: 0, summary: summary.into() }
    }
    fn fail(summary: impl Into<String>) -> Self {
        Outcome { code: 1, summary: summary.into() }
    }
}

/// Input problems map to 2; everything else is a failed hypothesis.
fn error_code(e: &Error) -> u8 {
    match e {
        Error::Input(_)
        | Error::Io(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidAlgebra(_)
        | Error::NotAnIdeal { .. }
        | Error::InvarianceViolation { .. }
        | Error::RankDeficient { .. } => 2,
        _ => 1,
    }
}

fn load(args: &RunArgs) -> liestab::Result<Scenario> {
    let mut sc = match (&args.scenario, &args.builtin) {
        (Some(path), _) => ScenarioFile::load(path)?,
        (None, Some(name)) => scenario::builtin(name)?,
        (None, None) => return Err(Error::Input("one of --scenario or --builtin is required".into())),
    };
    if let Some(h) = args.horizon {
        sc.horizon = h;
    }
    if args.epsilon.is_some() {
        sc.epsilon = args.epsilon;
    }
    if let Some(t) = args.tol {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Input(format!("--tol must be positive, got {t}")));
        }
    }
    Ok(sc)
}

fn write(out: &Path, name: &str, contents: &str) -> liestab::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), contents)?;
    Ok(())
}

fn write_json(out: &Path, name: &str, value: &Value) -> liestab::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    write(out, name, &text)
}

fn labels(sys: &ClassASystem) -> Vec<String> {
    sys.algebra().labels().to_vec()
}

fn cmd_check(sc: &Scenario, args: &RunArgs) -> liestab::Result<Outcome> {
    let sys = &sc.system;
    let majorant = sys.class_a_majorant(MAJORANT_RADIUS);
    let class_a = majorant.is_finite();
    let w0 = DVector::zeros(sys.r() * sys.d());
    let equilibrium = sys.check_equilibrium_uniqueness(&w0, EQUILIBRIUM_STARTS, args.seed)?;
    let equilibrium_ok = equilibrium.structural_ok && !equilibrium.violation;
    let invariance = sys.check_invariance(INVARIANCE_SAMPLES, args.seed);
    let jacobian = sys.jacobian_check(&JACOBIAN_STEPS);
    let pass = class_a && equilibrium_ok && invariance.pass && jacobian.pass;
    let report = json!({
        "scenario": sc.name,
        "pass": pass,
        "class_a": { "radius": MAJORANT_RADIUS, "majorant": majorant, "pass": class_a },
        "equilibrium": { "pass": equilibrium_ok, "report": equilibrium },
        "invariance": invariance,
        "jacobian": jacobian,
    });
    write_json(&args.out, "check.json", &report)?;
    let summary = format!(
        "check {}: class-A {}, equilibrium {}, invariance {}, jacobian {}",
        sc.name,
        verdict(class_a),
        verdict(equilibrium_ok),
        verdict(invariance.pass),
        verdict(jacobian.pass)
    );
    let mut outcome = if pass { Outcome::pass(summary) } else { Outcome::fail(summary) };
    if !equilibrium.offending_words.is_empty() {
        outcome.summary.push_str(&format!("; input-only words: {}", equilibrium.offending_words.join(", ")));
    }
    Ok(outcome)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_certify(sc: &Scenario, args: &RunArgs) -> liestab::Result<Outcome> {
    let sys = &sc.system;
    let nilpotent_case = sys.ideal().same_as(&sys.algebra().whole()) && sys.nilindex().is_some();
    if nilpotent_case {
        let cert = stability::certify_nilpotent(sys, &sc.signal, sc.m_bound(), sc.epsilon)?;
        write_json(&args.out, "certificate.json", &cert.to_json())?;
        let head = format!(
            "nilpotent certificate {}: rho(A) = {:.17}, threshold = {:.17}, margin = {:.3e}",
            sc.name, cert.rho_a, cert.threshold, cert.margin
        );
        return Ok(match (&cert.bound, cert.issued) {
            (Some(b), true) => Outcome::pass(format!("{head}; ISSUED alpha = {:.6e}, lambda = {:.12}", b.alpha, b.lambda)),
            _ => Outcome::fail(format!("{head}; REJECTED: {}", cert.reason.as_deref().unwrap_or("no bound"))),
        });
    }
    let defaults = SolvableOptions::default();
    let opts = SolvableOptions { seed: args.seed, horizon: sc.horizon.max(defaults.horizon), ..defaults };
    let report = stability::certify_solvable(sys, &sc.signal, opts)?;
    write_json(&args.out, "certificate.json", &report.to_json())?;
    let head = format!("solvable report {}: rho(A) = {:.17}, margin = {:.3e}", sc.name, report.rho_a, report.margin);
    Ok(match report.verdict {
        SolvableVerdict::Conditional => Outcome::pass(format!("{head}; CONDITIONAL")),
        SolvableVerdict::Rejected => Outcome::fail(format!("{head}; REJECTED: {}", report.reason.as_deref().unwrap_or("no reason given"))),
    })
}

fn simulate(sc: &Scenario, args: &RunArgs) -> liestab::Result<Trajectory> {
    let traj = sc.system.simulate(&sc.initial_state(), &sc.signal, sc.horizon)?;
    write(&args.out, "trajectory.csv", &traj.to_csv(&labels(&sc.system)))?;
    write_json(&args.out, "trajectory.json", &traj.to_json())?;
    Ok(traj)
}

fn diverged(traj: &Trajectory) -> Option<Outcome> {
    traj.diverged().map(|index| Outcome { code: 3, summary: format!("diverged at step {index}") })
}

fn cmd_simulate(sc: &Scenario, args: &RunArgs) -> liestab::Result<Outcome> {
    let traj = simulate(sc, args)?;
    if let Some(o) = diverged(&traj) {
        return Ok(o);
    }
    let last = traj.norms.last().copied().unwrap_or(0.0);
    Ok(Outcome::pass(format!("simulate {}: {} steps, final norm {}", sc.name, sc.horizon, fmt(last))))
}

/// Norm columns ready for plotting: `k`, total norm, per-slot norms.
fn norm_columns(traj: &Trajectory) -> String {
    let mut out = String::from("# liestab norms; gnuplot: set datafile separator \",\"\n# k,norm");
    for s in 0..traj.n {
        out.push_str(&format!(",norm_X{}", s + 1));
    }
    out.push('\n');
    let slots: Vec<Vec<f64>> = (0..traj.n).map(|s| traj.slot_norms(s)).collect();
    for (k, norm) in traj.norms.iter().enumerate() {
        out.push_str(&format!("{k},{}", fmt(*norm)));
        for col in &slots {
            out.push_str(&format!(",{}", fmt(col[k])));
        }
        out.push('\n');
    }
    out
}

fn fmt(v: f64) -> String {
    liestab::dynamics::fmt17(v)
}

fn cmd_reproduce(sc: &Scenario, args: &RunArgs) -> liestab::Result<Outcome> {
    let traj = simulate(sc, args)?;
    write(&args.out, "norms.csv", &norm_columns(&traj))?;
    let initial = traj.norms[0];
    let last = traj.norms.last().copied().unwrap_or(0.0);
    let monotone = traj.norms.windows(2).all(|w| w[1] <= w[0]);
    let slot_final: Vec<f64> = (0..traj.n).map(|s| *traj.slot_norms(s).last().expect("nonempty")).collect();
    let target = args.tol.map(|t| t * initial.max(1.0));
    let within = target.map(|t| last <= t);
    let summary = json!({
        "scenario": sc.name,
        "horizon": sc.horizon,
        "status": traj.status,
        "initial_norm": initial,
        "final_norm": last,
        "final_slot_norms": slot_final,
        "monotone": monotone,
        "target": target,
        "within_target": within,
    });
    write_json(&args.out, "summary.json", &summary)?;
    if let Some(o) = diverged(&traj) {
        return Ok(o);
    }
    let text = format!(
        "reproduce {}: ||X[0]|| = {}, ||X[{}]|| = {}, monotone {}",
        sc.name,
        fmt(initial),
        sc.horizon,
        fmt(last),
        monotone
    );
    Ok(match within {
        Some(false) => Outcome::fail(format!("{text}; final norm above target {}", fmt(target.unwrap_or(0.0)))),
        _ => Outcome::pass(text),
    })
}

fn cmd_deadbeat(sc: &Scenario, args: &RunArgs) -> liestab::Result<Outcome> {
    let sys = &sc.system;
    let cert = stability::deadbeat_horizon(sys)?;
    let tol = args.tol.unwrap_or(DEADBEAT_TOL);
    let evidence = stability::verify_deadbeat(sys, &cert, DEADBEAT_RUNS, 1.0, DEADBEAT_EXTRA, args.seed)?;
    let steps = sc.horizon.max(cert.horizon + DEADBEAT_EXTRA);
    let traj = sys.simulate(&sc.initial_state(), &sc.signal, steps)?;
    write(&args.out, "trajectory.csv", &traj.to_csv(&labels(sys)))?;
    if let Some(o) = diverged(&traj) {
        return Ok(o);
    }
    let own_after = traj.norms[cert.horizon..].iter().copied().fold(0.0, f64::max);
    let pass = evidence.worst_after_horizon <= tol && own_after <= tol;
    let report = json!({
        "scenario": sc.name,
        "certificate": cert.to_json(),
        "evidence": evidence,
        "tolerance": tol,
        "scenario_run": { "steps": steps, "worst_after_horizon": own_after },
        "pass": pass,
    });
    write_json(&args.out, "deadbeat.json", &report)?;
    let summary = format!(
        "deadbeat {}: horizon {} (levels {:?}), worst after horizon {:.3e} over {} runs, scenario run {:.3e}",
        sc.name, cert.horizon, cert.level_horizons, evidence.worst_after_horizon, evidence.runs, own_after
    );
    Ok(if pass { Outcome::pass(summary) } else { Outcome::fail(summary) })
}

fn cmd_export(args: &RunArgs) -> liestab::Result<Outcome> {
    let file = match (&args.builtin, &args.scenario) {
        (Some(name), _) => scenario::builtin_file(name)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
            ScenarioFile::from_json_str(&text)?
        }
        (None, None) => return Err(Error::Input("one of --scenario or --builtin is required".into())),
    };
    let name = file.name.clone().unwrap_or_else(|| "scenario".into());
    let mut text = file.to_json_string();
    text.push('\n');
    write(&args.out, &format!("{name}.json"), &text)?;
    Ok(Outcome::pass(format!("exported {}", args.out.join(format!("{name}.json")).display())))
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("LIESTAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("LIESTAB_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("cannot configure thread pool: {e}"))
}

type Handler = fn(&Scenario, &RunArgs) -> liestab::Result<Outcome>;

fn run(cli: Cli) -> liestab::Result<Outcome> {
    if let Command::Export(args) = &cli.command {
        return cmd_export(args);
    }
    let (args, f): (&RunArgs, Handler) = match &cli.command {
        Command::Check(a) => (a, cmd_check),
        Command::Certify(a) => (a, cmd_certify),
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Deadbeat(a) => (a, cmd_deadbeat),
        Command::Reproduce(a) => (a, cmd_reproduce),
        Command::Export(_) => unreachable!("handled above"),
    };
    let sc = load(args)?;
    f(&sc, args)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(outcome) => {
            if outcome.code == 0 {
                println!("{}", outcome.summary);
            } else {
                eprintln!("{}", outcome.summary);
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
