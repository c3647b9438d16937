use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use sma_voids::checks;
use sma_voids::cli_io::{
    format_audit, format_dependence, format_sweep, load_scenario, read_trajectory, scenario_from_doc,
    write_failure, write_report, write_trajectory, Scenario,
};
use sma_voids::diagnostics::{
    check_epsilons, continuous_dependence_experiment, energy_audit, epsilon_sweep,
    max_constraint_residual, Perturbation, RunSpec,
};
use sma_voids::solver::run_simulation;
use sma_voids::Error;

const OUT_ENV: &str = "SMA_VOIDS_OUT";

#[derive(Parser)]
#[command(name = "sma-voids", version, about = "Shape-memory alloy bar with voids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write its trajectory.
    Run {
        scenario: PathBuf,
        #[arg(long, env = OUT_ENV)]
        out: Option<PathBuf>,
        /// Snapshot stride; overrides `output.stride`.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Recompute the energy ledger of a stored trajectory.
    Audit { dir: PathBuf },
    /// Run a scenario for several regularization parameters.
    SweepEpsilon {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
        #[arg(long, env = OUT_ENV)]
        out: Option<PathBuf>,
    },
    /// Continuous-dependence experiment on perturbed data.
    Depend {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        #[arg(long, value_enum, default_value = "w0")]
        perturb: Perturb,
        #[arg(long, env = OUT_ENV)]
        out: Option<PathBuf>,
    },
    /// Built-in property suite.
    Check {
        #[arg(long, default_value_t = 20240601)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Perturb {
    /// Initial log-temperature, `w0 + delta cos(pi x / L)`.
    W0,
    /// Traction shifted by `delta`.
    Traction,
}

/// Exit statuses: 0 success, 1 invalid input or failed check, 2 solver failure.
enum Failure {
    Input(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::PhaseNonConvergence { .. }
            | Error::FixedPointNonConvergence { .. }
            | Error::LinearSolve(_) => Failure::Solver(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

fn default_out(scenario: &Path, suffix: &str) -> PathBuf {
    let stem = scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    PathBuf::from("out").join(format!("{stem}{suffix}"))
}

fn cmd_run(path: &Path, out: Option<PathBuf>, stride: Option<usize>) -> Result<(), Failure> {
    let mut scenario = load_scenario(path)?;
    if let Some(s) = stride {
        let mut doc = scenario.doc.clone();
        doc.output.stride = s;
        scenario = scenario_from_doc(doc)?;
    }
    let out = out.unwrap_or_else(|| default_out(path, ""));
    let start = Instant::now();
    match run_simulation(&scenario.model, scenario.initial.clone(), &scenario.loads, &scenario.cfg) {
        Ok(traj) => {
            write_trajectory(&out, &scenario, &traj)?;
            println!(
                "{} steps to t = {} in {:.2?}; max dist(beta, C) = {:.3e}; output in {}",
                traj.len(),
                traj.last().t,
                start.elapsed(),
                max_constraint_residual(&traj),
                out.display()
            );
            Ok(())
        }
        Err(f) => {
            if let Error::Validation(_) = f.error {
                return Err(Failure::Input(f.error.to_string()));
            }
            write_failure(&out, &scenario, &f)?;
            Err(Failure::Solver(format!("{f}; report in {}", out.join("failure.txt").display())))
        }
    }
}

fn cmd_audit(dir: &Path) -> Result<(), Failure> {
    let stored = read_trajectory(dir)?;
    let steps: Vec<usize> = stored.snapshots.iter().map(|(k, _)| *k).collect();
    if steps.is_empty() || steps.iter().enumerate().any(|(i, &k)| i != k) {
        return Err(Failure::Input(
            "audit needs a snapshot at every step; rerun with --stride 1".into(),
        ));
    }
    let snaps: Vec<_> = stored.snapshots.into_iter().map(|(_, s)| s).collect();
    let sc = &stored.scenario;
    let report = energy_audit(&sc.model, sc.reg(), &snaps, &sc.loads);
    let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    write_report(&dir.join("audit.csv"), &format_audit(&report, &times))?;
    println!(
        "{} steps audited; max balance residual {:.3e}; max |w| {:.4}; {} violation(s)",
        snaps.len() - 1,
        report.max_balance_residual,
        report.max_abs_w,
        report.violations.len()
    );
    for v in &report.violations {
        println!("  step {} (t = {}): excess {:.3e}", v.step, v.t, v.excess);
    }
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Input("energy ledger violated".into()))
    }
}

fn spec(sc: &Scenario) -> RunSpec<'_> {
    RunSpec {
        model: &sc.model,
        initial: &sc.initial,
        history: &sc.loads,
        cfg: sc.cfg,
    }
}

/// Scenario document reproducing one member of a sweep.
fn member(sc: &Scenario, eps: f64, dt: f64) -> Result<Scenario, Error> {
    let mut doc = sc.doc.clone();
    doc.solver.epsilon = eps;
    doc.time.dt = Some(dt);
    scenario_from_doc(doc)
}

fn cmd_sweep(path: &Path, epsilons: &[f64], out: Option<PathBuf>) -> Result<(), Failure> {
    check_epsilons(epsilons)?;
    let sc = load_scenario(path)?;
    let out = out.unwrap_or_else(|| default_out(path, "_sweep"));
    let result = epsilon_sweep(spec(&sc), epsilons);
    let (res, failure) = match result {
        Ok(r) => (r, None),
        Err(f) => {
            let f = *f;
            (f.partial, Some((f.epsilon, f.failure)))
        }
    };
    for (k, traj) in res.runs.iter().enumerate() {
        let m = member(&sc, res.epsilons[k], res.dts[k])?;
        write_trajectory(&out.join(format!("eps_{k}")), &m, traj)?;
    }
    write_report(&out.join("sweep.csv"), &format_sweep(&res))?;
    print!("{}", format_sweep(&res));
    match failure {
        None => Ok(()),
        Some((eps, f)) => {
            let dt = sc.cfg.dt.min(0.5 * eps);
            let m = member(&sc, eps, dt)?;
            let dir = out.join("failed");
            write_failure(&dir, &m, &f)?;
            Err(Failure::Solver(format!("eps = {eps}: {f}; report in {}", dir.display())))
        }
    }
}

fn cmd_depend(path: &Path, deltas: &[f64], perturb: Perturb, out: Option<PathBuf>) -> Result<(), Failure> {
    let sc = load_scenario(path)?;
    let out = out.unwrap_or_else(|| default_out(path, "_depend"));
    let p = match perturb {
        Perturb::W0 => Perturbation::smooth_temperature(&sc.model),
        Perturb::Traction => Perturbation::Traction,
    };
    let table = continuous_dependence_experiment(spec(&sc), &p, deltas)?;
    let text = format_dependence(&table);
    write_report(&out.join("depend.csv"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_check(seed: u64) -> Result<(), Failure> {
    let outcomes = checks::run_all(seed);
    let passed = outcomes.iter().filter(|o| o.passed).count();
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    println!("{passed}/{} properties passed", outcomes.len());
    if passed == outcomes.len() {
        Ok(())
    } else {
        Err(Failure::Input(format!("{} properties failed", outcomes.len() - passed)))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { scenario, out, stride } => cmd_run(&scenario, out, stride),
        Command::Audit { dir } => cmd_audit(&dir),
        Command::SweepEpsilon { scenario, epsilons, out } => cmd_sweep(&scenario, &epsilons, out),
        Command::Depend { scenario, deltas, perturb, out } => cmd_depend(&scenario, &deltas, perturb, out),
        Command::Check { seed } => cmd_check(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}
