//! Energy bookkeeping, regularization sweeps and the continuous-dependence
//! experiment.
//!
//! The ledger tests the discrete equations with the same multipliers as the
//! a-priori estimate: `gamma_eps(w)` for the entropy balance, the phase increment
//! for the phase flow, the displacement increment for momentum and the pressure
//! for the mass balance. With lumped mass the tested sum telescopes exactly:
//!
//! ```text
//! L(n+1) - L(n) + dissipation + numerical dissipation = work   (+ solver tolerance)
//! L = Σ m_i [C hat_gamma_eps(w_i) + l_a b3_i + j_eps(b_i)] + k/2 |grad b|² + 1/2 |u|²_A
//! ```
//!
//! "Numerical dissipation" collects the convexity gaps of backward Euler; it is
//! nonnegative, so without sources and with the stress coupling inactive `L` is
//! nonincreasing.

use std::thread;

use crate::constitutive::MaterialParams;
use crate::convex_analysis::{
    gamma_eps, hat_gamma_eps, tau_of_theta, yosida_alpha, yosida_envelope,
    RegularizationParams,
};
use crate::discretization::{dot, SpdSystem};
use crate::error::{Error, Result};
use crate::solver::{
    element_l2, lumped_dot, run_simulation, LoadHistory, Loads, Model, SimulationFailure,
    SolverConfig, StateSnapshot, Trajectory,
};

/// Energy bookkeeping at one time level; dissipation, work and numerical
/// dissipation accumulate from the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyLedger {
    pub lyapunov: f64,
    pub dissipation: f64,
    pub work: f64,
    pub numerical_dissipation: f64,
    /// `L(n+1) - L(n) + dissipation + numerical dissipation - work` of the last step.
    pub balance_residual: f64,
}

impl EnergyLedger {
    /// Ledger of a state with nothing accumulated yet.
    pub fn at(model: &Model, reg: RegularizationParams, s: &StateSnapshot) -> Self {
        Self {
            lyapunov: lyapunov(model, reg, s),
            ..Self::default()
        }
    }

    /// `L(n+1) + step dissipation <= L(n) + step work + tol` with
    /// `tol = 1e-8 (1 + |L(n)|)`; returns the excess over the tolerance if violated.
    pub fn step_violation(prev: &Self, next: &Self) -> Option<f64> {
        let tol = AUDIT_REL_TOL * (1.0 + prev.lyapunov.abs());
        let lhs = next.lyapunov + (next.dissipation - prev.dissipation);
        let rhs = prev.lyapunov + (next.work - prev.work);
        let excess = lhs - rhs - tol;
        (excess > 0.0).then_some(excess)
    }
}

pub const AUDIT_REL_TOL: f64 = 1e-8;

pub fn lyapunov(model: &Model, reg: RegularizationParams, s: &StateSnapshot) -> f64 {
    let m: &MaterialParams = &model.material;
    let mut nodal = 0.0;
    for i in 0..s.n_nodes() {
        let b = s.phase_at(i);
        nodal += model.lumped[i]
            * (m.heat_capacity * hat_gamma_eps(s.w[i], reg)
                + m.latent_heat * b.b3
                + yosida_envelope(b, reg));
    }
    let grad: f64 = s.beta.iter().map(|b| model.laplace.form(b, b)).sum();
    nodal + 0.5 * m.interface_energy * grad + 0.5 * model.elastic.form(&s.u, &s.u)
}

/// Ledger after the step `prev -> next` with data `loads` at the new level.
pub fn advance_ledger(
    model: &Model,
    reg: RegularizationParams,
    before: &EnergyLedger,
    prev: &StateSnapshot,
    next: &StateSnapshot,
    loads: &Loads,
) -> EnergyLedger {
    let m = &model.material;
    let mesh = &model.mesh;
    let n = mesh.n_nodes();
    let dt = next.t - prev.t;
    let eps = reg.epsilon();
    let sub = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let dbeta: [Vec<f64>; 3] = std::array::from_fn(|c| sub(&next.beta[c], &prev.beta[c]));
    let du = sub(&next.u, &prev.u);
    let theta = next.theta(reg);

    // dissipation
    let viscous: f64 = dbeta
        .iter()
        .map(|d| m.phase_viscosity * lumped_dot(model, d, d) + m.gradient_viscosity * model.laplace.form(d, d))
        .sum::<f64>()
        / dt;
    let thermal = dt * m.conductivity * model.laplace.form(&theta, &next.w);
    let penalty = dt * eps * element_l2(mesh, &next.p).powi(2);
    let dissipation = viscous + thermal + penalty;

    // convexity gaps of the implicit step
    let mut gap = 0.0;
    for i in 0..n {
        let (w0, w1) = (prev.w[i], next.w[i]);
        gap += model.lumped[i]
            * m.heat_capacity
            * (theta[i] * (w1 - w0) - (hat_gamma_eps(w1, reg) - hat_gamma_eps(w0, reg)));
        let (b0, b1) = (prev.phase_at(i), next.phase_at(i));
        gap += model.lumped[i]
            * (yosida_alpha(b1, reg).dot(b1 - b0)
                - (yosida_envelope(b1, reg) - yosida_envelope(b0, reg)));
    }
    gap += 0.5 * m.interface_energy * dbeta.iter().map(|d| model.laplace.form(d, d)).sum::<f64>();
    gap += 0.5 * model.elastic.form(&du, &du);

    // work of the data and of the stress-temperature coupling
    let mut work = dt * dot(&theta, &model.entropy_load(loads));
    work += dot(&model.force_vector(loads), &du);
    let tau: Vec<f64> = theta
        .iter()
        .map(|&th| tau_of_theta(th, m).unwrap_or(0.0))
        .collect();
    let strain = mesh.gradient(&next.u);
    for (e, (i, j, h)) in mesh.elements().enumerate() {
        let q = 0.5
            * ((next.beta[0][i] - next.beta[1][i]) * tau[i]
                + (next.beta[0][j] - next.beta[1][j]) * tau[j]);
        work += q * (du[j] - du[i]);
        for node in [i, j] {
            work += 0.5 * h * tau[node] * strain[e] * (dbeta[0][node] - dbeta[1][node]);
        }
    }

    let l1 = lyapunov(model, reg, next);
    EnergyLedger {
        lyapunov: l1,
        dissipation: before.dissipation + dissipation,
        work: before.work + work,
        numerical_dissipation: before.numerical_dissipation + gap,
        balance_residual: l1 - before.lyapunov + dissipation + gap - work,
    }
}

/// Re-bases a single-step ledger (computed from a zero-accumulation start) onto
/// the running totals.
pub fn chain_ledger(running: &EnergyLedger, step: &EnergyLedger) -> EnergyLedger {
    EnergyLedger {
        lyapunov: step.lyapunov,
        dissipation: running.dissipation + step.dissipation,
        work: running.work + step.work,
        numerical_dissipation: running.numerical_dissipation + step.numerical_dissipation,
        balance_residual: step.balance_residual,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditViolation {
    pub step: usize,
    pub t: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    /// One ledger per snapshot, the initial state first.
    pub ledgers: Vec<EnergyLedger>,
    pub violations: Vec<AuditViolation>,
    pub max_balance_residual: f64,
    /// Largest `|w|` over the run.
    pub max_abs_w: f64,
}

impl AuditReport {
    /// Steps where the Lyapunov functional grew by more than the audit tolerance.
    pub fn lyapunov_increases(&self) -> Vec<usize> {
        self.ledgers
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1].lyapunov > w[0].lyapunov + AUDIT_REL_TOL * (1.0 + w[0].lyapunov.abs()))
            .map(|(k, _)| k + 1)
            .collect()
    }
}

/// Recomputes the ledger from stored snapshots. Bitwise equal to the inline
/// ledger of `run_simulation` for the same trajectory.
pub fn energy_audit(
    model: &Model,
    reg: RegularizationParams,
    snapshots: &[StateSnapshot],
    history: &dyn LoadHistory,
) -> AuditReport {
    let mut ledgers = Vec::with_capacity(snapshots.len());
    let mut violations = Vec::new();
    let mut max_balance: f64 = 0.0;
    let mut max_abs_w: f64 = 0.0;
    if let Some(first) = snapshots.first() {
        ledgers.push(EnergyLedger::at(model, reg, first));
        max_abs_w = first.max_abs_w();
    }
    for (k, pair) in snapshots.windows(2).enumerate() {
        let running = ledgers[k];
        let step = advance_ledger(
            model,
            reg,
            &EnergyLedger::at(model, reg, &pair[0]),
            &pair[0],
            &pair[1],
            &history.loads_at(pair[1].t),
        );
        let next = chain_ledger(&running, &step);
        if let Some(excess) = EnergyLedger::step_violation(&running, &next) {
            violations.push(AuditViolation {
                step: k + 1,
                t: pair[1].t,
                excess,
            });
        }
        max_balance = max_balance.max(next.balance_residual.abs());
        max_abs_w = max_abs_w.max(pair[1].max_abs_w());
        ledgers.push(next);
    }
    AuditReport {
        ledgers,
        violations,
        max_balance_residual: max_balance,
        max_abs_w,
    }
}

/// Everything a batch of runs shares.
#[derive(Clone, Copy)]
pub struct RunSpec<'a> {
    pub model: &'a Model,
    pub initial: &'a StateSnapshot,
    pub history: &'a (dyn LoadHistory + Sync),
    pub cfg: SolverConfig,
}

/// `L2(Q)` norm of the element pressure over a trajectory.
pub fn pressure_norm(model: &Model, traj: &Trajectory) -> f64 {
    let mut prev_t = traj.initial.t;
    let mut s = 0.0;
    for r in &traj.steps {
        let dt = r.snapshot.t - prev_t;
        s += dt * element_l2(&model.mesh, &r.snapshot.p).powi(2);
        prev_t = r.snapshot.t;
    }
    s.sqrt()
}

/// Max over snapshots of the nodal `dist(beta, C)`.
pub fn max_constraint_residual(traj: &Trajectory) -> f64 {
    traj.snapshots()
        .map(|s| s.constraint_residual())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub epsilons: Vec<f64>,
    pub dts: Vec<f64>,
    /// Max `dist(beta, C)` over each run.
    pub constraint_residuals: Vec<f64>,
    /// `eps ||p||_{L2(Q)}`, the norm of `d/dt sum(beta) + div u_t` per run.
    pub mass_residuals: Vec<f64>,
    /// Largest per-step residual of the penalized mass balance identity.
    pub identity_residuals: Vec<f64>,
    pub pressure_norms: Vec<f64>,
    pub max_abs_w: Vec<f64>,
    /// Log-log slopes in eps of `[constraint, mass]`; `None` when a residual vanishes.
    pub fitted_orders: [Option<f64>; 2],
    pub runs: Vec<Trajectory>,
}

#[derive(Debug)]
pub struct SweepFailure {
    pub partial: SweepResult,
    pub epsilon: f64,
    pub failure: SimulationFailure,
}

impl std::fmt::Display for SweepFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run with eps = {} failed: {}", self.epsilon, self.failure)
    }
}

impl std::error::Error for SweepFailure {}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fitted_order(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn check_epsilons(epsilons: &[f64]) -> Result<()> {
    let ok_values = epsilons.iter().all(|e| *e > 0.0 && e.is_finite());
    let lo = epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = epsilons.iter().copied().fold(0.0, f64::max);
    if epsilons.len() < 3 || !ok_values || hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::Config(
            "epsilon sweep: at least 3 values spanning 2 decades required".into(),
        ));
    }
    Ok(())
}

fn run_many(
    spec: RunSpec<'_>,
    configs: Vec<(SolverConfig, StateSnapshot, Option<&(dyn LoadHistory + Sync)>)>,
) -> Vec<std::result::Result<Trajectory, SimulationFailure>> {
    thread::scope(|scope| {
        let handles: Vec<_> = configs
            .into_iter()
            .map(|(cfg, init, hist)| {
                let history = hist.unwrap_or(spec.history);
                scope.spawn(move || run_simulation(spec.model, init, history, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

/// Runs the base scenario once per eps with `dt = min(dt_base, eps/2)`.
pub fn epsilon_sweep(
    spec: RunSpec<'_>,
    epsilons: &[f64],
) -> std::result::Result<SweepResult, Box<SweepFailure>> {
    let mut partial = SweepResult {
        epsilons: Vec::new(),
        dts: Vec::new(),
        constraint_residuals: Vec::new(),
        mass_residuals: Vec::new(),
        identity_residuals: Vec::new(),
        pressure_norms: Vec::new(),
        max_abs_w: Vec::new(),
        fitted_orders: [None, None],
        runs: Vec::new(),
    };
    if let Err(e) = check_epsilons(epsilons) {
        return Err(Box::new(SweepFailure {
            partial,
            epsilon: f64::NAN,
            failure: SimulationFailure {
                partial: Trajectory {
                    initial: spec.initial.clone(),
                    initial_ledger: EnergyLedger::default(),
                    steps: Vec::new(),
                },
                t_failed: 0.0,
                dt_failed: spec.cfg.dt,
                error: e,
            },
        }));
    }
    let mut configs = Vec::new();
    for &eps in epsilons {
        let mut cfg = spec.cfg;
        cfg.epsilon = RegularizationParams::new(eps).expect("checked above");
        cfg.dt = spec.cfg.dt.min(0.5 * eps);
        configs.push((cfg, spec.initial.clone(), None));
    }
    let dts: Vec<f64> = configs.iter().map(|c| c.0.dt).collect();
    let results = run_many(spec, configs);
    let mut failure = None;
    for ((eps, dt), res) in epsilons.iter().zip(dts).zip(results) {
        match res {
            Ok(traj) => {
                let pn = pressure_norm(spec.model, &traj);
                partial.epsilons.push(*eps);
                partial.dts.push(dt);
                partial.constraint_residuals.push(max_constraint_residual(&traj));
                partial.mass_residuals.push(eps * pn);
                partial.identity_residuals.push(
                    traj.steps.iter().map(|r| r.report.mass_residual).fold(0.0, f64::max),
                );
                partial.pressure_norms.push(pn);
                partial.max_abs_w.push(
                    traj.snapshots().map(|s| s.max_abs_w()).fold(0.0, f64::max),
                );
                partial.runs.push(traj);
            }
            Err(f) if failure.is_none() => failure = Some((*eps, f)),
            Err(_) => {}
        }
    }
    partial.fitted_orders = [
        fitted_order(&partial.epsilons, &partial.constraint_residuals),
        fitted_order(&partial.epsilons, &partial.mass_residuals),
    ];
    match failure {
        None => Ok(partial),
        Some((epsilon, failure)) => Err(Box::new(SweepFailure {
            partial,
            epsilon,
            failure,
        })),
    }
}

/// Data perturbation of the continuous-dependence experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    /// `w0 + delta * profile`.
    InitialLogTemperature(Vec<f64>),
    /// Traction shifted by `delta` at all times.
    Traction,
}

impl Perturbation {
    /// `cos(pi x / L)` on the mesh.
    pub fn smooth_temperature(model: &Model) -> Self {
        let l = model.mesh.length();
        let x0 = model.mesh.nodes()[0];
        Perturbation::InitialLogTemperature(
            model
                .mesh
                .nodes()
                .iter()
                .map(|x| (std::f64::consts::PI * (x - x0) / l).cos())
                .collect(),
        )
    }
}

struct ShiftedTraction<'a> {
    base: &'a (dyn LoadHistory + Sync),
    delta: f64,
}

impl LoadHistory for ShiftedTraction<'_> {
    fn loads_at(&self, t: f64) -> Loads {
        let mut l = self.base.loads_at(t);
        l.traction += self.delta;
        l
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DependenceRow {
    pub delta: f64,
    /// Squared-norm left-hand side of the stability estimate.
    pub lhs: f64,
    /// Squared data-difference norm.
    pub rhs_data: f64,
    pub w_part: f64,
    pub u_part: f64,
    pub beta_part: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceTable {
    pub rows: Vec<DependenceRow>,
    /// `(lhs ratio, rhs ratio)` for every consecutive pair of rows.
    pub ratios: Vec<(f64, f64)>,
}

fn sq_v(model: &Model, x: &[f64]) -> f64 {
    lumped_dot(model, x, x) + model.laplace.form(x, x)
}

/// Discrete left-hand side of the stability estimate between two trajectories on
/// the same time grid: `|dw|²_{Linf(H)} + |dw|²_{L2(V)} + |du|²_{W12(W)} +
/// Σ_j |db_j|²_{W12(V)}`. Returns `(total, w, u, beta)`.
pub fn dependence_lhs(model: &Model, a: &Trajectory, b: &Trajectory) -> Result<(f64, f64, f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Config(
            "trajectories have different time grids (step halving differed)".into(),
        ));
    }
    let sa: Vec<&StateSnapshot> = a.snapshots().collect();
    let sb: Vec<&StateSnapshot> = b.snapshots().collect();
    let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p - q).collect() };
    let mut w_inf: f64 = {
        let d = diff(&sa[0].w, &sb[0].w);
        lumped_dot(model, &d, &d)
    };
    let (mut w_l2, mut u_part, mut b_part) = (0.0, 0.0, 0.0);
    for k in 1..sa.len() {
        if sa[k].t != sb[k].t {
            return Err(Error::Config("trajectories have different time grids".into()));
        }
        let dt = sa[k].t - sa[k - 1].t;
        let dw = diff(&sa[k].w, &sb[k].w);
        w_inf = w_inf.max(lumped_dot(model, &dw, &dw));
        w_l2 += dt * sq_v(model, &dw);
        let du = diff(&sa[k].u, &sb[k].u);
        let du0 = diff(&sa[k - 1].u, &sb[k - 1].u);
        let dut: Vec<f64> = du.iter().zip(&du0).map(|(x, y)| (x - y) / dt).collect();
        u_part += dt * (model.elastic.form(&du, &du) + model.elastic.form(&dut, &dut));
        for c in 0..3 {
            let db = diff(&sa[k].beta[c], &sb[k].beta[c]);
            let db0 = diff(&sa[k - 1].beta[c], &sb[k - 1].beta[c]);
            let dbt: Vec<f64> = db.iter().zip(&db0).map(|(x, y)| (x - y) / dt).collect();
            b_part += dt * (sq_v(model, &db) + sq_v(model, &dbt));
        }
    }
    let w_part = w_inf + w_l2;
    Ok((w_part + u_part + b_part, w_part, u_part, b_part))
}

/// Baseline run plus one run per perturbation size; reports both sides of the
/// stability estimate.
pub fn continuous_dependence_experiment(
    spec: RunSpec<'_>,
    perturbation: &Perturbation,
    sizes: &[f64],
) -> Result<DependenceTable> {
    let shifted: Vec<ShiftedTraction> = sizes
        .iter()
        .map(|&delta| ShiftedTraction {
            base: spec.history,
            delta,
        })
        .collect();
    let mut configs = vec![(spec.cfg, spec.initial.clone(), None)];
    for (k, &delta) in sizes.iter().enumerate() {
        match perturbation {
            Perturbation::InitialLogTemperature(profile) => {
                let mut init = spec.initial.clone();
                for (w, phi) in init.w.iter_mut().zip(profile) {
                    *w += delta * phi;
                }
                configs.push((spec.cfg, init, None));
            }
            Perturbation::Traction => {
                configs.push((spec.cfg, spec.initial.clone(), Some(&shifted[k] as &(dyn LoadHistory + Sync))));
            }
        }
    }
    let mut results = run_many(spec, configs).into_iter();
    let base = results
        .next()
        .expect("baseline run")
        .map_err(|f| f.error)?;

    // ||F||²_{W'} = F^T A^{-1} F on the clamped space
    let a_sys = SpdSystem::new(&spec.model.elastic.matrix, spec.model.mesh.gamma0())?;
    let mut rows = Vec::new();
    for (&delta, res) in sizes.iter().zip(results) {
        let traj = res.map_err(|f| f.error)?;
        let (lhs, w_part, u_part, beta_part) = dependence_lhs(spec.model, &traj, &base)?;
        let rhs_data = match perturbation {
            Perturbation::InitialLogTemperature(profile) => {
                let d: Vec<f64> = profile.iter().map(|p| delta * p).collect();
                lumped_dot(spec.model, &d, &d)
            }
            Perturbation::Traction => {
                let mut s = 0.0;
                let mut prev_t = base.initial.t;
                for r in &base.steps {
                    let dt = r.snapshot.t - prev_t;
                    prev_t = r.snapshot.t;
                    let mut df = vec![0.0; spec.model.mesh.n_nodes()];
                    for &i in spec.model.mesh.gamma1() {
                        df[i] = delta;
                    }
                    let z = a_sys.solve(&df)?;
                    s += dt * dot(&df, &z);
                }
                s
            }
        };
        rows.push(DependenceRow {
            delta,
            lhs,
            rhs_data,
            w_part,
            u_part,
            beta_part,
        });
    }
    let ratios = rows
        .windows(2)
        .map(|w| (w[0].lhs / w[1].lhs, w[0].rhs_data / w[1].rhs_data))
        .collect();
    Ok(DependenceTable { rows, ratios })
}

/// Pointwise theta positivity over a trajectory: number of nodes with
/// `gamma_eps(w) <= 0` or non-finite.
pub fn positivity_violations(traj: &Trajectory, reg: RegularizationParams) -> usize {
    traj.snapshots()
        .map(|s| {
            s.w.iter()
                .filter(|&&w| {
                    let th = gamma_eps(w, reg);
                    !(th > 0.0 && th.is_finite())
                })
                .count()
        })
        .sum()
}

/// Drift of the element volume `sum(beta) + div u` from its initial value,
/// paired with the bound `eps * sum_k dt |p^k|` it must respect. One entry per
/// snapshot.
pub fn integrated_mass_drift(model: &Model, reg: RegularizationParams, traj: &Trajectory) -> Vec<(f64, f64)> {
    let mesh = &model.mesh;
    let volume = |s: &StateSnapshot| -> Vec<f64> {
        let sum: Vec<f64> = (0..s.n_nodes()).map(|i| s.phase_at(i).sum()).collect();
        let avg = mesh.element_average(&sum);
        let div = mesh.gradient(&s.u);
        avg.iter().zip(div).map(|(a, d)| a + d).collect()
    };
    let v0 = volume(&traj.initial);
    let mut bound = 0.0;
    let mut prev_t = traj.initial.t;
    let mut out = vec![(0.0, 0.0)];
    for r in &traj.steps {
        let dt = r.snapshot.t - prev_t;
        prev_t = r.snapshot.t;
        bound += reg.epsilon() * dt * element_l2(mesh, &r.snapshot.p);
        let v = volume(&r.snapshot);
        let d: Vec<f64> = v.iter().zip(&v0).map(|(a, b)| a - b).collect();
        out.push((element_l2(mesh, &d), bound));
    }
    out
}
