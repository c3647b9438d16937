//! Scenario documents, trajectory files and report tables.
//!
//! Scenarios are TOML. Every table except `[mesh]` and `[time]` is optional and
//! unknown keys are rejected. Profiles in space and series in time share one
//! representation: a constant, or a list of `[abscissa, value]` breakpoints
//! interpolated linearly and extended by constants.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constitutive::MaterialParams;
use crate::convex_analysis::{gamma_eps, PhasePoint, RegularizationParams};
use crate::diagnostics::{AuditReport, DependenceTable, SweepResult};
use crate::discretization::{build_mesh, BoundarySide};
use crate::error::{Error, FieldError, Result};
use crate::solver::{LoadHistory, Loads, Model, SimulationFailure, SolverConfig, StateSnapshot, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PiecewiseLinear {
    Constant(f64),
    Points(Vec<[f64; 2]>),
}

impl Default for PiecewiseLinear {
    fn default() -> Self {
        PiecewiseLinear::Constant(0.0)
    }
}

impl PiecewiseLinear {
    pub fn eval(&self, x: f64) -> f64 {
        let pts = match self {
            PiecewiseLinear::Constant(v) => return *v,
            PiecewiseLinear::Points(p) => p,
        };
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if x <= first[0] {
            return first[1];
        }
        if x >= last[0] {
            return last[1];
        }
        let k = pts.partition_point(|p| p[0] <= x);
        let ([x0, y0], [x1, y1]) = (pts[k - 1], pts[k]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    fn check(&self, field: &str, errs: &mut Vec<FieldError>) {
        match self {
            PiecewiseLinear::Constant(v) if !v.is_finite() => {
                errs.push(FieldError::new(field, "value must be finite"))
            }
            PiecewiseLinear::Constant(_) => {}
            PiecewiseLinear::Points(p) if p.is_empty() => {
                errs.push(FieldError::new(field, "breakpoint list must not be empty"))
            }
            PiecewiseLinear::Points(p) => {
                if p.iter().flatten().any(|v| !v.is_finite()) {
                    errs.push(FieldError::new(field, "breakpoints must be finite"));
                } else if p.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    errs.push(FieldError::new(field, "breakpoint abscissae must be strictly increasing"));
                }
            }
        }
    }
}

fn default_side() -> BoundarySide {
    BoundarySide::Left
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    /// Bar length `L`; the bar occupies `[0, L]`.
    pub length: f64,
    pub elements: usize,
    /// End clamped by `u = 0`; traction acts on the other end.
    #[serde(default = "default_side")]
    pub gamma0: BoundarySide,
}

fn one() -> PiecewiseLinear {
    PiecewiseLinear::Constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub u: PiecewiseLinear,
    /// Absolute temperature; defaults to `material.theta_0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<PiecewiseLinear>,
    #[serde(default)]
    pub beta1: PiecewiseLinear,
    #[serde(default)]
    pub beta2: PiecewiseLinear,
    #[serde(default = "one")]
    pub beta3: PiecewiseLinear,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            u: PiecewiseLinear::default(),
            theta: None,
            beta1: PiecewiseLinear::default(),
            beta2: PiecewiseLinear::default(),
            beta3: one(),
        }
    }
}

/// Time series, uniform in space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesSpec {
    #[serde(default)]
    pub body_force: PiecewiseLinear,
    #[serde(default)]
    pub traction: PiecewiseLinear,
    #[serde(default)]
    pub entropy_source: PiecewiseLinear,
    /// `dn(log theta)` at `x = 0`, outward normal.
    #[serde(default)]
    pub entropy_flux_left: PiecewiseLinear,
    /// `dn(log theta)` at `x = L`, outward normal.
    #[serde(default)]
    pub entropy_flux_right: PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_end: f64,
    /// Defaults to `epsilon / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

fn d_eps() -> f64 {
    1e-2
}
fn d_fp_tol() -> f64 {
    SolverConfig::DEFAULT_FP_TOL
}
fn d_fp_max_iter() -> usize {
    SolverConfig::DEFAULT_FP_MAX_ITER
}
fn d_relaxation() -> f64 {
    SolverConfig::DEFAULT_RELAXATION
}
fn d_max_halvings() -> usize {
    SolverConfig::DEFAULT_MAX_HALVINGS
}
fn d_phase_sweeps() -> usize {
    SolverConfig::DEFAULT_PHASE_MAX_SWEEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "d_eps")]
    pub epsilon: f64,
    #[serde(default = "d_fp_tol")]
    pub fp_tol: f64,
    #[serde(default = "d_fp_max_iter")]
    pub fp_max_iter: usize,
    #[serde(default = "d_relaxation")]
    pub relaxation: f64,
    #[serde(default = "d_max_halvings")]
    pub max_halvings: usize,
    #[serde(default = "d_phase_sweeps")]
    pub phase_max_sweeps: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            epsilon: d_eps(),
            fp_tol: d_fp_tol(),
            fp_max_iter: d_fp_max_iter(),
            relaxation: d_relaxation(),
            max_halvings: d_max_halvings(),
            phase_max_sweeps: d_phase_sweeps(),
        }
    }
}

fn d_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Full snapshot every `stride` steps (plus the first and the last).
    #[serde(default = "d_stride")]
    pub stride: usize,
    /// Positions whose nearest node is reported in the time series.
    #[serde(default)]
    pub probes: Vec<f64>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            probes: Vec::new(),
        }
    }
}

/// The document as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub mesh: MeshSpec,
    #[serde(default)]
    pub material: MaterialParams,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub sources: SourcesSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Source series sampled on the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioLoads {
    pub sources: SourcesSpec,
    n_nodes: usize,
    ends: [usize; 2],
}

impl LoadHistory for ScenarioLoads {
    fn loads_at(&self, t: f64) -> Loads {
        let s = &self.sources;
        Loads {
            body_force: vec![s.body_force.eval(t); self.n_nodes],
            traction: s.traction.eval(t),
            entropy_source: vec![s.entropy_source.eval(t); self.n_nodes],
            entropy_flux: vec![
                (self.ends[0], s.entropy_flux_left.eval(t)),
                (self.ends[1], s.entropy_flux_right.eval(t)),
            ],
        }
    }
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub model: Model,
    pub initial: StateSnapshot,
    pub loads: ScenarioLoads,
    pub cfg: SolverConfig,
    /// Probe node indices, in document order.
    pub probes: Vec<usize>,
}

impl Scenario {
    pub fn stride(&self) -> usize {
        self.doc.output.stride
    }

    pub fn reg(&self) -> RegularizationParams {
        self.cfg.epsilon
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    scenario_from_doc(doc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn serialize_scenario(doc: &ScenarioDoc) -> String {
    toml::to_string(doc).expect("scenario documents serialize")
}

fn describe_phase_violation(b: PhasePoint) -> String {
    let names = ["beta1", "beta2", "beta3"];
    let mut parts = Vec::new();
    for (name, v) in names.iter().zip(b.to_array()) {
        if !v.is_finite() {
            parts.push(format!("{name} = {v} is not a number"));
        } else if v < 0.0 {
            parts.push(format!("{name} = {v} < 0: phase fractions are nonnegative"));
        }
    }
    if b.sum() > 1.0 {
        parts.push(format!(
            "beta1 + beta2 + beta3 = {} > 1: the phases and the voids must fill the volume",
            b.sum()
        ));
    }
    format!(
        "({}, {}, {}) violates the phase constraint: {}",
        b.b1,
        b.b2,
        b.b3,
        parts.join("; ")
    )
}

/// Validates every field and builds the model; all problems are reported at once.
pub fn scenario_from_doc(doc: ScenarioDoc) -> Result<Scenario> {
    let mut errs = Vec::new();
    let m = &doc.mesh;
    if !(m.length > 0.0 && m.length.is_finite()) {
        errs.push(FieldError::new("mesh.length", "bar length must be positive"));
    }
    if m.elements < 2 {
        errs.push(FieldError::new("mesh.elements", "at least 2 elements are required"));
    }
    errs.extend(doc.material.check());

    let init = &doc.initial;
    let theta_default = PiecewiseLinear::Constant(doc.material.theta_0);
    let theta_profile = init.theta.as_ref().unwrap_or(&theta_default);
    init.u.check("initial.u", &mut errs);
    theta_profile.check("initial.theta", &mut errs);
    init.beta1.check("initial.beta1", &mut errs);
    init.beta2.check("initial.beta2", &mut errs);
    init.beta3.check("initial.beta3", &mut errs);

    let src = &doc.sources;
    for (name, s) in [
        ("sources.body_force", &src.body_force),
        ("sources.traction", &src.traction),
        ("sources.entropy_source", &src.entropy_source),
        ("sources.entropy_flux_left", &src.entropy_flux_left),
        ("sources.entropy_flux_right", &src.entropy_flux_right),
    ] {
        s.check(name, &mut errs);
    }

    let sv = &doc.solver;
    let reg = RegularizationParams::new(sv.epsilon);
    if reg.is_err() {
        errs.push(FieldError::new(
            "solver.epsilon",
            "regularization parameter must be positive and finite",
        ));
    }
    if let Some(dt) = doc.time.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            errs.push(FieldError::new("time.dt", "time step must be positive"));
        }
    }
    if doc.output.stride < 1 {
        errs.push(FieldError::new("output.stride", "stride must be at least 1"));
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }

    let reg = reg.expect("checked");
    let cfg = SolverConfig {
        dt: doc.time.dt.unwrap_or(0.5 * sv.epsilon),
        t_end: doc.time.t_end,
        epsilon: reg,
        fp_tol: sv.fp_tol,
        fp_max_iter: sv.fp_max_iter,
        picard_relaxation: sv.relaxation,
        max_halvings: sv.max_halvings,
        phase_max_sweeps: sv.phase_max_sweeps,
    };
    errs.extend(cfg.check());

    let mesh = build_mesh(m.length, m.elements, m.gamma0)?;
    let x = mesh.nodes().to_vec();
    let n = x.len();
    let mut w = Vec::with_capacity(n);
    for (i, &xi) in x.iter().enumerate() {
        let th = theta_profile.eval(xi);
        if th > 0.0 {
            w.push(th.ln());
        } else {
            w.push(f64::NAN);
            errs.push(FieldError::new(
                format!("initial.theta[node {i}, x = {xi}]"),
                format!("theta0 = {th}: theta0 must be positive: entropy formulation requires theta in the image of exp"),
            ));
        }
    }
    let beta: [Vec<f64>; 3] = [
        x.iter().map(|&xi| init.beta1.eval(xi)).collect(),
        x.iter().map(|&xi| init.beta2.eval(xi)).collect(),
        x.iter().map(|&xi| init.beta3.eval(xi)).collect(),
    ];
    for (i, &xi) in x.iter().enumerate() {
        let b = PhasePoint::new(beta[0][i], beta[1][i], beta[2][i]);
        if !b.in_c() {
            errs.push(FieldError::new(
                format!("initial.beta[node {i}, x = {xi}]"),
                describe_phase_violation(b),
            ));
        }
    }
    let u: Vec<f64> = x.iter().map(|&xi| init.u.eval(xi)).collect();
    for &i in mesh.gamma0() {
        if u[i] != 0.0 {
            errs.push(FieldError::new(
                "initial.u",
                format!("u0 = {} at the clamped end x = {}; it must vanish there", u[i], x[i]),
            ));
        }
    }
    let mut probes = Vec::new();
    for (k, &px) in doc.output.probes.iter().enumerate() {
        if !(px >= 0.0 && px <= m.length) {
            errs.push(FieldError::new(
                format!("output.probes[{k}]"),
                format!("probe position {px} lies outside the bar [0, {}]", m.length),
            ));
        } else {
            probes.push(mesh.nearest_node(px));
        }
    }
    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }

    let n_el = mesh.n_elements();
    let ends = mesh.boundary_nodes();
    let model = Model::new(mesh, doc.material)?;
    let initial = StateSnapshot {
        t: 0.0,
        u,
        w,
        beta,
        p: vec![0.0; n_el],
    };
    let loads = ScenarioLoads {
        sources: doc.sources.clone(),
        n_nodes: n,
        ends,
    };
    Ok(Scenario {
        doc,
        model,
        initial,
        loads,
        cfg,
        probes,
    })
}

pub const SNAPSHOT_HEADER: &str = "x,u,w,theta,beta1,beta2,beta3,p";
pub const TIMESERIES_HEADER: &str =
    "t,fp_iterations,lyapunov,dissipation,constraint_residual,mass_residual,max_abs_w";

/// 17 significant digits: reloads bit for bit.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Snapshot table: one row per node, with the pressure of the element to the
/// left of the node (the first node carries the first element).
pub fn format_snapshot(step: usize, s: &StateSnapshot, nodes: &[f64], reg: RegularizationParams) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# step={step} t={}", num(s.t));
    let _ = writeln!(out, "{SNAPSHOT_HEADER}");
    for (i, &x) in nodes.iter().enumerate() {
        let p = s.p[i.saturating_sub(1)];
        let row = [
            x,
            s.u[i],
            s.w[i],
            gamma_eps(s.w[i], reg),
            s.beta[0][i],
            s.beta[1][i],
            s.beta[2][i],
            p,
        ];
        let cells: Vec<String> = row.iter().map(|v| num(*v)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {msg}", path.display()))
}

/// Inverse of [`format_snapshot`]; returns `(step, nodes, state)`.
pub fn parse_snapshot(path: &Path, text: &str) -> Result<(usize, Vec<f64>, StateSnapshot)> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| bad(path, "empty snapshot"))?;
    let meta = head
        .strip_prefix("# step=")
        .and_then(|r| r.split_once(" t="))
        .ok_or_else(|| bad(path, "line 1: expected '# step=N t=T'"))?;
    let step: usize = meta.0.parse().map_err(|e| bad(path, format!("line 1: step: {e}")))?;
    let t: f64 = meta.1.parse().map_err(|e| bad(path, format!("line 1: t: {e}")))?;
    if lines.next() != Some(SNAPSHOT_HEADER) {
        return Err(bad(path, format!("line 2: expected header '{SNAPSHOT_HEADER}'")));
    }
    let mut cols: [Vec<f64>; 8] = Default::default();
    for (k, line) in lines.enumerate() {
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != 8 {
            return Err(bad(path, format!("line {}: expected 8 columns", k + 3)));
        }
        for (c, v) in vals.iter().enumerate() {
            cols[c].push(v.parse().map_err(|e| bad(path, format!("line {}: {e}", k + 3)))?);
        }
    }
    let [x, u, w, _theta, b1, b2, b3, p_rows] = cols;
    if x.len() < 2 {
        return Err(bad(path, "snapshot needs at least two nodes"));
    }
    let p = p_rows[1..].to_vec();
    Ok((
        step,
        x,
        StateSnapshot {
            t,
            u,
            w,
            beta: [b1, b2, b3],
            p,
        },
    ))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join("snapshots").join(format!("snapshot_{step:06}.csv"))
}

/// Time-series table, one row per accepted step.
pub fn format_timeseries(traj: &Trajectory, probes: &[(f64, usize)], reg: RegularizationParams) -> String {
    let mut out = String::from(TIMESERIES_HEADER);
    for (x, _) in probes {
        for f in ["u", "theta", "beta1", "beta2", "beta3"] {
            let _ = write!(out, ",{f}@{x}");
        }
    }
    out.push('\n');
    for r in &traj.steps {
        let s = &r.snapshot;
        let rep = &r.report;
        let mut cells = vec![
            num(s.t),
            rep.fp_iterations.to_string(),
            num(rep.energy.lyapunov),
            num(rep.energy.dissipation),
            num(rep.constraint_residual),
            num(rep.mass_residual),
            num(rep.max_abs_w),
        ];
        for &(_, i) in probes {
            cells.extend(
                [s.u[i], gamma_eps(s.w[i], reg), s.beta[0][i], s.beta[1][i], s.beta[2][i]]
                    .iter()
                    .map(|v| num(*v)),
            );
        }
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Writes `timeseries.csv`, `snapshots/` and `scenario.toml` under `dir`.
pub fn write_trajectory(dir: &Path, scenario: &Scenario, traj: &Trajectory) -> Result<()> {
    create_dir(&dir.join("snapshots"))?;
    let reg = scenario.cfg.epsilon;
    let probes: Vec<(f64, usize)> = scenario
        .doc
        .output
        .probes
        .iter()
        .copied()
        .zip(scenario.probes.iter().copied())
        .collect();
    write_file(&dir.join("timeseries.csv"), &format_timeseries(traj, &probes, reg))?;
    let stride = scenario.stride().max(1);
    let nodes = scenario.model.mesh.nodes();
    let last = traj.len();
    for (step, s) in traj.snapshots().enumerate() {
        if step % stride == 0 || step == last {
            write_file(&snapshot_path(dir, step), &format_snapshot(step, s, nodes, reg))?;
        }
    }
    write_file(&dir.join("scenario.toml"), &serialize_scenario(&scenario.doc))
}

/// Failure report of an aborted run: the partial trajectory plus `failure.txt`.
pub fn write_failure(dir: &Path, scenario: &Scenario, failure: &SimulationFailure) -> Result<()> {
    write_trajectory(dir, scenario, &failure.partial)?;
    let last = failure.partial.steps.last();
    let mut out = String::new();
    let _ = writeln!(out, "t_failed = {}", num(failure.t_failed));
    let _ = writeln!(out, "dt_failed = {}", num(failure.dt_failed));
    let _ = writeln!(out, "accepted_steps = {}", failure.partial.len());
    if let Some(r) = last {
        let _ = writeln!(out, "last_fp_iterations = {}", r.report.fp_iterations);
        let _ = writeln!(out, "last_fp_residual = {}", num(r.report.fp_final_residual));
    }
    let _ = writeln!(out, "error = {}", failure.error.to_string().replace('\n', " "));
    write_file(&dir.join("failure.txt"), &out)
}

/// A trajectory directory read back: the scenario and every stored snapshot.
#[derive(Debug, Clone)]
pub struct StoredRun {
    pub scenario: Scenario,
    /// `(step, snapshot)`, by step.
    pub snapshots: Vec<(usize, StateSnapshot)>,
}

pub fn read_trajectory(dir: &Path) -> Result<StoredRun> {
    let scenario = load_scenario(&dir.join("scenario.toml"))?;
    let snap_dir = dir.join("snapshots");
    let entries = fs::read_dir(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    let mut snapshots = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&snap_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (step, _, s) = parse_snapshot(&path, &text)?;
        if s.n_nodes() != scenario.model.mesh.n_nodes() {
            return Err(bad(&path, "node count does not match scenario.toml"));
        }
        snapshots.push((step, s));
    }
    snapshots.sort_by_key(|(k, _)| *k);
    Ok(StoredRun { scenario, snapshots })
}

pub fn format_audit(report: &AuditReport, times: &[f64]) -> String {
    let mut out = String::from(
        "step,t,lyapunov,dissipation,work,numerical_dissipation,balance_residual,violation\n",
    );
    for (k, (l, t)) in report.ledgers.iter().zip(times).enumerate() {
        let flagged = report.violations.iter().any(|v| v.step == k);
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{},{},{}",
            num(*t),
            num(l.lyapunov),
            num(l.dissipation),
            num(l.work),
            num(l.numerical_dissipation),
            num(l.balance_residual),
            u8::from(flagged)
        );
    }
    out
}

pub fn format_sweep(r: &SweepResult) -> String {
    let mut out = String::from(
        "epsilon,dt,constraint_residual,mass_residual,identity_residual,pressure_norm,max_abs_w\n",
    );
    for k in 0..r.epsilons.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(r.epsilons[k]),
            num(r.dts[k]),
            num(r.constraint_residuals[k]),
            num(r.mass_residuals[k]),
            num(r.identity_residuals[k]),
            num(r.pressure_norms[k]),
            num(r.max_abs_w[k])
        );
    }
    let order = |o: Option<f64>| o.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let _ = writeln!(out, "# fitted order constraint_residual = {}", order(r.fitted_orders[0]));
    let _ = writeln!(out, "# fitted order mass_residual = {}", order(r.fitted_orders[1]));
    out
}

pub fn format_dependence(t: &DependenceTable) -> String {
    let mut out = String::from("delta,lhs,rhs_data,w_part,u_part,beta_part\n");
    for r in &t.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(r.delta),
            num(r.lhs),
            num(r.rhs_data),
            num(r.w_part),
            num(r.u_part),
            num(r.beta_part)
        );
    }
    for (k, (l, d)) in t.ratios.iter().enumerate() {
        let _ = writeln!(out, "# ratio rows {k}/{}: lhs = {l:.6}, rhs = {d:.6}", k + 1);
    }
    out
}

pub fn write_report(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    write_file(path, contents)
}
