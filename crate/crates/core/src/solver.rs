//! Time stepping of the regularized system.
//!
//! Each step runs the staged fixed-point map: with the current phase iterate
//! frozen, solve the entropy balance for `w`, then the momentum balance with the
//! pressure eliminated through the penalized mass balance, then the viscous phase
//! flow with the Yosida term; repeat until the phase iterate stops moving.
//!
//! Discrete equations (lumped mass `M`, Neumann Laplacian `B`, elasticity `A`,
//! divergence `H`, all P1):
//!
//! ```text
//! C M (w - w_n)/dt + lambda B w + (l_a/theta_0) M (b3 - b3_n)/dt = M R + lambda Pi
//! A u - H (p + (b1 - b2) tau(gamma_eps(w))) = F
//! (sum b - sum b_n)/dt + div (u - u_n)/dt = -eps p          (per element)
//! (c M + upsilon B)(b - b_n)/dt + k B b + M alpha_eps(b) = M g(u, w, p)
//! ```

use sprs::{CsMat, TriMat};

use crate::constitutive::{phase_driving_force, LocalState, MaterialParams};
use crate::convex_analysis::{
    dist_c, gamma_eps, project_c, tau_of_theta, yosida_alpha, PhasePoint, RegularizationParams,
};
use crate::diagnostics::{self, EnergyLedger};
use crate::discretization::{
    assemble, dot, neumann_load, source_load, DiscreteOperator, Mesh1D, OperatorKind, SpdSystem,
};
use crate::error::{Error, FieldError, Result};

/// Discrete state at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub t: f64,
    /// Nodal displacement.
    pub u: Vec<f64>,
    /// Nodal log-temperature; `theta = gamma_eps(w)`.
    pub w: Vec<f64>,
    /// Nodal phase fractions `[b1, b2, b3]`.
    pub beta: [Vec<f64>; 3],
    /// Element pressure.
    pub p: Vec<f64>,
}

impl StateSnapshot {
    pub fn n_nodes(&self) -> usize {
        self.u.len()
    }

    pub fn phase_at(&self, node: usize) -> PhasePoint {
        PhasePoint::new(self.beta[0][node], self.beta[1][node], self.beta[2][node])
    }

    pub fn theta(&self, reg: RegularizationParams) -> Vec<f64> {
        self.w.iter().map(|&w| gamma_eps(w, reg)).collect()
    }

    /// Largest nodal distance of the phase triple from C.
    pub fn constraint_residual(&self) -> f64 {
        (0..self.n_nodes())
            .map(|i| dist_c(self.phase_at(i)))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_w(&self) -> f64 {
        self.w.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    /// Restart state: phases projected onto C node by node, clock reset to 0.
    ///
    /// Regularized runs end slightly outside C; this makes their last state
    /// admissible initial data for a follow-up run.
    pub fn restart(&self) -> Self {
        let mut s = self.clone();
        s.t = 0.0;
        for i in 0..s.n_nodes() {
            let b = project_c(self.phase_at(i));
            s.beta[0][i] = b.b1;
            s.beta[1][i] = b.b2;
            s.beta[2][i] = b.b3;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub epsilon: RegularizationParams,
    /// Tolerance on the max-norm change of the phase iterate.
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    /// Relaxation of the Picard sweeps on the Yosida term, in `(0, 1]`.
    pub picard_relaxation: f64,
    /// Automatic step halvings on fixed-point failure.
    pub max_halvings: usize,
    pub phase_max_sweeps: usize,
}

impl SolverConfig {
    pub const DEFAULT_FP_TOL: f64 = 1e-10;
    pub const DEFAULT_FP_MAX_ITER: usize = 50;
    pub const DEFAULT_RELAXATION: f64 = 0.7;
    pub const DEFAULT_MAX_HALVINGS: usize = 4;
    pub const DEFAULT_PHASE_MAX_SWEEPS: usize = 2000;

    pub fn new(dt: f64, t_end: f64, epsilon: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            epsilon: RegularizationParams::new(epsilon)?,
            fp_tol: Self::DEFAULT_FP_TOL,
            fp_max_iter: Self::DEFAULT_FP_MAX_ITER,
            picard_relaxation: Self::DEFAULT_RELAXATION,
            max_halvings: Self::DEFAULT_MAX_HALVINGS,
            phase_max_sweeps: Self::DEFAULT_PHASE_MAX_SWEEPS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            errs.push(FieldError::new("time.dt", "time step must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            errs.push(FieldError::new("time.t_end", "final time must be nonnegative"));
        }
        if !(self.fp_tol > 0.0) {
            errs.push(FieldError::new("solver.fp_tol", "fixed-point tolerance must be positive"));
        }
        if self.fp_max_iter < 1 {
            errs.push(FieldError::new("solver.fp_max_iter", "at least one fixed-point sweep is required"));
        }
        if !(self.picard_relaxation > 0.0 && self.picard_relaxation <= 1.0) {
            errs.push(FieldError::new("solver.relaxation", "Picard relaxation must lie in (0, 1]"));
        }
        if self.phase_max_sweeps < 1 {
            errs.push(FieldError::new("solver.phase_max_sweeps", "at least one Picard sweep is required"));
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.check();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn eps(&self) -> f64 {
        self.epsilon.epsilon()
    }
}

/// Data at one time level, already sampled on the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Loads {
    /// Nodal body force `f`.
    pub body_force: Vec<f64>,
    /// Traction `g` applied on every traction-boundary node.
    pub traction: f64,
    /// Nodal entropy source `R`.
    pub entropy_source: Vec<f64>,
    /// Boundary entropy flux `Pi = dn(log theta)` per boundary node.
    pub entropy_flux: Vec<(usize, f64)>,
}

impl Loads {
    pub fn zero(mesh: &Mesh1D) -> Self {
        Self {
            body_force: vec![0.0; mesh.n_nodes()],
            traction: 0.0,
            entropy_source: vec![0.0; mesh.n_nodes()],
            entropy_flux: Vec::new(),
        }
    }
}

/// Time-dependent data.
pub trait LoadHistory {
    fn loads_at(&self, t: f64) -> Loads;
}

impl<F: Fn(f64) -> Loads> LoadHistory for F {
    fn loads_at(&self, t: f64) -> Loads {
        self(t)
    }
}

/// Mesh, material and the time-independent operators.
#[derive(Debug, Clone)]
pub struct Model {
    pub mesh: Mesh1D,
    pub material: MaterialParams,
    pub lumped: Vec<f64>,
    pub laplace: DiscreteOperator,
    pub elastic: DiscreteOperator,
    pub divergence: DiscreteOperator,
}

impl Model {
    pub fn new(mesh: Mesh1D, material: MaterialParams) -> Result<Self> {
        material.validate()?;
        let laplace = assemble(OperatorKind::Laplace, &mesh, &material);
        let elastic = assemble(OperatorKind::Elastic, &mesh, &material);
        let divergence = assemble(OperatorKind::Divergence, &mesh, &material);
        let lumped = mesh.lumped_mass();
        Ok(Self {
            mesh,
            material,
            lumped,
            laplace,
            elastic,
            divergence,
        })
    }

    /// Load functional of the momentum balance.
    pub fn force_vector(&self, loads: &Loads) -> Vec<f64> {
        let mut f = source_load(&self.mesh, &loads.body_force);
        let g: Vec<(usize, f64)> = self.mesh.gamma1().iter().map(|&i| (i, loads.traction)).collect();
        for (fi, gi) in f.iter_mut().zip(neumann_load(&self.mesh, &g)) {
            *fi += gi;
        }
        f
    }

    /// Load functional of the entropy balance, `M R + lambda Pi`.
    pub fn entropy_load(&self, loads: &Loads) -> Vec<f64> {
        let mut r = source_load(&self.mesh, &loads.entropy_source);
        let lam = self.material.conductivity;
        let flux: Vec<(usize, f64)> = loads.entropy_flux.iter().map(|&(i, v)| (i, lam * v)).collect();
        for (ri, bi) in r.iter_mut().zip(neumann_load(&self.mesh, &flux)) {
            *ri += bi;
        }
        r
    }

    /// Element coupling stress `(b1 - b2) tau(theta)`, trapezoidal per element.
    pub fn coupling_stress(&self, beta: &[Vec<f64>; 3], theta: &[f64]) -> Result<Vec<f64>> {
        let m = &self.material;
        let mut nodal = Vec::with_capacity(theta.len());
        for (i, &th) in theta.iter().enumerate() {
            nodal.push((beta[0][i] - beta[1][i]) * tau_of_theta(th, m)?);
        }
        Ok(self.mesh.element_average(&nodal))
    }

    /// Phase-force load vectors `∫ g(u, w, p) phi_i`, nodal quadrature per element.
    pub fn phase_loads(
        &self,
        u: &[f64],
        theta: &[f64],
        p: &[f64],
    ) -> Result<[Vec<f64>; 3]> {
        let n = self.mesh.n_nodes();
        let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let strain = self.mesh.gradient(u);
        for (e, (i, j, h)) in self.mesh.elements().enumerate() {
            for node in [i, j] {
                let s = LocalState {
                    strain: strain[e],
                    beta: PhasePoint::default(),
                    grad_beta: [0.0; 3],
                    theta: theta[node],
                    pressure: p[e],
                };
                let g = phase_driving_force(&s, &self.material)?.to_array();
                for c in 0..3 {
                    out[c][node] += 0.5 * h * g[c];
                }
            }
        }
        Ok(out)
    }

    /// Rejects states violating the solver's preconditions.
    pub fn check_state(&self, s: &StateSnapshot) -> Vec<FieldError> {
        let n = self.mesh.n_nodes();
        let mut errs = Vec::new();
        let sizes_ok = s.u.len() == n
            && s.w.len() == n
            && s.beta.iter().all(|b| b.len() == n)
            && s.p.len() == self.mesh.n_elements();
        if !sizes_ok {
            errs.push(FieldError::new("state", "field sizes do not match the mesh"));
            return errs;
        }
        for &i in self.mesh.gamma0() {
            if s.u[i] != 0.0 {
                errs.push(FieldError::new(
                    format!("initial.u[node {i}]"),
                    "displacement must vanish on the clamped boundary",
                ));
            }
        }
        for i in 0..n {
            if !s.w[i].is_finite() {
                errs.push(FieldError::new(
                    format!("initial.theta[node {i}]"),
                    "temperature must be positive: entropy formulation requires theta in the image of exp",
                ));
            }
            if !s.phase_at(i).in_c() {
                let b = s.phase_at(i);
                errs.push(FieldError::new(
                    format!("initial.beta[node {i}]"),
                    format!(
                        "({}, {}, {}) is outside C: fractions must lie in [0, 1] with sum {} <= 1",
                        b.b1,
                        b.b2,
                        b.b3,
                        b.sum()
                    ),
                ));
            }
        }
        errs
    }
}

fn combine(n: usize, terms: &[(f64, &CsMat<f64>)], diag: Option<(f64, &[f64])>) -> CsMat<f64> {
    let mut t = TriMat::new((n, n));
    for &(c, m) in terms {
        for (row, vec) in m.outer_iterator().enumerate() {
            for (col, &v) in vec.iter() {
                t.add_triplet(row, col, c * v);
            }
        }
    }
    if let Some((c, d)) = diag {
        for (i, &v) in d.iter().enumerate() {
            t.add_triplet(i, i, c * v);
        }
    }
    t.to_csr()
}

/// Factorized per-step systems for one `(dt, eps)` pair.
#[derive(Debug)]
pub struct StepOperators {
    pub dt: f64,
    pub reg: RegularizationParams,
    /// `C M/dt + lambda B`.
    entropy: SpdSystem,
    /// `A + B/(eps dt)`, clamped on Gamma_0.
    momentum: SpdSystem,
    /// `(c M + upsilon B)/dt + k B`.
    phase: SpdSystem,
}

impl StepOperators {
    pub fn new(model: &Model, dt: f64, reg: RegularizationParams) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let n = model.mesh.n_nodes();
        let m = &model.material;
        let b = &model.laplace.matrix;
        let eps = reg.epsilon();
        let entropy = SpdSystem::new(
            &combine(n, &[(m.conductivity, b)], Some((m.heat_capacity / dt, &model.lumped))),
            &[],
        )?;
        let momentum = SpdSystem::new(
            &combine(n, &[(1.0, &model.elastic.matrix), (1.0 / (eps * dt), b)], None),
            model.mesh.gamma0(),
        )
        .map_err(|e| {
            Error::LinearSolve(format!(
                "momentum system with penalty factor 1/(eps dt) = {:.3e}: {e}",
                1.0 / (eps * dt)
            ))
        })?;
        let phase = SpdSystem::new(
            &combine(
                n,
                &[(m.gradient_viscosity / dt + m.interface_energy, b)],
                Some((m.phase_viscosity / dt, &model.lumped)),
            ),
            &[],
        )?;
        Ok(Self {
            dt,
            reg,
            entropy,
            momentum,
            phase,
        })
    }
}

/// Implicit Euler step of the entropy balance with a prescribed austenite rate.
pub fn solve_entropy(
    model: &Model,
    ops: &StepOperators,
    prev: &StateSnapshot,
    beta3_rate: &[f64],
    loads: &Loads,
) -> Result<Vec<f64>> {
    let m = &model.material;
    let bw = model.laplace.apply(&prev.w);
    let load = model.entropy_load(loads);
    let lr = m.latent_ratio();
    let rhs: Vec<f64> = (0..prev.w.len())
        .map(|i| load[i] - lr * model.lumped[i] * beta3_rate[i] - m.conductivity * bw[i])
        .collect();
    let dw = ops.entropy.solve(&rhs)?;
    Ok(prev.w.iter().zip(dw).map(|(w, d)| w + d).collect())
}

/// Momentum balance with the pressure eliminated; returns `(u, p)`.
///
/// `beta` enters through the stress coupling, `beta_rate_sum` through the mass
/// balance.
pub fn solve_momentum(
    model: &Model,
    ops: &StepOperators,
    beta: &[Vec<f64>; 3],
    w: &[f64],
    beta_rate_sum: &[f64],
    u_prev: &[f64],
    loads: &Loads,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let eps = ops.reg.epsilon();
    let dt = ops.dt;
    let theta: Vec<f64> = w.iter().map(|&x| gamma_eps(x, ops.reg)).collect();
    let q = model.coupling_stress(beta, &theta)?;
    let s = model.mesh.element_average(beta_rate_sum);
    let f = model.force_vector(loads);
    let hq = model.divergence.apply(&q);
    let hs = model.divergence.apply(&s);
    let au = model.elastic.apply(u_prev);
    let rhs: Vec<f64> = (0..f.len())
        .map(|i| f[i] + hq[i] - au[i] - hs[i] / eps)
        .collect();
    let du = ops.momentum.solve(&rhs)?;
    let ddiv = model.mesh.gradient(&du);
    let p: Vec<f64> = s
        .iter()
        .zip(&ddiv)
        .map(|(se, de)| -(se + de / dt) / eps)
        .collect();
    let u = u_prev.iter().zip(&du).map(|(a, b)| a + b).collect();
    Ok((u, p))
}

/// Outcome of the inner Picard iteration of the phase flow.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSolve {
    pub beta: [Vec<f64>; 3],
    pub sweeps: usize,
    pub residual: f64,
}

/// Phase step for given force load vectors `∫ g phi_i`.
///
/// Relaxed Picard on the Yosida term; each sweep is one SPD solve per component
/// with the shared factorization.
pub fn solve_phase_with_loads(
    model: &Model,
    ops: &StepOperators,
    force: &[Vec<f64>; 3],
    beta_prev: &[Vec<f64>; 3],
    guess: Option<&[Vec<f64>; 3]>,
    cfg: &SolverConfig,
) -> Result<PhaseSolve> {
    let n = model.mesh.n_nodes();
    let k = model.material.interface_energy;
    let omega = cfg.picard_relaxation;
    let tol = 0.1 * cfg.fp_tol;
    let bb: [Vec<f64>; 3] = std::array::from_fn(|c| model.laplace.apply(&beta_prev[c]));
    let base: [Vec<f64>; 3] =
        std::array::from_fn(|c| (0..n).map(|i| force[c][i] - k * bb[c][i]).collect());
    let mut delta: [Vec<f64>; 3] = match guess {
        Some(g) => std::array::from_fn(|c| (0..n).map(|i| g[c][i] - beta_prev[c][i]).collect()),
        None => std::array::from_fn(|_| vec![0.0; n]),
    };
    let mut residual = f64::INFINITY;
    for sweep in 1..=cfg.phase_max_sweeps {
        let mut rhs = base.clone();
        for i in 0..n {
            let b = PhasePoint::new(
                beta_prev[0][i] + delta[0][i],
                beta_prev[1][i] + delta[1][i],
                beta_prev[2][i] + delta[2][i],
            );
            if !b.in_c() {
                let a = yosida_alpha(b, ops.reg).to_array();
                for c in 0..3 {
                    rhs[c][i] -= model.lumped[i] * a[c];
                }
            }
        }
        residual = 0.0;
        for c in 0..3 {
            let target = ops.phase.solve(&rhs[c])?;
            for i in 0..n {
                let next = (1.0 - omega) * delta[c][i] + omega * target[i];
                residual = residual.max((next - delta[c][i]).abs());
                delta[c][i] = next;
            }
        }
        if residual <= tol {
            let beta = std::array::from_fn(|c| {
                (0..n).map(|i| beta_prev[c][i] + delta[c][i]).collect()
            });
            return Ok(PhaseSolve {
                beta,
                sweeps: sweep,
                residual,
            });
        }
    }
    Err(Error::PhaseNonConvergence {
        iterations: cfg.phase_max_sweeps,
        residual,
        ratio: ops.dt / ops.reg.epsilon(),
    })
}

/// Phase step driven by the forces of the given mechanical and thermal state.
pub fn solve_phase(
    model: &Model,
    ops: &StepOperators,
    u: &[f64],
    w: &[f64],
    p: &[f64],
    beta_prev: &[Vec<f64>; 3],
    guess: Option<&[Vec<f64>; 3]>,
    cfg: &SolverConfig,
) -> Result<PhaseSolve> {
    let theta: Vec<f64> = w.iter().map(|&x| gamma_eps(x, ops.reg)).collect();
    let force = model.phase_loads(u, &theta, p)?;
    solve_phase_with_loads(model, ops, &force, beta_prev, guess, cfg)
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub dt: f64,
    pub fp_iterations: usize,
    pub fp_final_residual: f64,
    /// Max-norm change of the phase iterate after every sweep.
    pub fp_residuals: Vec<f64>,
    pub phase_sweeps: usize,
    pub energy: EnergyLedger,
    /// Largest nodal `dist(beta, C)`.
    pub constraint_residual: f64,
    /// L2 norm over elements of `d/dt sum(beta) + div u_t + eps p`.
    pub mass_residual: f64,
    pub max_abs_w: f64,
}

impl StepReport {
    /// Geometric mean of successive residual ratios, if at least two nonzero
    /// residuals were recorded.
    pub fn contraction_ratio(&self) -> Option<f64> {
        let ratios: Vec<f64> = self
            .fp_residuals
            .windows(2)
            .filter(|w| w[0] > 0.0 && w[1] > 0.0)
            .map(|w| w[1] / w[0])
            .collect();
        if ratios.is_empty() {
            None
        } else {
            Some((ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp())
        }
    }
}

/// Penalized mass-balance residual per element.
pub fn mass_balance_residual(
    model: &Model,
    prev: &StateSnapshot,
    next: &StateSnapshot,
    reg: RegularizationParams,
) -> Vec<f64> {
    let dt = next.t - prev.t;
    let n = model.mesh.n_nodes();
    let dsum: Vec<f64> = (0..n)
        .map(|i| (0..3).map(|c| next.beta[c][i] - prev.beta[c][i]).sum::<f64>() / dt)
        .collect();
    let s = model.mesh.element_average(&dsum);
    let du: Vec<f64> = next.u.iter().zip(&prev.u).map(|(a, b)| a - b).collect();
    let ddiv = model.mesh.gradient(&du);
    s.iter()
        .zip(&ddiv)
        .zip(&next.p)
        .map(|((se, de), pe)| se + de / dt + reg.epsilon() * pe)
        .collect()
}

pub(crate) fn element_l2(mesh: &Mesh1D, v: &[f64]) -> f64 {
    mesh.element_lengths()
        .iter()
        .zip(v)
        .map(|(h, x)| h * x * x)
        .sum::<f64>()
        .sqrt()
}

/// One time step by the staged fixed-point map.
///
/// `t_next` is the time level of the result; `ops.dt` is the step the operators
/// were factorized for.
pub fn fixed_point_step(
    model: &Model,
    ops: &StepOperators,
    prev: &StateSnapshot,
    t_next: f64,
    loads: &Loads,
    cfg: &SolverConfig,
) -> Result<(StateSnapshot, StepReport)> {
    let n = model.mesh.n_nodes();
    let dt = ops.dt;
    let rates = |beta: &[Vec<f64>; 3]| -> (Vec<f64>, Vec<f64>) {
        let r3 = (0..n).map(|i| (beta[2][i] - prev.beta[2][i]) / dt).collect();
        let sum = (0..n)
            .map(|i| (0..3).map(|c| beta[c][i] - prev.beta[c][i]).sum::<f64>() / dt)
            .collect();
        (r3, sum)
    };

    let mut beta_bar = prev.beta.clone();
    let mut residuals = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;
    for _ in 0..cfg.fp_max_iter {
        let (r3, rsum) = rates(&beta_bar);
        let w = solve_entropy(model, ops, prev, &r3, loads)?;
        let (u, p) = solve_momentum(model, ops, &beta_bar, &w, &rsum, &prev.u, loads)?;
        let phase = solve_phase(model, ops, &u, &w, &p, &prev.beta, Some(&beta_bar), cfg)?;
        sweeps += phase.sweeps;
        let res = (0..3)
            .flat_map(|c| (0..n).map(move |i| (c, i)))
            .map(|(c, i)| (phase.beta[c][i] - beta_bar[c][i]).abs())
            .fold(0.0, f64::max);
        residuals.push(res);
        beta_bar = phase.beta;
        if res <= cfg.fp_tol {
            converged = true;
            break;
        }
    }
    let last = residuals.last().copied().unwrap_or(f64::INFINITY);
    if !converged {
        return Err(Error::FixedPointNonConvergence {
            iterations: residuals.len(),
            residual: last,
        });
    }

    // Thermal and mechanical fields consistent with the accepted phase state, so
    // that the mass balance and the latent-heat exchange hold exactly.
    let (r3, rsum) = rates(&beta_bar);
    let w = solve_entropy(model, ops, prev, &r3, loads)?;
    let (u, p) = solve_momentum(model, ops, &beta_bar, &w, &rsum, &prev.u, loads)?;
    let next = StateSnapshot {
        t: t_next,
        u,
        w,
        beta: beta_bar,
        p,
    };

    let energy = diagnostics::advance_ledger(
        model,
        ops.reg,
        &EnergyLedger::at(model, ops.reg, prev),
        prev,
        &next,
        loads,
    );
    let mass = mass_balance_residual(model, prev, &next, ops.reg);
    let report = StepReport {
        dt,
        fp_iterations: residuals.len(),
        fp_final_residual: last,
        fp_residuals: residuals,
        phase_sweeps: sweeps,
        energy,
        constraint_residual: next.constraint_residual(),
        mass_residual: element_l2(&model.mesh, &mass),
        max_abs_w: next.max_abs_w(),
    };
    Ok((next, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub snapshot: StateSnapshot,
    pub report: StepReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: StateSnapshot,
    pub initial_ledger: EnergyLedger,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    /// Initial state followed by every accepted step.
    pub fn snapshots(&self) -> impl Iterator<Item = &StateSnapshot> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|r| &r.snapshot))
    }

    pub fn last(&self) -> &StateSnapshot {
        self.steps.last().map_or(&self.initial, |r| &r.snapshot)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Unrecoverable step failure; carries everything computed before it.
#[derive(Debug)]
pub struct SimulationFailure {
    pub partial: Trajectory,
    pub t_failed: f64,
    pub dt_failed: f64,
    pub error: Error,
}

impl std::fmt::Display for SimulationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "step from t = {} with dt = {:.3e} failed after {} accepted steps: {}",
            self.t_failed,
            self.dt_failed,
            self.partial.len(),
            self.error
        )
    }
}

impl std::error::Error for SimulationFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

struct Stepper<'a> {
    model: &'a Model,
    history: &'a dyn LoadHistory,
    cfg: SolverConfig,
    cache: Vec<StepOperators>,
}

impl Stepper<'_> {
    fn ops(&mut self, dt: f64) -> Result<usize> {
        if let Some(k) = self.cache.iter().position(|o| o.dt == dt) {
            return Ok(k);
        }
        self.cache.push(StepOperators::new(self.model, dt, self.cfg.epsilon)?);
        Ok(self.cache.len() - 1)
    }

    /// Advances from `state` to `t1`, halving on fixed-point failure.
    fn advance(
        &mut self,
        traj: &mut Trajectory,
        t1: f64,
        dt: f64,
        depth: usize,
    ) -> std::result::Result<(), (Error, f64, f64)> {
        let t0 = traj.last().t;
        let k = self.ops(dt).map_err(|e| (e, t0, dt))?;
        let loads = self.history.loads_at(t1);
        let attempt = fixed_point_step(self.model, &self.cache[k], traj.last(), t1, &loads, &self.cfg);
        match attempt {
            Ok((snap, mut report)) => {
                report.energy = diagnostics::chain_ledger(&traj_ledger(traj), &report.energy);
                traj.steps.push(StepRecord { snapshot: snap, report });
                Ok(())
            }
            Err(e @ (Error::FixedPointNonConvergence { .. } | Error::PhaseNonConvergence { .. }))
                if depth < self.cfg.max_halvings =>
            {
                let _ = e;
                let half = 0.5 * dt;
                let tm = t0 + half;
                self.advance(traj, tm, half, depth + 1)?;
                self.advance(traj, t1, half, depth + 1)
            }
            Err(e) => Err((e, t0, dt)),
        }
    }
}

fn traj_ledger(traj: &Trajectory) -> EnergyLedger {
    traj.steps
        .last()
        .map_or(traj.initial_ledger, |r| r.report.energy)
}

/// Uniform time grid `k dt`, the last step shortened to land on `t_end`.
pub fn time_grid(dt: f64, t_end: f64) -> Vec<f64> {
    let n = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    (1..=n)
        .map(|k| if k == n { t_end } else { k as f64 * dt })
        .collect()
}

/// Integrates from `initial` to `cfg.t_end`.
pub fn run_simulation(
    model: &Model,
    initial: StateSnapshot,
    history: &dyn LoadHistory,
    cfg: &SolverConfig,
) -> std::result::Result<Trajectory, SimulationFailure> {
    let reg = cfg.epsilon;
    let initial_ledger = EnergyLedger::at(model, reg, &initial);
    let mut traj = Trajectory {
        initial,
        initial_ledger,
        steps: Vec::new(),
    };
    let mut errs = cfg.check();
    errs.extend(model.check_state(&traj.initial));
    if !errs.is_empty() {
        return Err(SimulationFailure {
            partial: traj,
            t_failed: 0.0,
            dt_failed: cfg.dt,
            error: Error::Validation(errs),
        });
    }
    let mut stepper = Stepper {
        model,
        history,
        cfg: *cfg,
        cache: Vec::new(),
    };
    let t_start = traj.initial.t;
    for t1 in time_grid(cfg.dt, cfg.t_end - t_start).into_iter().map(|t| t + t_start) {
        let t0 = traj.last().t;
        let dt = if (t1 - t0 - cfg.dt).abs() <= 1e-12 * cfg.dt { cfg.dt } else { t1 - t0 };
        if let Err((error, t_failed, dt_failed)) = stepper.advance(&mut traj, t1, dt, 0) {
            return Err(SimulationFailure {
                partial: traj,
                t_failed,
                dt_failed,
                error,
            });
        }
    }
    Ok(traj)
}

/// Trivial initial state: `u = 0`, uniform `w`, uniform `beta`, zero pressure.
pub fn uniform_state(mesh: &Mesh1D, w: f64, beta: PhasePoint) -> StateSnapshot {
    let n = mesh.n_nodes();
    StateSnapshot {
        t: 0.0,
        u: vec![0.0; n],
        w: vec![w; n],
        beta: [vec![beta.b1; n], vec![beta.b2; n], vec![beta.b3; n]],
        p: vec![0.0; mesh.n_elements()],
    }
}

/// `sum_i m_i x_i y_i`.
pub(crate) fn lumped_dot(model: &Model, x: &[f64], y: &[f64]) -> f64 {
    model.lumped.iter().zip(x).zip(y).map(|((m, a), b)| m * a * b).sum()
}

#[allow(dead_code)]
pub(crate) fn laplace_form(model: &Model, x: &[f64], y: &[f64]) -> f64 {
    dot(x, &model.laplace.apply(y))
}
