//! Constitutive laws of the three-phase mixture with voids (1D scalar form).
//!
//! Small-perturbation free energy per unit volume:
//!
//! ```text
//! Psi = K e²/2 - (b1 - b2) tau(theta) e - b3 (l_a/theta_0)(theta - theta_0)
//!       - C theta log theta + (k/2)|grad b|² + I_C(b)
//! ```
//!
//! The pressure is the reaction of the mass-balance constraint and enters the
//! stress and every phase force additively; it is not derived from `Psi`.

use serde::{Deserialize, Serialize};

use crate::convex_analysis::{tau_of_theta, tau_prime, PhasePoint};
use crate::error::{Error, FieldError, Result};

/// Physical constants of the alloy. Defaults are the normalized instance
/// `c = k = l_a/theta_0 = C = lambda = upsilon = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    /// Elastic modulus `K` (stress).
    pub stiffness: f64,
    /// Volumetric heat capacity `C`.
    pub heat_capacity: f64,
    /// Latent heat `l_a` (energy per volume).
    pub latent_heat: f64,
    /// Phase-equilibrium temperature `theta_0`.
    pub theta_0: f64,
    /// Temperature above which the stress coupling vanishes.
    pub theta_c: f64,
    /// Slope of the stress-temperature coupling, nonpositive.
    pub tau_bar: f64,
    /// Phase viscosity `c`.
    pub phase_viscosity: f64,
    /// Interfacial energy coefficient `k`.
    pub interface_energy: f64,
    /// Gradient viscosity `upsilon`.
    pub gradient_viscosity: f64,
    /// Thermal conductivity `lambda`.
    pub conductivity: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            stiffness: 1.0,
            heat_capacity: 1.0,
            latent_heat: 1.0,
            theta_0: 1.0,
            theta_c: 2.0,
            tau_bar: -1.0,
            phase_viscosity: 1.0,
            interface_energy: 1.0,
            gradient_viscosity: 1.0,
            conductivity: 1.0,
        }
    }
}

impl MaterialParams {
    /// `l_a / theta_0`, the entropy jump of the austenite transformation.
    pub fn latent_ratio(&self) -> f64 {
        self.latent_heat / self.theta_0
    }

    /// Every violated invariant, keyed by field name.
    pub fn check(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, field: &str, msg: &str| {
            if !ok {
                errs.push(FieldError::new(format!("material.{field}"), msg));
            }
        };
        let all = [
            self.stiffness,
            self.heat_capacity,
            self.latent_heat,
            self.theta_0,
            self.theta_c,
            self.tau_bar,
            self.phase_viscosity,
            self.interface_energy,
            self.gradient_viscosity,
            self.conductivity,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            errs.push(FieldError::new("material", "all constants must be finite"));
            return errs;
        }
        need(
            self.theta_0 > 0.0,
            "theta_0",
            "equilibrium temperature must be positive (absolute scale)",
        );
        need(
            self.theta_c > self.theta_0,
            "theta_c",
            "critical temperature must exceed the equilibrium temperature theta_0",
        );
        need(
            self.tau_bar <= 0.0,
            "tau_bar",
            "stress-temperature slope must be nonpositive so that tau(theta) >= 0 below theta_c",
        );
        need(self.stiffness > 0.0, "stiffness", "elastic modulus must be positive");
        need(
            self.interface_energy > 0.0,
            "interface_energy",
            "interfacial energy coefficient must be positive",
        );
        need(
            self.heat_capacity > 0.0,
            "heat_capacity",
            "heat capacity must be positive for the entropy equation to be parabolic",
        );
        need(
            self.phase_viscosity > 0.0,
            "phase_viscosity",
            "phase viscosity must be positive for the discrete gradient flow",
        );
        need(
            self.gradient_viscosity >= 0.0,
            "gradient_viscosity",
            "gradient viscosity must be nonnegative",
        );
        need(
            self.conductivity >= 0.0,
            "conductivity",
            "thermal conductivity must be nonnegative",
        );
        need(
            self.latent_heat >= 0.0,
            "latent_heat",
            "latent heat must be nonnegative",
        );
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
}

/// Pointwise state at a quadrature point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalState {
    /// Small strain `du/dx`.
    pub strain: f64,
    pub beta: PhasePoint,
    pub grad_beta: [f64; 3],
    /// Absolute temperature.
    pub theta: f64,
    pub pressure: f64,
}

impl LocalState {
    fn check_theta(&self) -> Result<()> {
        if self.theta > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "absolute temperature must be positive, got {}",
                self.theta
            )))
        }
    }
}

/// Value of the free energy; `Infeasible` stands for the `+inf` of the indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FreeEnergy {
    Finite(f64),
    Infeasible,
}

impl FreeEnergy {
    pub fn value(self) -> Option<f64> {
        match self {
            FreeEnergy::Finite(v) => Some(v),
            FreeEnergy::Infeasible => None,
        }
    }
}

pub fn free_energy(s: &LocalState, m: &MaterialParams) -> Result<FreeEnergy> {
    s.check_theta()?;
    if !s.beta.in_c() {
        return Ok(FreeEnergy::Infeasible);
    }
    let tau = tau_of_theta(s.theta, m)?;
    let b = s.beta;
    let grad2: f64 = s.grad_beta.iter().map(|g| g * g).sum();
    let psi = 0.5 * m.stiffness * s.strain * s.strain
        - (b.b1 - b.b2) * tau * s.strain
        - b.b3 * m.latent_ratio() * (s.theta - m.theta_0)
        - m.heat_capacity * s.theta * s.theta.ln()
        + 0.5 * m.interface_energy * grad2;
    Ok(FreeEnergy::Finite(psi))
}

/// `K e - (b1 - b2) tau(theta) - p`.
pub fn stress(s: &LocalState, m: &MaterialParams) -> Result<f64> {
    s.check_theta()?;
    let tau = tau_of_theta(s.theta, m)?;
    Ok(m.stiffness * s.strain - (s.beta.b1 - s.beta.b2) * tau - s.pressure)
}

/// Right-hand side of the phase gradient flow, `-dPsi/dbeta + p`:
/// `(tau e + p, -tau e + p, (l_a/theta_0)(theta - theta_0) + p)`.
///
/// Tension at low temperature favors variant 1, heating above `theta_0` favors
/// austenite.
pub fn phase_driving_force(s: &LocalState, m: &MaterialParams) -> Result<PhasePoint> {
    s.check_theta()?;
    let te = tau_of_theta(s.theta, m)? * s.strain;
    let p = s.pressure;
    Ok(PhasePoint::new(
        te + p,
        -te + p,
        m.latent_ratio() * (s.theta - m.theta_0) + p,
    ))
}

/// `-dPsi/dtheta = C (1 + log theta) + b3 l_a/theta_0 + (b1 - b2) tau'(theta) e`.
///
/// The last term vanishes above `theta_c`, at zero strain, or for equal variant
/// fractions.
pub fn entropy_density(s: &LocalState, m: &MaterialParams) -> Result<f64> {
    s.check_theta()?;
    let coupling = (s.beta.b1 - s.beta.b2) * tau_prime(s.theta, m)? * s.strain;
    Ok(m.heat_capacity * (1.0 + s.theta.ln()) + s.beta.b3 * m.latent_ratio() + coupling)
}

/// Entropy flux `-lambda grad(theta)/theta = -lambda grad(w)` with `w = log theta`.
pub fn entropy_flux(grad_w: f64, m: &MaterialParams) -> f64 {
    -m.conductivity * grad_w
}
