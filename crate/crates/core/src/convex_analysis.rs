//! Convex geometry of the admissible phase set and the regularizations built on it.
//!
//! The admissible set is
//!
//! ```text
//! C = { b ∈ R³ : 0 ≤ b_i ≤ 1, b1 + b2 + b3 ≤ 1 }
//! ```
//!
//! Its indicator is replaced by the Moreau-Yosida envelope
//! `j_eps(b) = dist(b, C)² / (2 eps)` whose gradient `alpha_eps = (b - P_C b) / eps`
//! is single-valued and `1/eps`-Lipschitz. The temperature is carried as
//! `theta = gamma_eps(w)`, an exponential that turns affine above `w = 1/eps`.

use crate::constitutive::MaterialParams;
use crate::error::{Error, Result};

/// Volume fractions of the two martensite variants and austenite.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhasePoint {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl PhasePoint {
    pub const fn new(b1: f64, b2: f64, b3: f64) -> Self {
        Self { b1, b2, b3 }
    }

    pub const fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub const fn to_array(self) -> [f64; 3] {
        [self.b1, self.b2, self.b3]
    }

    /// Fixed evaluation order; membership tests and the projection both use it.
    pub fn sum(self) -> f64 {
        (self.b1 + self.b2) + self.b3
    }

    /// Void fraction `1 - (b1 + b2 + b3)`.
    pub fn void_fraction(self) -> f64 {
        1.0 - self.sum()
    }

    /// Exact membership in C, no tolerance band.
    pub fn in_c(self) -> bool {
        let a = self.to_array();
        a.iter().all(|&b| (0.0..=1.0).contains(&b)) && self.sum() <= 1.0
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, other: Self) -> f64 {
        self.b1 * other.b1 + self.b2 * other.b2 + self.b3 * other.b3
    }
}

impl std::ops::Sub for PhasePoint {
    type Output = PhasePoint;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.b1 - rhs.b1, self.b2 - rhs.b2, self.b3 - rhs.b3)
    }
}

impl std::ops::Add for PhasePoint {
    type Output = PhasePoint;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.b1 + rhs.b1, self.b2 + rhs.b2, self.b3 + rhs.b3)
    }
}

impl std::ops::Mul<f64> for PhasePoint {
    type Output = PhasePoint;
    fn mul(self, s: f64) -> Self {
        Self::new(self.b1 * s, self.b2 * s, self.b3 * s)
    }
}

/// Regularization parameter shared by the Yosida operator, the temperature cap
/// in `gamma_eps` and the pressure penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    epsilon: f64,
}

impl RegularizationParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(self) -> f64 {
        self.epsilon
    }

    /// Junction of the exponential and affine branches of `gamma_eps`.
    pub fn cap(self) -> f64 {
        1.0 / self.epsilon
    }
}

/// Candidate KKT point for one face: coordinates in `zero_mask` are pinned to 0,
/// and the sum constraint is active when `sum_active`. Returns the point and its
/// largest KKT violation (0 for an exact KKT point).
fn face_candidate(x: [f64; 3], zero_mask: u8, sum_active: bool) -> Option<([f64; 3], f64)> {
    let free: Vec<usize> = (0..3).filter(|i| zero_mask & (1 << i) == 0).collect();
    let mut y = [0.0; 3];
    let mut violation: f64 = 0.0;
    let mu = if sum_active {
        if free.is_empty() {
            return None;
        }
        let s: f64 = free.iter().map(|&i| x[i]).sum();
        (s - 1.0) / free.len() as f64
    } else {
        0.0
    };
    violation = violation.max(-mu);
    for &i in &free {
        y[i] = x[i] - mu;
        violation = violation.max(-y[i]);
    }
    for i in 0..3 {
        if zero_mask & (1 << i) != 0 {
            // multiplier of the active lower bound
            violation = violation.max(-(mu - x[i]));
        }
    }
    if !sum_active {
        violation = violation.max((y[0] + y[1]) + y[2] - 1.0);
    }
    Some((y, violation))
}

/// Clean rounding so the returned point passes `in_c` exactly.
fn snap_into_c(mut y: [f64; 3]) -> PhasePoint {
    for v in &mut y {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    while (y[0] + y[1]) + y[2] > 1.0 {
        let imax = (0..3)
            .max_by(|&a, &b| y[a].total_cmp(&y[b]))
            .expect("three coordinates");
        y[imax] = y[imax].next_down();
    }
    for v in &mut y {
        if *v > 1.0 {
            *v = 1.0;
        }
    }
    PhasePoint::from_array(y)
}

/// Euclidean projection onto C by exhaustive active-set enumeration.
///
/// The upper bounds `b_i ≤ 1` are implied by `b ≥ 0` and the sum constraint, so
/// the faces are indexed by the set of coordinates pinned at zero (8 subsets) and
/// whether the sum constraint is active. The unique KKT candidate is the
/// projection; under rounding the candidate with the smallest violation wins.
/// Points already in C are returned unchanged.
pub fn project_c(x: PhasePoint) -> PhasePoint {
    if x.in_c() {
        return x;
    }
    let xa = x.to_array();
    let mut best: Option<([f64; 3], f64)> = None;
    'faces: for sum_active in [false, true] {
        // fewer pinned coordinates first
        for zero_mask in [0u8, 1, 2, 4, 3, 5, 6, 7] {
            if let Some((y, v)) = face_candidate(xa, zero_mask, sum_active) {
                if best.map_or(true, |(_, bv)| v < bv) {
                    best = Some((y, v));
                }
                if v <= 0.0 {
                    break 'faces;
                }
            }
        }
    }
    let (y, _) = best.expect("at least one face candidate exists");
    snap_into_c(y)
}

pub fn dist_c(x: PhasePoint) -> f64 {
    (x - project_c(x)).norm()
}

/// Moreau-Yosida approximation of the subdifferential of the indicator of C.
pub fn yosida_alpha(x: PhasePoint, reg: RegularizationParams) -> PhasePoint {
    let p = project_c(x);
    (x - p) * (1.0 / reg.epsilon())
}

/// Moreau envelope `dist(x, C)² / (2 eps)`; its gradient is [`yosida_alpha`].
pub fn yosida_envelope(x: PhasePoint, reg: RegularizationParams) -> f64 {
    let d = x - project_c(x);
    d.dot(d) / (2.0 * reg.epsilon())
}

/// Exponential below `1/eps`, continued affinely with matching slope above it.
pub fn gamma_eps(r: f64, reg: RegularizationParams) -> f64 {
    let cap = reg.cap();
    if r <= cap {
        r.exp()
    } else {
        let e = cap.exp();
        (r - cap) * e + e
    }
}

/// Derivative of [`gamma_eps`].
pub fn gamma_eps_prime(r: f64, reg: RegularizationParams) -> f64 {
    let cap = reg.cap();
    if r <= cap {
        r.exp()
    } else {
        cap.exp()
    }
}

/// Inverse of [`gamma_eps`].
pub fn delta_eps(s: f64, reg: RegularizationParams) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "delta_eps is defined on (0, inf) only, got {s}"
        )));
    }
    let cap = reg.cap();
    let e = cap.exp();
    if s <= e {
        Ok(s.ln())
    } else {
        Ok(cap + (s - e) / e)
    }
}

/// Derivative of [`delta_eps`].
pub fn delta_eps_prime(s: f64, reg: RegularizationParams) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "delta_eps is defined on (0, inf) only, got {s}"
        )));
    }
    let e = reg.cap().exp();
    Ok(if s <= e { 1.0 / s } else { 1.0 / e })
}

/// `s * delta_eps'(s)` in closed form: exactly 1 on the logarithmic branch and
/// `s / e^(1/eps)` (≥ 1) on the affine branch.
pub fn delta_eps_elasticity(s: f64, reg: RegularizationParams) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "delta_eps is defined on (0, inf) only, got {s}"
        )));
    }
    let e = reg.cap().exp();
    Ok(if s <= e { 1.0 } else { s / e })
}

/// `1 + ∫₀ʳ gamma_eps`, closed form on each branch.
pub fn hat_gamma_eps(r: f64, reg: RegularizationParams) -> f64 {
    let cap = reg.cap();
    if r <= cap {
        // 1 + (e^r - 1)
        r.exp()
    } else {
        let e = cap.exp();
        let d = r - cap;
        e + e * d + 0.5 * e * d * d
    }
}

/// Stress-temperature coupling `tau(theta) = (theta - theta_c) * tau_bar` below
/// `theta_c`, zero above.
pub fn tau_of_theta(theta: f64, params: &MaterialParams) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!(
            "absolute temperature must be positive, got {theta}"
        )));
    }
    Ok(if theta <= params.theta_c {
        (theta - params.theta_c) * params.tau_bar
    } else {
        0.0
    })
}

/// One-sided slope of [`tau_of_theta`] (the left slope at `theta_c`).
pub fn tau_prime(theta: f64, params: &MaterialParams) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!(
            "absolute temperature must be positive, got {theta}"
        )));
    }
    Ok(if theta <= params.theta_c {
        params.tau_bar
    } else {
        0.0
    })
}
