//! Laplace exponents of finite-activity Lévy processes, the drifted exponent
//! `ψ_c(θ) = ψ(θ) − cθ`, Esscher tilting and the duality between the
//! maximal absorption rate `r(c) = −ψ_c(θ_c)` and the minimal velocity
//! `c*(r)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{JumpDistribution, JumpLaw, LevyTriplet};

/// Finite search cap used when `θ* = ∞`.
pub const DEFAULT_THETA_CAP: f64 = 1e3;

const GOLDEN_TOL: f64 = 1e-10;

/// Laplace exponent `ψ(θ) = log E e^{θ Z_1}` of a [`LevyTriplet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceExponent {
    pub triplet: LevyTriplet,
    theta_star: f64,
    theta_cap: f64,
}

/// Result of minimizing `ψ_c` over `(0, θ*]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityPoint {
    pub c: f64,
    pub theta_c: f64,
    /// `r = −ψ_c(θ_c)`.
    pub rate: f64,
    /// The minimizer sits on the upper end of the search interval.
    pub at_boundary: bool,
}

impl LaplaceExponent {
    pub fn new(triplet: LevyTriplet) -> Result<Self> {
        triplet.validate()?;
        let theta_star = triplet.jumps.distribution.theta_star();
        Ok(Self {
            triplet,
            theta_star,
            theta_cap: DEFAULT_THETA_CAP,
        })
    }

    pub fn with_theta_cap(mut self, cap: f64) -> Self {
        self.theta_cap = cap;
        self
    }

    /// Supremum of the domain where ψ is finite (possibly `∞`).
    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }

    fn upper(&self) -> f64 {
        self.theta_star.min(self.theta_cap)
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if !(theta >= 0.0) {
            return Err(Error::domain(format!("θ = {theta} must be >= 0")));
        }
        if theta >= self.theta_star {
            return Err(Error::domain(format!("θ = {theta} >= θ* = {}", self.theta_star)));
        }
        Ok(())
    }

    /// ψ without domain checks; `+∞` beyond θ*.
    fn psi_ext(&self, theta: f64) -> f64 {
        let t = &self.triplet;
        let jump = t.jumps.intensity * (t.jumps.distribution.mgf(theta) - 1.0);
        t.drift * theta + 0.5 * t.sigma * t.sigma * theta * theta + jump
    }

    pub fn psi(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.psi_ext(theta))
    }

    pub fn psi_prime(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        let t = &self.triplet;
        Ok(t.drift + t.sigma * t.sigma * theta + t.jumps.intensity * t.jumps.distribution.mgf_prime(theta))
    }

    pub fn psi_c(&self, c: f64, theta: f64) -> Result<f64> {
        Ok(self.psi(theta)? - c * theta)
    }

    /// Minimizer of `ψ_c` by golden-section search on `(0, min(θ*, cap)]`.
    pub fn theta_c(&self, c: f64) -> Result<DualityPoint> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param(format!("velocity c = {c} must be > 0")));
        }
        let upper = self.upper();
        let theta = golden_section(|th| self.psi_ext(th) - c * th, 0.0, upper, GOLDEN_TOL);
        let at_boundary = theta >= upper * (1.0 - 1e-8);
        let theta = if at_boundary && self.theta_star.is_finite() {
            self.theta_star
        } else {
            theta
        };
        let value = self.psi_ext(theta) - c * theta;
        Ok(DualityPoint {
            c,
            theta_c: theta,
            rate: -value,
            at_boundary,
        })
    }

    pub fn max_absorption_rate(&self, c: f64) -> Result<f64> {
        Ok(self.theta_c(c)?.rate)
    }

    /// Unique `c` for which `r` is the maximal absorption rate.
    pub fn min_velocity(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::domain(format!("rate r = {r} must be positive and finite")));
        }
        let mut hi = 1.0;
        let mut doublings = 0;
        while self.max_absorption_rate(hi)? < r {
            hi *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return Err(Error::domain(format!("rate r = {r} is not attained by any velocity")));
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-13 * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.max_absorption_rate(mid)? < r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Triplet of `Z` under the Esscher measure `dP^θ/dP = e^{θZ_t − ψ(θ)t}`.
    pub fn esscher_tilt(&self, theta: f64) -> Result<LevyTriplet> {
        self.check_theta(theta)?;
        let t = &self.triplet;
        let drift = t.drift + t.sigma * t.sigma * theta;
        let jumps = if t.jumps.is_none() {
            JumpLaw::none()
        } else {
            JumpLaw::new(
                t.jumps.distribution.tilt(theta)?,
                t.jumps.intensity * t.jumps.distribution.mgf(theta),
            )?
        };
        LevyTriplet::raw(drift, t.sigma, jumps)
    }
}

/// Minimal front speed `inf_θ M(θ)/θ` of `∂u/∂t = ρ ∗ u`, where `M` is the
/// moment generating function of the displacement law ρ; returns `(θ, c*)`.
pub fn birth_walk_minimal_speed(rho: &JumpDistribution) -> Result<(f64, f64)> {
    rho.validate()?;
    if matches!(rho, JumpDistribution::None) {
        return Err(Error::param("displacement law must not be empty"));
    }
    let upper = rho.theta_star().min(DEFAULT_THETA_CAP);
    // log M is convex and −log θ is convex, so the objective is unimodal.
    let objective = |th: f64| {
        if th <= 0.0 {
            f64::INFINITY
        } else {
            rho.mgf(th).ln() - th.ln()
        }
    };
    let theta = golden_section(objective, 0.0, upper, GOLDEN_TOL);
    Ok((theta, rho.mgf(theta) / theta))
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub(crate) fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..500 {
        if (b - a) <= rel_tol * (x1.abs() + x2.abs()).max(1e-300) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}
