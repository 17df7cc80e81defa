//! Finite-difference solvers for the macroscopic equations.
//!
//! All solvers take their spatial grid from the initial profile and a
//! [`PdeConfig`] for time stepping. Diffusion is `½ ∂²` throughout, so the
//! explicit scheme needs `dt ≤ 0.9 h²`.

mod conditioned;
mod free_boundary;
mod kpp;

pub use conditioned::conditioned_evolution_solve;
pub use free_boundary::{dr_bm_solve, dr_rw_solve, truncate_to_unit_mass};
pub use kpp::kpp_solve;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, GridFunction};
use crate::series::SnapshotSeries;
use crate::stats::{ols, EstimateWithCI};

const CFL_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Explicit,
    /// Crank–Nicolson for the linear part, explicit reaction.
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Time between snapshots; rounded to a whole number of steps.
    pub snapshot_every: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl PdeConfig {
    pub fn new(dt: f64, t_max: f64, snapshot_every: f64) -> Self {
        Self { dt, t_max, snapshot_every, scheme: Scheme::Explicit }
    }

    /// Explicit config at the largest stable step for spacing `h`.
    pub fn explicit_for(h: f64, t_max: f64, snapshot_every: f64) -> Self {
        Self::new(CFL_SAFETY * h * h, t_max, snapshot_every)
    }

    pub fn semi_implicit(dt: f64, t_max: f64, snapshot_every: f64) -> Self {
        Self { scheme: Scheme::SemiImplicit, ..Self::new(dt, t_max, snapshot_every) }
    }

    pub(crate) fn validate(&self, grid: &Grid1D) -> Result<()> {
        self.validate_time()?;
        let limit = CFL_SAFETY * grid.h * grid.h;
        if self.scheme == Scheme::Explicit && self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::param(format!(
                "explicit scheme needs dt <= 0.9 h^2 = {limit:e}, got {:e}",
                self.dt
            )));
        }
        Ok(())
    }

    /// Step and horizon checks without the diffusive stability limit.
    pub(crate) fn validate_time(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::param(format!("T = {} must be >= 0", self.t_max)));
        }
        if !(self.snapshot_every > 0.0) {
            return Err(Error::param("snapshot interval must be > 0"));
        }
        Ok(())
    }

    pub(crate) fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub(crate) fn stride(&self) -> usize {
        ((self.snapshot_every / self.dt).round() as usize).max(1)
    }

    pub(crate) fn is_snapshot(&self, k: usize) -> bool {
        k.is_multiple_of(self.stride()) || k == self.steps()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSnapshot {
    pub t: f64,
    pub profile: GridFunction,
    /// Free-boundary position.
    pub gamma: Option<f64>,
    /// `−ln(mass factor)/dt` over the last step.
    pub renormalization_rate: Option<f64>,
    /// One-sided estimate of `½ u_x(t, 0)`.
    pub boundary_flux: Option<f64>,
}

impl ProfileSnapshot {
    pub(crate) fn plain(t: f64, profile: GridFunction) -> Self {
        Self { t, profile, gamma: None, renormalization_rate: None, boundary_flux: None }
    }
}

pub type ProfileSeries = SnapshotSeries<ProfileSnapshot>;

/// Free-boundary runs: every snapshot carries `gamma`.
pub type FreeBoundarySeries = ProfileSeries;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PdeDiagnostics {
    /// Largest single-node clip into `[0, 1]` (KPP).
    pub max_clip: f64,
    /// Largest deviation next to a pinned or absorbing edge.
    pub boundary_leak: f64,
    /// Largest `|mass − 1|` at a snapshot (mass-conserving solvers).
    pub mass_drift: f64,
    pub warnings: Vec<String>,
}

impl PdeDiagnostics {
    pub(crate) fn warn_once(&mut self, msg: String) {
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeRun {
    pub series: ProfileSeries,
    pub diagnostics: PdeDiagnostics,
}

/// Three-point constant-coefficient operator
/// `(L u)_i = lo·u_{i−1} + mid·u_i + hi·u_{i+1}` on interior nodes, with the
/// two edge values held fixed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub lo: f64,
    pub mid: f64,
    pub hi: f64,
}

impl Stencil {
    /// `½ ∂²_x + c ∂_x`, central differences.
    pub fn diffusion_drift(h: f64, c: f64) -> Self {
        let d = 0.5 / (h * h);
        let a = c / (2.0 * h);
        Self { lo: d - a, mid: -2.0 * d, hi: d + a }
    }

    fn apply(&self, u: &[f64], i: usize) -> f64 {
        self.lo * u[i - 1] + self.mid * u[i] + self.hi * u[i + 1]
    }

    pub fn step(&self, u: &mut [f64], dt: f64, scheme: Scheme, scratch: &mut Vec<f64>) {
        let n = u.len();
        match scheme {
            Scheme::Explicit => {
                scratch.clear();
                scratch.extend((1..n - 1).map(|i| u[i] + dt * self.apply(u, i)));
                u[1..n - 1].copy_from_slice(scratch);
            }
            Scheme::SemiImplicit => {
                let m = n - 2;
                let half = 0.5 * dt;
                let mut rhs: Vec<f64> = (1..n - 1).map(|i| u[i] + half * self.apply(u, i)).collect();
                // Fixed edges enter the implicit half-step as sources too.
                rhs[0] += half * self.lo * u[0];
                rhs[m - 1] += half * self.hi * u[n - 1];
                let sol = thomas(-half * self.lo, 1.0 - half * self.mid, -half * self.hi, &rhs);
                u[1..n - 1].copy_from_slice(&sol);
            }
        }
    }
}

/// Solves the constant tridiagonal system `a x_{i−1} + b x_i + c x_{i+1} = d_i`.
pub(crate) fn thomas(a: f64, b: f64, c: f64, d: &[f64]) -> Vec<f64> {
    let m = d.len();
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    cp[0] = c / b;
    dp[0] = d[0] / b;
    for i in 1..m {
        let denom = b - a * cp[i - 1];
        cp[i] = c / denom;
        dp[i] = (d[i] - a * dp[i - 1]) / denom;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = dp[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Leftmost crossing of `level` by linear interpolation, per snapshot;
/// `None` when the profile never crosses.
pub fn front_position(series: &ProfileSeries, level: f64) -> Vec<(f64, Option<f64>)> {
    series.iter().map(|s| (s.t, crossing(&s.profile, level))).collect()
}

fn crossing(f: &GridFunction, level: f64) -> Option<f64> {
    let v = &f.values;
    (0..v.len() - 1).find_map(|i| {
        let (a, b) = (v[i] - level, v[i + 1] - level);
        if a == 0.0 {
            Some(f.grid.x(i))
        } else if a * b < 0.0 || b == 0.0 {
            Some(f.grid.x(i) + f.grid.h * a / (a - b))
        } else {
            None
        }
    })
}

/// OLS slope of tracked positions over `t ∈ [t0, t1]`, skipping missing ones.
pub fn track_speed(points: &[(f64, Option<f64>)], window: (f64, f64)) -> Result<EstimateWithCI> {
    let (ts, xs): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .filter_map(|(t, x)| x.map(|x| (*t, x)))
        .unzip();
    if ts.len() < 3 {
        return Err(Error::param(format!("{} tracked points in window, need >= 3", ts.len())));
    }
    let (_, slope, se) = ols(&ts, &xs);
    Ok(EstimateWithCI::new(slope, se, ts.len()))
}

/// `γ(t)` track of a free-boundary run.
pub fn gamma_track(series: &FreeBoundarySeries) -> Vec<(f64, Option<f64>)> {
    series.iter().map(|s| (s.t, s.gamma)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_solves_tridiagonal() {
        let d = [1.0, 2.0, 3.0, 4.0];
        let x = thomas(-1.0, 4.0, -0.5, &d);
        for i in 0..4 {
            let lhs = 4.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i < 3 { 0.5 * x[i + 1] } else { 0.0 };
            assert!((lhs - d[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn cfl_guard() {
        let g = Grid1D::spanning(0.0, 1.0, 0.1).unwrap();
        assert!(PdeConfig::new(0.01, 1.0, 0.1).validate(&g).is_err());
        assert!(PdeConfig::explicit_for(0.1, 1.0, 0.1).validate(&g).is_ok());
        assert!(PdeConfig::semi_implicit(0.01, 1.0, 0.1).validate(&g).is_ok());
    }

    fn translated(c: f64) -> ProfileSeries {
        let grid = Grid1D::spanning(-10.0, 30.0, 0.01).unwrap();
        let mut s = ProfileSeries::new();
        for k in 0..20 {
            let t = k as f64 * 0.5;
            let f = GridFunction::from_fn(grid, |x| 1.0 / (1.0 + (-(x - c * t)).exp())).unwrap();
            s.push(ProfileSnapshot::plain(t, f));
        }
        s
    }

    #[test]
    fn front_of_translated_profile() {
        let track = front_position(&translated(1.5), 0.5);
        let v = track_speed(&track, (0.0, 10.0)).unwrap();
        assert!((v.value - 1.5).abs() < 1e-9);
        let v = track_speed(&front_position(&translated(0.0), 0.5), (0.0, 10.0)).unwrap();
        assert!(v.value.abs() < 1e-12);
        let missing = front_position(&translated(0.0), 2.0);
        assert!(missing.iter().all(|(_, x)| x.is_none()));
    }
}
