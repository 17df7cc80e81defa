//! Free-boundary problems where mass is created on `x > γ(t)` and `γ(t)`
//! is the cutoff that keeps `∫_γ^∞ u = 1`.
//!
//! Both solvers run on a window that follows the boundary: once `γ` has
//! moved more than one initial left margin past its starting offset, the
//! profile is shifted left by whole cells and zeros enter on the right.

use crate::error::{Error, Result};
use crate::grid::{trapezoid, Grid1D, GridFunction};
use crate::kernels::JumpDistribution;

use super::conditioned::MASS_TOL;
use super::{PdeConfig, PdeDiagnostics, PdeRun, ProfileSeries, ProfileSnapshot, Stencil};

const LEAK_TOL: f64 = 1e-8;
const MIN_MARGIN_CELLS: usize = 3;

/// Zeroes `u` from the left so that its trapezoid mass is exactly 1 and
/// returns the boundary. The cutoff node keeps the fraction `φ` of its
/// value needed for unit mass and `γ = x_j − φ·h`.
pub fn truncate_to_unit_mass(u: &mut [f64], grid: &Grid1D) -> Result<f64> {
    let n = u.len();
    let h = grid.h;
    let total = trapezoid(u, h);
    if total < 1.0 - 1e-12 {
        return Err(Error::Numerical {
            msg: "mass fell below 1 before truncation".into(),
            attained: total,
        });
    }
    // tail[j] = h Σ_{k ≥ j} c_k u_k with node j counted as interior.
    let mut tail = h * 0.5 * u[n - 1];
    if tail >= 1.0 {
        return Err(Error::domain("free boundary reached the right edge of the window"));
    }
    let mut j = n - 1;
    loop {
        let with_j = tail + h * u[j - 1];
        if j == 1 || with_j >= 1.0 - 1e-13 {
            break;
        }
        tail = with_j;
        j -= 1;
    }
    // Nodes ≥ j carry `tail` < 1; node j − 1 completes the unit mass.
    let cut = j - 1;
    if cut == 0 {
        return Err(Error::domain("free boundary reached the left edge of the window"));
    }
    let original = u[cut];
    let keep = ((1.0 - tail) / h).clamp(0.0, original);
    u[..cut].iter_mut().for_each(|v| *v = 0.0);
    u[cut] = keep;
    let phi = if original > 0.0 { keep / original } else { 0.0 };
    Ok(grid.x(cut) - phi * h)
}

struct Window {
    grid: Grid1D,
    margin: f64,
}

impl Window {
    /// Shifts `u` left by whole cells when `γ` is more than two margins in.
    fn follow(&mut self, u: &mut Vec<f64>, gamma: f64) {
        let offset = gamma - self.grid.xmin;
        if offset <= 2.0 * self.margin {
            return;
        }
        let cells = ((offset - self.margin) / self.grid.h).floor() as usize;
        if cells == 0 || cells >= u.len() {
            return;
        }
        u.drain(..cells);
        u.extend(std::iter::repeat_n(0.0, cells));
        self.grid.xmin += cells as f64 * self.grid.h;
    }
}

fn prepare(u0: &GridFunction) -> Result<(Vec<f64>, f64, Window)> {
    if u0.values.iter().any(|&v| v < 0.0) {
        return Err(Error::param("initial density must be nonnegative"));
    }
    let mass = u0.integral();
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(Error::param(format!("initial density has mass {mass}, expected 1")));
    }
    let mut u: Vec<f64> = u0.values.iter().map(|v| v / mass).collect();
    // Treat the first positive node's left neighbour as the boundary.
    let first = u.iter().position(|&v| v > 0.0).ok_or_else(|| Error::param("initial density is identically 0"))?;
    if first < MIN_MARGIN_CELLS {
        return Err(Error::param(format!(
            "initial density needs >= {MIN_MARGIN_CELLS} zero cells left of its support"
        )));
    }
    let gamma = truncate_to_unit_mass(&mut u, &u0.grid)?;
    let margin = gamma - u0.grid.xmin;
    Ok((u, gamma, Window { grid: u0.grid, margin }))
}

fn snapshot(t: f64, grid: Grid1D, u: &[f64], gamma: f64, diag: &mut PdeDiagnostics) -> ProfileSnapshot {
    let mut s = ProfileSnapshot::plain(t, GridFunction { grid, values: u.to_vec() });
    diag.mass_drift = diag.mass_drift.max((s.profile.integral() - 1.0).abs());
    s.gamma = Some(gamma);
    s
}

fn far_edge_check(u: &[f64], diag: &mut PdeDiagnostics) {
    let peak = u.iter().copied().fold(0.0, f64::max);
    let edge = u[u.len() - 2] / peak;
    diag.boundary_leak = diag.boundary_leak.max(edge);
}

/// `∂u/∂t = ½ u_xx + r u` on `x > γ(t)` with `∫_γ^∞ u = 1`.
pub fn dr_bm_solve(u0: &GridFunction, r: f64, cfg: &PdeConfig) -> Result<PdeRun> {
    cfg.validate(&u0.grid)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param(format!("rate r = {r} must be > 0")));
    }
    let (mut u, mut gamma, mut win) = prepare(u0)?;
    let stencil = Stencil::diffusion_drift(u0.grid.h, 0.0);
    let growth = (r * cfg.dt).exp();
    let mut scratch = Vec::new();
    let mut diag = PdeDiagnostics::default();
    let mut series = ProfileSeries::new();
    series.push(snapshot(0.0, win.grid, &u, gamma, &mut diag));
    for k in 1..=cfg.steps() {
        stencil.step(&mut u, cfg.dt, cfg.scheme, &mut scratch);
        u.iter_mut().for_each(|v| *v *= growth);
        gamma = truncate_to_unit_mass(&mut u, &win.grid)?;
        if cfg.is_snapshot(k) {
            far_edge_check(&u, &mut diag);
            series.push(snapshot(k as f64 * cfg.dt, win.grid, &u, gamma, &mut diag));
        }
        win.follow(&mut u, gamma);
    }
    if diag.boundary_leak > 1e-10 {
        diag.warn_once(format!("profile at the right window edge reached {:e} of its peak", diag.boundary_leak));
    }
    Ok(PdeRun { series, diagnostics: diag })
}

/// Discrete jump kernel: `taps[m]` is the weight landing `m − offset` cells away.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Kernel {
    pub taps: Vec<f64>,
    pub offset: usize,
}

impl Kernel {
    /// Densities are sampled as `h·ρ(mh)` over `|mh| ≤ reach`; atoms are split
    /// linearly between neighbouring nodes. Weights are rescaled to sum 1.
    pub fn discretize(rho: &JumpDistribution, h: f64) -> Result<Self> {
        rho.validate()?;
        let reach = match rho {
            JumpDistribution::None => return Err(Error::param("displacement law is 'none'")),
            JumpDistribution::Gaussian { mean, std } => mean.abs() + 10.0 * std,
            JumpDistribution::TwoSidedExponential { rate_up, rate_down, .. } => 40.0 / rate_up.min(*rate_down),
            JumpDistribution::PointMasses { atoms } => atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max) + h,
        };
        let m = (reach / h).ceil() as usize;
        let mut taps = vec![0.0; 2 * m + 1];
        match rho {
            JumpDistribution::PointMasses { atoms } => {
                for &(a, w) in atoms {
                    let mut s = a / h + m as f64;
                    if (s - s.round()).abs() < 1e-9 {
                        s = s.round();
                    }
                    let i = s.floor();
                    let f = s - i;
                    let i = i as usize;
                    taps[i] += w * (1.0 - f);
                    if f > 0.0 {
                        taps[i + 1] += w * f;
                    }
                }
            }
            _ => {
                for (k, t) in taps.iter_mut().enumerate() {
                    let y = (k as f64 - m as f64) * h;
                    *t = h * rho.density(y).unwrap_or(0.0);
                }
            }
        }
        let s: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= s);
        Ok(Self { taps, offset: m })
    }
}

/// `∂u/∂t = ∫ u(y) ρ(x − y) dy` on `x > γ(t)` with `∫_γ^∞ u = 1`; forward
/// Euler in time, direct convolution in space.
pub fn dr_rw_solve(u0: &GridFunction, rho: &JumpDistribution, cfg: &PdeConfig) -> Result<PdeRun> {
    cfg.validate_time()?;
    let mean = rho.mean();
    if mean.abs() > 1e-12 {
        return Err(Error::param(format!("displacement law must be symmetric, has mean {mean}")));
    }
    let kernel = Kernel::discretize(rho, u0.grid.h)?;
    let (mut u, mut gamma, mut win) = prepare(u0)?;
    if win.margin < kernel.offset as f64 * u0.grid.h {
        return Err(Error::domain(format!(
            "left margin {} is narrower than the kernel reach {}",
            win.margin,
            kernel.offset as f64 * u0.grid.h
        )));
    }
    let n = u.len();
    let h = u0.grid.h;
    let mut diag = PdeDiagnostics::default();
    let mut series = ProfileSeries::new();
    series.push(snapshot(0.0, win.grid, &u, gamma, &mut diag));
    let mut born = vec![0.0; n];
    for k in 1..=cfg.steps() {
        born.iter_mut().for_each(|b| *b = 0.0);
        let mut leaked = 0.0;
        let start = u.iter().position(|&v| v > 0.0).unwrap_or(n);
        for (i, &ui) in u.iter().enumerate().skip(start) {
            if ui == 0.0 {
                continue;
            }
            for (m, &w) in kernel.taps.iter().enumerate() {
                let target = i as isize + m as isize - kernel.offset as isize;
                if target < 0 || target >= n as isize {
                    leaked += ui * w;
                } else {
                    born[target as usize] += ui * w;
                }
            }
        }
        let leak_mass = cfg.dt * h * leaked;
        if leak_mass > LEAK_TOL {
            return Err(Error::domain(format!(
                "step {k}: {leak_mass:e} of new mass left the window; widen it"
            )));
        }
        u.iter_mut().zip(&born).for_each(|(v, b)| *v += cfg.dt * b);
        gamma = truncate_to_unit_mass(&mut u, &win.grid)?;
        if cfg.is_snapshot(k) {
            far_edge_check(&u, &mut diag);
            series.push(snapshot(k as f64 * cfg.dt, win.grid, &u, gamma, &mut diag));
        }
        win.follow(&mut u, gamma);
    }
    Ok(PdeRun { series, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::minimal_qsd;
    use crate::pde::{gamma_track, track_speed};

    #[test]
    fn truncation_hits_unit_mass() {
        let grid = Grid1D::spanning(0.0, 10.0, 0.1).unwrap();
        let mut u: Vec<f64> = grid.nodes().map(|x| if x > 2.0 && x < 6.0 { 0.3 } else { 0.0 }).collect();
        let before = trapezoid(&u, 0.1);
        assert!(before > 1.0);
        let gamma = truncate_to_unit_mass(&mut u, &grid).unwrap();
        assert!((trapezoid(&u, 0.1) - 1.0).abs() < 1e-12);
        assert!(u.iter().zip(grid.nodes()).all(|(v, x)| x >= gamma || *v == 0.0));
        let mut small = vec![0.0, 0.1, 0.1, 0.0];
        let g = Grid1D::new(0.0, 1.0, 4).unwrap();
        assert!(truncate_to_unit_mass(&mut small, &g).is_err());
    }

    #[test]
    fn bump_mass_constraint_every_step() {
        let grid = Grid1D::spanning(-5.0, 25.0, 0.05).unwrap();
        let u0 = GridFunction::from_fn(grid, |x| if x.abs() < 1.0 { 0.75 * (1.0 - x * x) } else { 0.0 }).unwrap();
        let u0 = u0.normalized().unwrap();
        let run = dr_bm_solve(&u0, 0.5, &PdeConfig::explicit_for(0.05, 3.0, 0.1)).unwrap();
        for s in run.series.iter() {
            assert!((s.profile.integral() - 1.0).abs() < 1e-8);
            let g = s.gamma.unwrap();
            assert!(s.profile.grid.nodes().zip(&s.profile.values).all(|(x, v)| x >= g || *v == 0.0));
        }
    }

    #[test]
    fn minimal_wave_moves_at_unit_speed() {
        let grid = Grid1D::spanning(-3.0, 40.0, 0.05).unwrap();
        let w = minimal_qsd(1.0).unwrap();
        let u0 = w.density_on(grid).unwrap();
        let run = dr_bm_solve(&u0, 0.5, &PdeConfig::explicit_for(0.05, 12.0, 0.5)).unwrap();
        let v = track_speed(&gamma_track(&run.series), (4.0, 12.0)).unwrap();
        assert!((v.value - 1.0).abs() < 0.02, "speed {v:?}");
        let last = run.series.last().unwrap();
        let g = last.gamma.unwrap();
        let err = (1..300)
            .map(|i| {
                let y = i as f64 * 0.05;
                (last.profile.interpolate(g + y) - w.density(y)).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 0.02, "profile error {err}");
    }

    #[test]
    fn kernel_discretization() {
        let k = Kernel::discretize(&JumpDistribution::PointMasses { atoms: vec![(-1.0, 0.5), (1.0, 0.5)] }, 0.1).unwrap();
        assert!((k.taps.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((k.taps[k.offset + 10] - 0.5).abs() < 1e-12);
        let k = Kernel::discretize(&JumpDistribution::centered_gaussian(1.0), 0.05).unwrap();
        let mean: f64 = k.taps.iter().enumerate().map(|(i, t)| t * (i as f64 - k.offset as f64) * 0.05).sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn random_walk_point_bump_step() {
        let grid = Grid1D::spanning(-15.0, 30.0, 0.05).unwrap();
        let u0 = GridFunction::from_fn(grid, |x| if x.abs() < 1e-9 { 20.0 } else { 0.0 }).unwrap();
        let gamma0 = -0.05;
        let cfg = PdeConfig::new(0.01, 0.01, 0.01);
        let run = dr_rw_solve(&u0, &JumpDistribution::centered_gaussian(1.0), &cfg).unwrap();
        let last = run.series.last().unwrap();
        assert!((last.profile.integral() - 1.0).abs() < 1e-12);
        assert!((run.series.snapshots[0].gamma.unwrap() - gamma0).abs() < 1e-9);
        assert!(last.gamma.unwrap() > gamma0);
    }

    #[test]
    fn random_walk_rejects_narrow_margin() {
        let grid = Grid1D::spanning(-2.0, 30.0, 0.05).unwrap();
        let u0 = GridFunction::from_fn(grid, |x| if x.abs() < 1e-9 { 20.0 } else { 0.0 }).unwrap();
        let cfg = PdeConfig::new(0.01, 0.1, 0.01);
        assert!(dr_rw_solve(&u0, &JumpDistribution::centered_gaussian(1.0), &cfg).is_err());
    }
}
