use crate::error::{Error, Result};
use crate::grid::GridFunction;

use super::{PdeConfig, PdeDiagnostics, PdeRun, ProfileSeries, ProfileSnapshot, Stencil};

const LEAK_TOL: f64 = 1e-6;

/// `∂v/∂t = ½ v_xx + r(v² − v)` with both edges pinned to their initial
/// values; after every step values are clipped to `[0, 1]`.
pub fn kpp_solve(v0: &GridFunction, r: f64, cfg: &PdeConfig) -> Result<PdeRun> {
    cfg.validate(&v0.grid)?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::param(format!("rate r = {r} must be >= 0")));
    }
    if v0.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::param("initial profile must take values in [0, 1]"));
    }
    let mut diag = PdeDiagnostics::default();
    if v0.values.windows(2).any(|w| w[1] < w[0]) {
        diag.warn_once("initial profile is not monotone nondecreasing".into());
    }
    let grid = v0.grid;
    let n = grid.n;
    let stencil = Stencil::diffusion_drift(grid.h, 0.0);
    let mut v = v0.values.clone();
    let (pin_lo, pin_hi) = (v[0], v[n - 1]);
    let mut scratch = Vec::with_capacity(n);
    let mut series = ProfileSeries::new();
    series.push(ProfileSnapshot::plain(0.0, v0.clone()));
    let steps = cfg.steps();
    for k in 1..=steps {
        stencil.step(&mut v, cfg.dt, cfg.scheme, &mut scratch);
        for x in &mut v[1..n - 1] {
            let y = *x + cfg.dt * r * (*x * *x - *x);
            let clipped = y.clamp(0.0, 1.0);
            diag.max_clip = diag.max_clip.max((clipped - y).abs());
            *x = clipped;
        }
        let leak = (v[1] - pin_lo).abs().max((v[n - 2] - pin_hi).abs());
        diag.boundary_leak = diag.boundary_leak.max(leak);
        if cfg.is_snapshot(k) {
            series.push(ProfileSnapshot::plain(k as f64 * cfg.dt, GridFunction { grid, values: v.clone() }));
        }
    }
    if diag.boundary_leak > LEAK_TOL {
        diag.warn_once(format!(
            "profile next to a pinned edge drifted by {:e} (> {LEAK_TOL:e}); widen the domain",
            diag.boundary_leak
        ));
    }
    Ok(PdeRun { series, diagnostics: diag })
}
