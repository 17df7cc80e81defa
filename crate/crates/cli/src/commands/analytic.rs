use serde::Deserialize;
use serde_json::json;

use qsdlab::chain::{eigentriple, total_variation, yaglom_limit, SubstochasticMatrix};
use qsdlab::closed_forms::{generator_residual, QsdBrownianFamily};
use qsdlab::{Grid1D, LaplaceExponent, LevyTriplet};

use super::{require, Outcome, ProcessSpec};
use crate::artifacts::{Artifacts, Check};
use crate::config::{ConfigError, ExperimentConfig};

fn zero() -> f64 {
    0.0
}

fn ten() -> f64 {
    10.0
}

fn default_points() -> usize {
    1001
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QsdEvalParams {
    c: f64,
    r: f64,
    #[serde(default = "zero")]
    x_min: f64,
    #[serde(default = "ten")]
    x_max: f64,
    #[serde(default = "default_points")]
    points: usize,
}

pub(crate) fn qsd_eval(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p: QsdEvalParams = cfg.params()?;
    require(p.points >= 2 && p.x_max > p.x_min, "need points >= 2 and x_max > x_min")?;
    let q = QsdBrownianFamily::new(p.c, p.r)?;
    let h = (p.x_max - p.x_min) / (p.points - 1) as f64;
    let grid = Grid1D::new(p.x_min, h, p.points)?;
    let rows: Vec<(f64, f64, f64)> = grid.nodes().map(|x| (x, q.density(x), q.cdf(x))).collect();
    let mut files = Artifacts::new();
    files.csv("qsd.csv", &["x", "w", "W"], &rows)?;

    let mut checks = Vec::new();
    let mut residual = serde_json::Value::Null;
    if p.x_min == 0.0 && p.points >= 7 {
        let res = generator_residual(&q.density_on(grid)?, &LevyTriplet::brownian(1.0)?, p.c, p.r)?;
        if let Some(ratio) = res.richardson_ratio {
            checks.push(Check::at_least("residual Richardson ratio", ratio, 3.5));
        }
        residual = json!({
            "max_interior": res.max_interior,
            "richardson_ratio": res.richardson_ratio,
            "coarse_grid_warning": res.coarse_grid_warning,
        });
    }
    let summary = json!({
        "c": p.c,
        "r": p.r,
        "is_minimal": q.is_minimal(),
        "mean": q.mean(),
        "mean_absorption_time": q.mean_absorption_time(),
        "tail_exponent": q.tail_exponent(),
        "generator_residual": residual,
    });
    Ok(Outcome { artifacts: files, summary, checks })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevyParams {
    #[serde(default)]
    process: ProcessSpec,
    #[serde(default)]
    c_grid: Vec<f64>,
    #[serde(default)]
    r_grid: Vec<f64>,
    theta_cap: Option<f64>,
}

pub(crate) fn levy_analyze(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p: LevyParams = cfg.params()?;
    require(!(p.c_grid.is_empty() && p.r_grid.is_empty()), "give c_grid and/or r_grid")?;
    let mut psi = LaplaceExponent::new(p.process.triplet()?)?;
    if let Some(cap) = p.theta_cap {
        psi = psi.with_theta_cap(cap);
    }
    let mut rows = Vec::new();
    let mut rates = Vec::new();
    let mut thetas = Vec::new();
    for &c in &p.c_grid {
        let d = psi.theta_c(c)?;
        rows.push(("c_to_r", c, d.theta_c, d.rate, d.at_boundary));
        rates.push(d.rate);
        thetas.push(d.theta_c);
    }
    let mut velocities = Vec::new();
    let mut round_trip = 0.0f64;
    for &r in &p.r_grid {
        let c = psi.min_velocity(r)?;
        let d = psi.theta_c(c)?;
        round_trip = round_trip.max((d.rate - r).abs());
        rows.push(("r_to_c", r, d.theta_c, c, d.at_boundary));
        velocities.push(c);
    }
    let mut files = Artifacts::new();
    files.csv("duality.csv", &["direction", "input", "theta", "output", "at_boundary"], &rows)?;
    let summary = json!({
        "process": p.process,
        "theta_star": if psi.theta_star().is_finite() { json!(psi.theta_star()) } else { json!("inf") },
        "mean": psi.triplet.mean(),
        "c_grid": p.c_grid,
        "rates": rates,
        "theta_c": thetas,
        "r_grid": p.r_grid,
        "velocities": velocities,
        "round_trip_max_error": round_trip,
    });
    let checks = if p.r_grid.is_empty() { vec![] } else { vec![Check::abs("round trip r -> c -> r", round_trip, 0.0, 1e-8)] };
    Ok(Outcome { artifacts: files, summary, checks })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BirthDeath {
    p_up: f64,
    p_down: f64,
    levels: usize,
}

fn default_chain_tol() -> f64 {
    1e-10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainParams {
    birth_death: Option<BirthDeath>,
    matrix: Option<Vec<Vec<f64>>>,
    /// Start states for the Yaglom limits; all states by default.
    starts: Option<Vec<usize>>,
    #[serde(default = "default_chain_tol")]
    tol: f64,
}

pub(crate) fn chain_qsd(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p: ChainParams = cfg.params()?;
    let m = match (&p.birth_death, &p.matrix) {
        (Some(b), None) => SubstochasticMatrix::birth_death(b.p_up, b.p_down, b.levels)?,
        (None, Some(rows)) => SubstochasticMatrix::new(rows.clone())?,
        _ => return Err(ConfigError("give exactly one of birth_death or matrix".into()).into()),
    };
    let eig = eigentriple(&m)?;
    let starts = p.starts.clone().unwrap_or_else(|| (0..m.n()).collect());
    require(starts.iter().all(|&s| s < m.n()), "start state out of range")?;
    let mut yaglom = Vec::new();
    let mut checks = Vec::new();
    for &s in &starts {
        let (limit, factor) = yaglom_limit(&m, s, p.tol)?;
        let tv = total_variation(&limit, &eig.nu);
        checks.push(Check::abs(&format!("start {s}: TV to nu"), tv, 0.0, 1e-8));
        checks.push(Check::abs(&format!("start {s}: survival factor"), factor, 1.0 / eig.r, 1e-8));
        yaglom.push((s, tv, factor));
    }
    let mut files = Artifacts::new();
    let rows: Vec<(usize, f64, f64)> = (0..m.n()).map(|i| (i, eig.nu[i], eig.beta[i])).collect();
    files.csv("nu.csv", &["state", "nu", "beta"], &rows)?;
    files.csv("yaglom.csv", &["start", "tv_to_nu", "survival_factor"], &yaglom)?;
    let summary = json!({
        "states": m.n(),
        "spectral_radius": 1.0 / eig.r,
        "R": eig.r,
        "nu": eig.nu,
        "beta": eig.beta,
        "max_tv": yaglom.iter().map(|y| y.1).fold(0.0, f64::max),
    });
    Ok(Outcome { artifacts: files, summary, checks })
}
