//! Side-by-side check of the two selection problems at matched parameters:
//! Fleming–Viot at drift `c` against N-BBM at branching rate `r = c²/2`,
//! both compared with the same minimal QSD.

use std::fmt::Write as _;

use serde::Deserialize;
use serde_json::json;

use qsdlab::branching::{front_velocity, nbbm_run, FrontStatistic, SelectionConfig};
use qsdlab::closed_forms::{generator_residual, minimal_qsd};
use qsdlab::fleming_viot::{absorption_rate_estimate, fv_run, FvConfig};
use qsdlab::kernels::split_seed;
use qsdlab::stats::ks_to_cdf;
use qsdlab::{Grid1D, LaplaceExponent, LevyTriplet};

use super::{init_rng, position_rows, require, snapshot_rows, Outcome, ParticleInit};
use crate::artifacts::{Artifacts, Check};
use crate::config::{ConfigError, ExperimentConfig};

fn default_n() -> usize {
    1000
}

fn default_t() -> f64 {
    50.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_rate_tol() -> f64 {
    0.1
}

fn default_speed_tol() -> f64 {
    0.02
}

fn default_ks_tol() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportParams {
    /// Give exactly one of `c` and `r`; the other follows from `r = c²/2`.
    c: Option<f64>,
    r: Option<f64>,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_t")]
    t_max: f64,
    #[serde(default = "default_dt")]
    dt: f64,
    burn_in: Option<f64>,
    /// Population of the N-BBM run; defaults to `n`.
    nbbm_n: Option<usize>,
    #[serde(default = "default_rate_tol")]
    rate_tolerance: f64,
    #[serde(default = "default_speed_tol")]
    speed_tolerance: f64,
    #[serde(default = "default_ks_tol")]
    ks_tolerance: f64,
}

pub(crate) fn correspondence(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p: ReportParams = cfg.params()?;
    let (c, r) = match (p.c, p.r) {
        (Some(c), None) => (c, 0.5 * c * c),
        (None, Some(r)) => ((2.0 * r).sqrt(), r),
        _ => return Err(ConfigError("give exactly one of c and r".into()).into()),
    };
    require(c > 0.0 && c.is_finite(), "c must be > 0")?;
    require(p.t_max > 0.0, "t_max must be > 0")?;
    let burn_in = p.burn_in.unwrap_or(0.2 * p.t_max);
    let w = minimal_qsd(c)?;
    let cdf = |x: f64| w.cdf(x);
    let mut checks = Vec::new();
    let mut files = Artifacts::new();

    // Duality through the Laplace exponent, against the closed forms.
    let psi = LaplaceExponent::new(LevyTriplet::brownian(1.0)?)?;
    let rate_num = psi.max_absorption_rate(c)?;
    let speed_num = psi.min_velocity(r)?;
    checks.push(Check::abs("max absorption rate equals c^2/2", rate_num, r, 1e-8));
    checks.push(Check::abs("min velocity equals sqrt(2r)", speed_num, c, 1e-8));

    // Traveling-wave residual of the closed-form profile.
    let h = 0.01 / c;
    let grid = Grid1D::spanning(0.0, 30.0 / c, h)?;
    let residual = generator_residual(&w.density_on(grid)?, &LevyTriplet::brownian(1.0)?, c, r)?;
    match residual.richardson_ratio {
        Some(ratio) => checks.push(Check::at_least("wave residual Richardson ratio", ratio, 3.5)),
        None => checks.push(Check::failed("wave residual Richardson ratio", "grid too coarse".into())),
    }

    // Fleming–Viot at drift c.
    let fv = (|| -> anyhow::Result<_> {
        let mut fv_cfg = FvConfig::brownian(c, p.n, p.dt, p.t_max, cfg.seed)?;
        fv_cfg.stride = ((p.t_max / 100.0 / p.dt).round() as usize).max(1);
        let init = ParticleInit::Uniform { lo: 0.0, hi: 1.0 }.sample(&mut init_rng(cfg.seed, 0), p.n, c)?;
        let series = fv_run(&fv_cfg, &init)?;
        let rate = absorption_rate_estimate(&series, burn_in)?;
        let last = series.last().and_then(|s| s.positions.clone()).unwrap_or_default();
        let ks = ks_to_cdf(&last, cdf)?;
        Ok((series, rate, ks))
    })();
    let fv_json = match &fv {
        Ok((series, rate, ks)) => {
            checks.push(Check::rel("FV absorption rate vs r", rate.value, r, p.rate_tolerance));
            checks.push(Check::at_most("FV final KS to minimal QSD", *ks, 0.0, p.ks_tolerance));
            let s = std::slice::from_ref(series);
            files.csv("fv_snapshots.csv", &["replica", "t", "n", "min", "median", "max", "events"], snapshot_rows(s))?;
            files.csv("fv_positions.csv", &["replica", "t", "x"], position_rows(s))?;
            json!({ "absorption_rate": rate, "final_ks": ks })
        }
        Err(e) => {
            checks.push(Check::failed("FV absorption rate vs r", e.to_string()));
            checks.push(Check::failed("FV final KS to minimal QSD", e.to_string()));
            json!({ "error": e.to_string() })
        }
    };

    // N-BBM at rate r.
    let nb_n = p.nbbm_n.unwrap_or(p.n);
    let nb = (|| -> anyhow::Result<_> {
        let mut nb_cfg = SelectionConfig::nbbm(nb_n, r, p.t_max, split_seed(cfg.seed, 1));
        nb_cfg.dt = p.t_max / 50.0;
        let series = nbbm_run(&nb_cfg, &vec![0.0; nb_n])?;
        let v = front_velocity(&series, burn_in, FrontStatistic::Median)?;
        let last = series.last().and_then(|s| s.positions.clone()).unwrap_or_default();
        let rel: Vec<f64> = last.iter().map(|x| x - last[0]).collect();
        let ks = ks_to_cdf(&rel, cdf)?;
        Ok((series, v, ks))
    })();
    let nb_json = match &nb {
        Ok((series, v, ks)) => {
            checks.push(Check::at_most("N-BBM velocity at most c", v.value, c, p.speed_tolerance * c));
            checks.push(Check::at_most("N-BBM shape KS to minimal QSD", *ks, 0.0, p.ks_tolerance));
            let s = std::slice::from_ref(series);
            files.csv("nbbm_snapshots.csv", &["replica", "t", "n", "min", "median", "max", "events"], snapshot_rows(s))?;
            json!({ "n": nb_n, "velocity": v, "final_shape_ks": ks })
        }
        Err(e) => {
            checks.push(Check::failed("N-BBM velocity at most c", e.to_string()));
            checks.push(Check::failed("N-BBM shape KS to minimal QSD", e.to_string()));
            json!({ "error": e.to_string() })
        }
    };

    let report = json!({
        "c": c,
        "r": r,
        "n": p.n,
        "t_max": p.t_max,
        "dt": p.dt,
        "burn_in": burn_in,
        "closed_form": {
            "density": "c^2 x exp(-c x)",
            "mean": w.mean(),
            "mean_absorption_time": w.mean_absorption_time(),
            "cdf_at_mean": w.cdf(w.mean()),
        },
        "duality": { "max_absorption_rate": rate_num, "min_velocity": speed_num },
        "wave_residual": {
            "max_interior": residual.max_interior,
            "richardson_ratio": residual.richardson_ratio,
        },
        "fleming_viot": fv_json,
        "nbbm": nb_json,
        "checks": checks,
    });
    files.json("report.json", &report)?;
    files.text("report.md", markdown(c, r, p.n, p.t_max, &checks));
    Ok(Outcome { artifacts: files, summary: report, checks })
}

fn markdown(c: f64, r: f64, n: usize, t: f64, checks: &[Check]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Correspondence report\n");
    let _ = writeln!(s, "c = {c}, r = {r}, N = {n}, T = {t}\n");
    let _ = writeln!(s, "| check | value | target | tolerance | result |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for ch in checks {
        let result = if ch.pass { "pass".to_string() } else { format!("FAIL{}", ch.note.as_ref().map(|n| format!(" ({n})")).unwrap_or_default()) };
        let _ = writeln!(s, "| {} | {:.6} | {:.6} | {:.3e} | {} |", ch.name, ch.value, ch.target, ch.tolerance, result);
    }
    s
}
