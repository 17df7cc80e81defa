use serde::Deserialize;
use serde_json::json;

use qsdlab::branching::{front_velocity, mckean_mc_multi, nbbm_run, nbrw_run, FrontStatistic, SelectionConfig};
use qsdlab::closed_forms::qsd_cdf;
use qsdlab::ensemble::replicas;
use qsdlab::fleming_viot::{absorption_rate_estimate, fv_run_with, FvConfig};
use qsdlab::kernels::split_seed;
use qsdlab::levy::birth_walk_minimal_speed;
use qsdlab::pde::{kpp_solve, PdeConfig};
use qsdlab::series::ParticleSeries;
use qsdlab::stats::ks_to_cdf;
use qsdlab::{EstimateWithCI, Grid1D, JumpDistribution, LaplaceExponent, RngStream};

use super::{init_rng, position_rows, require, snapshot_rows, yes, Outcome, ParticleInit, ProcessSpec, ProfileInit};
use crate::artifacts::{Artifacts, Check};
use crate::config::ExperimentConfig;

const SNAPSHOT_HEADER: [&str; 7] = ["replica", "t", "n", "min", "median", "max", "events"];
const POSITION_HEADER: [&str; 3] = ["replica", "t", "x"];

fn default_fv_dt() -> f64 {
    1e-3
}

fn default_fv_every() -> f64 {
    0.1
}

fn default_every() -> f64 {
    1.0
}

fn default_replicas() -> usize {
    1
}

fn default_uniform() -> ParticleInit {
    ParticleInit::Uniform { lo: 0.0, hi: 1.0 }
}

fn default_point() -> ParticleInit {
    ParticleInit::Point { x: 0.0 }
}

fn default_rate_tol() -> f64 {
    0.1
}

fn default_ks_tol() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FvParams {
    c: f64,
    n: usize,
    #[serde(default = "default_fv_dt")]
    dt: f64,
    t_max: f64,
    #[serde(default = "yes")]
    bridge_correction: bool,
    #[serde(default)]
    process: ProcessSpec,
    #[serde(default = "default_uniform")]
    init: ParticleInit,
    #[serde(default = "default_fv_every")]
    snapshot_every: f64,
    burn_in: Option<f64>,
    #[serde(default)]
    dump_positions: bool,
    #[serde(default = "default_replicas")]
    replicas: usize,
    /// Absorption rate of the QSD used as the KS reference (Brownian only);
    /// defaults to the maximal rate `c²/2`.
    reference_r: Option<f64>,
    #[serde(default = "default_rate_tol")]
    rate_tolerance: f64,
    #[serde(default = "default_ks_tol")]
    ks_tolerance: f64,
}

pub(crate) struct FvReplica {
    pub series: ParticleSeries,
    pub rate: EstimateWithCI,
    pub final_ks: Option<f64>,
}

/// Runs the configured replicas; replica `k` uses stream `k` for the
/// dynamics and a separate stream for its initial positions.
pub(crate) fn run_fv(
    seed: u64,
    cfg: &FvConfig,
    init: &ParticleInit,
    count: usize,
    burn_in: f64,
    reference: Option<(f64, f64)>,
) -> anyhow::Result<Vec<FvReplica>> {
    let inits: Vec<Vec<f64>> =
        (0..count).map(|k| init.sample(&mut init_rng(seed, k), cfg.n, cfg.c)).collect::<anyhow::Result<_>>()?;
    let runs = replicas(seed, count, |k, rng| {
        let series = fv_run_with(cfg, &inits[k], rng)?;
        let rate = absorption_rate_estimate(&series, burn_in)?;
        let final_ks = match reference {
            Some((c, r)) => {
                let last = series.last().and_then(|s| s.positions.as_ref()).expect("final snapshot keeps positions");
                let cdf = |x: f64| qsd_cdf(c, r, x).unwrap_or(f64::NAN);
                Some(ks_to_cdf(last, cdf)?)
            }
            None => None,
        };
        Ok(FvReplica { series, rate, final_ks })
    })?;
    Ok(runs)
}

pub(crate) fn fv_sim(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p: FvParams = cfg.params()?;
    require(p.snapshot_every > 0.0, "snapshot_every must be > 0")?;
    require(p.replicas >= 1, "replicas must be >= 1")?;
    let burn_in = p.burn_in.unwrap_or(0.2 * p.t_max);
    require(burn_in >= 0.0 && burn_in < p.t_max, "burn_in must lie in [0, t_max)")?;
    let triplet = p.process.triplet()?;
    let fv = FvConfig {
        triplet: triplet.clone(),
        c: p.c,
        n: p.n,
        dt: p.dt,
        t_max: p.t_max,
        bridge_correction: p.bridge_correction,
        seed: cfg.seed,
        stride: ((p.snapshot_every / p.dt).round() as usize).max(1),
        keep_positions: p.dump_positions,
    };
    fv.validate()?;
    let predicted = LaplaceExponent::new(triplet)?.max_absorption_rate(p.c)?;
    let reference = p.process.is_standard_brownian().then(|| (p.c, p.reference_r.unwrap_or(predicted)));
    let runs = run_fv(cfg.seed, &fv, &p.init, p.replicas, burn_in, reference)?;

    let series: Vec<ParticleSeries> = runs.iter().map(|r| r.series.clone()).collect();
    let mut files = Artifacts::new();
    files.csv("snapshots.csv", &SNAPSHOT_HEADER, snapshot_rows(&series))?;
    files.csv("positions.csv", &POSITION_HEADER, position_rows(&series))?;

    let mut checks = Vec::new();
    for (k, r) in runs.iter().enumerate() {
        checks.push(Check::rel(&format!("replica {k}: absorption rate"), r.rate.value, predicted, p.rate_tolerance));
        if let (Some(ks), Some((_, rr))) = (r.final_ks, reference) {
            checks.push(Check::at_most(&format!("replica {k}: final KS to QSD(r = {rr})"), ks, 0.0, p.ks_tolerance));
        }
    }
    let summary = json!({
        "c": p.c,
        "n": p.n,
        "dt": p.dt,
        "t_max": p.t_max,
        "burn_in": burn_in,
        "predicted_rate": predicted,
        "reference_qsd": reference.map(|(c, r)| json!({ "c": c, "r": r })),
        "replicas": runs.iter().enumerate().map(|(k, r)| json!({
            "replica": k,
            "absorption_rate": r.rate,
            "final_ks": r.final_ks,
            "resamplings": r.series.last().map(|s| s.events),
        })).collect::<Vec<_>>(),
    });
    Ok(Outcome { artifacts: files, summary, checks })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NbbmParams {
    n: usize,
    r: f64,
    t_max: f64,
    #[serde(default = "default_every")]
    snapshot_every: f64,
    burn_in: Option<f64>,
    #[serde(default = "default_point")]
    init: ParticleInit,
    /// Keep positions every this many snapshots (0: final only).
    #[serde(default)]
    dump_stride: usize,
    #[serde(default = "default_replicas")]
    replicas: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NbrwParams {
    n: usize,
    displacement: JumpDistribution,
    t_max: f64,
    #[serde(default = "default_every")]
    snapshot_every: f64,
    burn_in: Option<f64>,
    #[serde(default = "default_point")]
    init: ParticleInit,
    #[serde(default)]
    dump_stride: usize,
    #[serde(default = "default_replicas")]
    replicas: usize,
}

pub(crate) struct SelectionReplica {
    pub series: ParticleSeries,
    pub velocity: [EstimateWithCI; 3],
}

const STATISTICS: [FrontStatistic; 3] = [FrontStatistic::Min, FrontStatistic::Median, FrontStatistic::Max];

/// Replica `k` runs with seed `split_seed(seed, k)`.
pub(crate) fn run_selection(
    seed: u64,
    base: &SelectionConfig,
    init: &ParticleInit,
    count: usize,
    burn_in: f64,
    walk: bool,
) -> anyhow::Result<Vec<SelectionReplica>> {
    let inits: Vec<Vec<f64>> =
        (0..count).map(|k| init.sample(&mut init_rng(seed, k), base.n, 0.0)).collect::<anyhow::Result<_>>()?;
    Ok(replicas(seed, count, |k, _| {
        let cfg = SelectionConfig { seed: split_seed(seed, k as u64), ..base.clone() };
        let series = if walk { nbrw_run(&cfg, &inits[k])? } else { nbbm_run(&cfg, &inits[k])? };
        let v = |s| front_velocity(&series, burn_in, s);
        let velocity = [v(STATISTICS[0])?, v(STATISTICS[1])?, v(STATISTICS[2])?];
        Ok(SelectionReplica { series, velocity })
    })?)
}

fn velocity_json(v: &[EstimateWithCI; 3]) -> serde_json::Value {
    json!({ "min": v[0], "median": v[1], "max": v[2] })
}

fn selection_outcome(runs: &[SelectionReplica], mut summary: serde_json::Value, c_star: f64) -> anyhow::Result<Outcome> {
    let series: Vec<ParticleSeries> = runs.iter().map(|r| r.series.clone()).collect();
    let mut files = Artifacts::new();
    files.csv("snapshots.csv", &SNAPSHOT_HEADER, snapshot_rows(&series))?;
    files.csv("positions.csv", &POSITION_HEADER, position_rows(&series))?;
    let checks = runs
        .iter()
        .enumerate()
        .map(|(k, r)| Check::at_most(&format!("replica {k}: median velocity below c*"), r.velocity[1].value, c_star, 0.02 * c_star))
        .collect();
    summary["replicas"] = runs
        .iter()
        .enumerate()
        .map(|(k, r)| json!({ "replica": k, "velocity": velocity_json(&r.velocity) }))
        .collect();
    Ok(Outcome { artifacts: files, summary, checks })
}

fn selection_base(n: usize, r: f64, every: f64, t_max: f64, dump_stride: usize, burn_in: Option<f64>) -> anyhow::Result<(SelectionConfig, f64)> {
    require(every > 0.0, "snapshot_every must be > 0")?;
    let burn_in = burn_in.unwrap_or(0.2 * t_max);
    require(burn_in >= 0.0 && burn_in < t_max, "burn_in must lie in [0, t_max)")?;
    let mut base = SelectionConfig::nbbm(n, r, t_max, 0);
    base.dt = every;
    base.dump_stride = dump_stride;
    Ok((base, burn_in))
}

pub(crate) fn nbbm_sim(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p: NbbmParams = cfg.params()?;
    require(p.replicas >= 1, "replicas must be >= 1")?;
    let (base, burn_in) = selection_base(p.n, p.r, p.snapshot_every, p.t_max, p.dump_stride, p.burn_in)?;
    let runs = run_selection(cfg.seed, &base, &p.init, p.replicas, burn_in, false)?;
    let c_star = (2.0 * p.r).sqrt();
    let ln_n = (p.n as f64).ln();
    let shape_ks: Vec<Option<f64>> = runs
        .iter()
        .map(|run| {
            let xs = run.series.last()?.positions.as_ref()?;
            let rel: Vec<f64> = xs.iter().map(|x| x - xs[0]).collect();
            ks_to_cdf(&rel, |x| qsd_cdf(c_star, p.r, x).unwrap_or(f64::NAN)).ok()
        })
        .collect();
    let summary = json!({
        "n": p.n,
        "r": p.r,
        "t_max": p.t_max,
        "burn_in": burn_in,
        "c_star": c_star,
        "asymptotic_velocity": c_star * (1.0 - std::f64::consts::PI.powi(2) / (2.0 * ln_n * ln_n)),
        "final_shape_ks": shape_ks,
    });
    selection_outcome(&runs, summary, c_star)
}

pub(crate) fn nbrw_sim(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p: NbrwParams = cfg.params()?;
    require(p.replicas >= 1, "replicas must be >= 1")?;
    let (mut base, burn_in) = selection_base(p.n, 1.0, p.snapshot_every, p.t_max, p.dump_stride, p.burn_in)?;
    base.displacement = p.displacement.clone();
    let (theta, c_star) = birth_walk_minimal_speed(&p.displacement)?;
    let runs = run_selection(cfg.seed, &base, &p.init, p.replicas, burn_in, true)?;
    let summary = json!({
        "n": p.n,
        "displacement": p.displacement,
        "t_max": p.t_max,
        "burn_in": burn_in,
        "c_star": c_star,
        "theta_star": theta,
    });
    selection_outcome(&runs, summary, c_star)
}

fn default_xs() -> Vec<f64> {
    vec![-2.0, 0.0, 2.0]
}

fn default_heaviside() -> ProfileInit {
    ProfileInit::Heaviside { at: 0.0 }
}

fn default_mckean_h() -> f64 {
    0.02
}

fn default_half_width() -> f64 {
    40.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct McKeanParams {
    r: f64,
    t: f64,
    #[serde(default = "default_xs")]
    xs: Vec<f64>,
    replicas: usize,
    #[serde(default = "default_heaviside")]
    v0: ProfileInit,
    /// Spacing of the KPP comparison solve; 0 skips it.
    #[serde(default = "default_mckean_h")]
    pde_h: f64,
    #[serde(default = "default_half_width")]
    pde_half_width: f64,
}

pub(crate) fn bbm_mckean(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let p: McKeanParams = cfg.params()?;
    require(!p.xs.is_empty(), "xs must not be empty")?;
    let v0 = p.v0.function(0.0)?;
    let mut rng = RngStream::new(cfg.seed, 0);
    let mc = mckean_mc_multi(&mut rng, &*v0, p.r, p.t, &p.xs, p.replicas)?;
    let pde: Option<Vec<f64>> = if p.pde_h > 0.0 {
        let lo = p.xs.iter().copied().fold(f64::INFINITY, f64::min) - p.pde_half_width;
        let hi = p.xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + p.pde_half_width;
        let grid = Grid1D::spanning(lo, hi, p.pde_h)?;
        let start = p.v0.build(grid, 0.0)?;
        let run = kpp_solve(&start, p.r, &PdeConfig::explicit_for(p.pde_h, p.t, p.t.max(1e-12)))?;
        let last = &run.series.last().expect("final snapshot").profile;
        Some(p.xs.iter().map(|&x| last.interpolate(x)).collect())
    } else {
        None
    };
    let rows: Vec<(f64, f64, f64, Option<f64>, Option<f64>)> = p
        .xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let v = pde.as_ref().map(|v| v[i]);
            let z = v.map(|v| if mc[i].stderr > 0.0 { (mc[i].value - v) / mc[i].stderr } else { f64::NAN });
            (x, mc[i].value, mc[i].stderr, v, z)
        })
        .collect();
    let checks = rows
        .iter()
        .filter_map(|&(x, m, se, v, _)| v.map(|v| Check::abs(&format!("McKean vs KPP at x = {x}"), m, v, 3.0 * se)))
        .collect();
    let mut files = Artifacts::new();
    files.csv("mckean.csv", &["x", "mc", "stderr", "kpp", "z"], &rows)?;
    let summary = json!({ "r": p.r, "t": p.t, "replicas": p.replicas, "points": rows.iter().map(|r| json!({
        "x": r.0, "mc": r.1, "stderr": r.2, "kpp": r.3, "z": r.4,
    })).collect::<Vec<_>>() });
    Ok(Outcome { artifacts: files, summary, checks })
}
