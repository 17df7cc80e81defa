//! One function per command. Each decodes its `[params]`, runs, and returns
//! in-memory artifacts plus a JSON summary and optional checks.

mod analytic;
mod macroscopic;
mod particles;
mod report;

use serde::{Deserialize, Serialize};

use qsdlab::closed_forms::{minimal_qsd, QsdBrownianFamily};
use qsdlab::series::ParticleSeries;
use qsdlab::{Grid1D, GridFunction, JumpDistribution, JumpLaw, LevyTriplet, RngStream};

use crate::artifacts::{Artifacts, Check};
use crate::config::{Command, ConfigError, ExperimentConfig};

pub struct Outcome {
    pub artifacts: Artifacts,
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
}

pub fn dispatch(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    match cfg.command {
        Command::FvSim => particles::fv_sim(cfg),
        Command::NbbmSim => particles::nbbm_sim(cfg),
        Command::NbrwSim => particles::nbrw_sim(cfg),
        Command::BbmMckean => particles::bbm_mckean(cfg),
        Command::KppSolve => macroscopic::kpp(cfg),
        Command::CondevSolve => macroscopic::condev(cfg),
        Command::DrSolve => macroscopic::dr_bm(cfg),
        Command::DrrwSolve => macroscopic::dr_rw(cfg),
        Command::QsdEval => analytic::qsd_eval(cfg),
        Command::LevyAnalyze => analytic::levy_analyze(cfg),
        Command::ChainQsd => analytic::chain_qsd(cfg),
        Command::CorrespondenceReport => report::correspondence(cfg),
    }
}

/// Stream offset for initial-condition draws, so they never share a stream
/// with the dynamics of replica `k` (which uses stream `k`).
const INIT_STREAM: u64 = 1 << 32;

pub(crate) fn init_rng(seed: u64, replica: usize) -> RngStream {
    RngStream::new(seed, INIT_STREAM + replica as u64)
}

/// Initial particle positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParticleInit {
    Point {
        #[serde(default)]
        x: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Exponential {
        rate: f64,
        #[serde(default)]
        shift: f64,
    },
    /// Draws from the QSD with absorption rate `r` (drift `c` defaults to the
    /// command's drift).
    Qsd {
        c: Option<f64>,
        r: f64,
    },
    Minimal {
        c: Option<f64>,
    },
    Positions {
        values: Vec<f64>,
    },
}

impl ParticleInit {
    pub fn sample(&self, rng: &mut RngStream, n: usize, c_default: f64) -> anyhow::Result<Vec<f64>> {
        Ok(match self {
            ParticleInit::Point { x } => vec![*x; n],
            ParticleInit::Uniform { lo, hi } => {
                if !(hi > lo) {
                    return Err(ConfigError(format!("uniform init needs lo < hi, got [{lo}, {hi}]")).into());
                }
                (0..n).map(|_| lo + (hi - lo) * rng.uniform()).collect()
            }
            ParticleInit::Exponential { rate, shift } => {
                if !(*rate > 0.0) {
                    return Err(ConfigError(format!("exponential init needs rate > 0, got {rate}")).into());
                }
                (0..n).map(|_| shift + rng.exponential(*rate)).collect()
            }
            ParticleInit::Qsd { c, r } => QsdBrownianFamily::new(c.unwrap_or(c_default), *r)?.sample(rng, n),
            ParticleInit::Minimal { c } => minimal_qsd(c.unwrap_or(c_default))?.sample(rng, n),
            ParticleInit::Positions { values } => {
                if values.len() != n {
                    return Err(ConfigError(format!("{} initial positions given for N = {n}", values.len())).into());
                }
                values.clone()
            }
        })
    }
}

/// Initial profile on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileInit {
    /// `1{x > at}`, with value ½ at the jump.
    Heaviside {
        #[serde(default)]
        at: f64,
    },
    Logistic {
        #[serde(default)]
        at: f64,
        width: f64,
    },
    /// QSD density (normalized), shifted to start at `shift`.
    Qsd {
        c: Option<f64>,
        r: f64,
        #[serde(default)]
        shift: f64,
    },
    Minimal {
        c: Option<f64>,
        #[serde(default)]
        shift: f64,
    },
    /// `e^{−rate (x − shift)}` for `x > shift`, zero below.
    Exponential {
        rate: f64,
        #[serde(default)]
        shift: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl ProfileInit {
    pub fn build(&self, grid: Grid1D, c_default: f64) -> anyhow::Result<GridFunction> {
        Ok(GridFunction::from_fn(grid, self.function(c_default)?)?)
    }

    pub fn function(&self, c_default: f64) -> anyhow::Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        Ok(match self {
            ProfileInit::Heaviside { at } => {
                let at = *at;
                Box::new(move |x| if x > at { 1.0 } else if x == at { 0.5 } else { 0.0 })
            }
            ProfileInit::Logistic { at, width } => {
                if !(*width > 0.0) {
                    return Err(ConfigError("logistic width must be > 0".into()).into());
                }
                let (at, w) = (*at, *width);
                Box::new(move |x| 1.0 / (1.0 + (-(x - at) / w).exp()))
            }
            ProfileInit::Qsd { c, r, shift } => {
                let q = QsdBrownianFamily::new(c.unwrap_or(c_default), *r)?;
                let s = *shift;
                Box::new(move |x| if x > s { q.density(x - s) } else { 0.0 })
            }
            ProfileInit::Minimal { c, shift } => {
                let q = minimal_qsd(c.unwrap_or(c_default))?;
                let s = *shift;
                Box::new(move |x| if x > s { q.density(x - s) } else { 0.0 })
            }
            ProfileInit::Exponential { rate, shift } => {
                if !(*rate > 0.0) {
                    return Err(ConfigError(format!("exponential profile needs rate > 0, got {rate}")).into());
                }
                let (a, s) = (*rate, *shift);
                Box::new(move |x| if x > s { (-a * (x - s)).exp() } else { 0.0 })
            }
            ProfileInit::Uniform { lo, hi } => {
                if !(hi > lo) {
                    return Err(ConfigError(format!("uniform profile needs lo < hi, got [{lo}, {hi}]")).into());
                }
                let (lo, hi) = (*lo, *hi);
                Box::new(move |x| if x >= lo && x <= hi { 1.0 } else { 0.0 })
            }
        })
    }
}

/// Motion of a single particle: `σ W_t` plus optional compound-Poisson jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    #[serde(default = "one")]
    pub sigma: f64,
    pub jumps: Option<JumpSpec>,
    /// Extra drift, added after centering.
    #[serde(default)]
    pub drift: f64,
    /// Choose the drift so that the path has mean zero before `drift` is added.
    #[serde(default = "yes")]
    pub centered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub distribution: JumpDistribution,
    pub intensity: f64,
}

impl Default for ProcessSpec {
    fn default() -> Self {
        Self { sigma: 1.0, jumps: None, drift: 0.0, centered: true }
    }
}

impl ProcessSpec {
    pub fn triplet(&self) -> qsdlab::Result<LevyTriplet> {
        let jumps = match &self.jumps {
            Some(j) => JumpLaw::new(j.distribution.clone(), j.intensity)?,
            None => JumpLaw::none(),
        };
        let base = if self.centered { -jumps.intensity * jumps.distribution.mean() } else { 0.0 };
        LevyTriplet::raw(base + self.drift, self.sigma, jumps)
    }

    /// Standard Brownian motion, for which the closed-form QSDs apply.
    pub fn is_standard_brownian(&self) -> bool {
        self.sigma == 1.0 && self.jumps.is_none() && self.drift == 0.0
    }
}

pub(crate) fn one() -> f64 {
    1.0
}

pub(crate) fn yes() -> bool {
    true
}

pub(crate) fn require(ok: bool, msg: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError(msg.into()))
    }
}

/// `replica,t,n,min,median,max,events` rows of several particle series.
pub(crate) fn snapshot_rows(series: &[ParticleSeries]) -> Vec<(usize, f64, usize, f64, f64, f64, u64)> {
    series
        .iter()
        .enumerate()
        .flat_map(|(k, s)| s.iter().map(move |p| (k, p.t, p.n, p.min, p.median, p.max, p.events)))
        .collect()
}

/// `replica,t,x` rows for every snapshot that kept positions.
pub(crate) fn position_rows(series: &[ParticleSeries]) -> Vec<(usize, f64, f64)> {
    series
        .iter()
        .enumerate()
        .flat_map(|(k, s)| {
            s.iter()
                .filter_map(|p| p.positions.as_ref().map(|xs| (p.t, xs)))
                .flat_map(move |(t, xs)| xs.iter().map(move |&x| (k, t, x)))
        })
        .collect()
}

pub(crate) fn profile_header(value: &'static str) -> [&'static str; 3] {
    ["t", "x", value]
}
