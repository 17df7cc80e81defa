//! Branching Brownian motion, N-BBM and N-BRW.
//!
//! All three simulators are event driven. Between branch or birth events,
//! every particle moves by an exact Gaussian increment (BBM, N-BBM) or stays
//! put (N-BRW), so the only approximation is Monte Carlo error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{JumpDistribution, RngStream};
use crate::series::{ParticleSeries, ParticleSnapshot};
use crate::stats::{batch_means_regression, ols, EstimateWithCI};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbmState {
    pub positions: Vec<f64>,
    pub t: f64,
}

impl BbmState {
    pub fn count(&self) -> usize {
        self.positions.len()
    }
}

fn advance_all(positions: &mut [f64], dt: f64, rng: &mut RngStream) {
    if dt <= 0.0 {
        return;
    }
    let s = dt.sqrt();
    for x in positions.iter_mut() {
        *x += s * rng.standard_normal();
    }
}

/// Binary branching Brownian motion from one particle at the origin.
pub fn bbm_run(rng: &mut RngStream, r: f64, t_max: f64, cap: usize) -> Result<BbmState> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::param(format!("branch rate r = {r} must be >= 0")));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::param(format!("t_max = {t_max} must be >= 0")));
    }
    if (r * t_max).exp() > cap as f64 {
        return Err(Error::param(format!("expected population e^(r t) exceeds cap {cap}")));
    }
    let mut state = BbmState { positions: vec![0.0], t: 0.0 };
    loop {
        let wait = if r > 0.0 { rng.exponential(r * state.count() as f64) } else { f64::INFINITY };
        if state.t + wait >= t_max {
            advance_all(&mut state.positions, t_max - state.t, rng);
            state.t = t_max;
            return Ok(state);
        }
        advance_all(&mut state.positions, wait, rng);
        state.t += wait;
        let parent = rng.index(state.count());
        state.positions.push(state.positions[parent]);
        if state.count() > cap {
            return Err(Error::Growth { cap, t: state.t });
        }
    }
}

/// Monte Carlo estimate of `E ∏ v0(ξ_t(i) + x)` for each `x` in `xs`, sharing
/// the BBM samples across `xs`.
pub fn mckean_mc_multi(
    rng: &mut RngStream,
    v0: &dyn Fn(f64) -> f64,
    r: f64,
    t: f64,
    xs: &[f64],
    reps: usize,
) -> Result<Vec<EstimateWithCI>> {
    if reps == 0 {
        return Err(Error::param("reps must be >= 1"));
    }
    let cap = 1_000_000.max(((r * t).exp() * 100.0) as usize);
    let mut sum = vec![0.0; xs.len()];
    let mut sum_sq = vec![0.0; xs.len()];
    for _ in 0..reps {
        let state = bbm_run(rng, r, t, cap)?;
        for (k, &x) in xs.iter().enumerate() {
            let mut prod = 1.0;
            for &p in &state.positions {
                let v = v0(p + x);
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::param(format!("initial profile value {v} outside [0, 1]")));
                }
                prod *= v;
                if prod == 0.0 {
                    break;
                }
            }
            sum[k] += prod;
            sum_sq[k] += prod * prod;
        }
    }
    let n = reps as f64;
    Ok(sum
        .iter()
        .zip(&sum_sq)
        .map(|(&s, &q)| {
            let mean = s / n;
            let var = if reps > 1 { ((q - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            EstimateWithCI::new(mean, (var / n).sqrt(), reps)
        })
        .collect())
}

pub fn mckean_mc(rng: &mut RngStream, v0: &dyn Fn(f64) -> f64, r: f64, t: f64, x: f64, reps: usize) -> Result<EstimateWithCI> {
    Ok(mckean_mc_multi(rng, v0, r, t, &[x], reps)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub n: usize,
    /// Per-particle branch rate (N-BBM). N-BRW uses birth rate 1.
    pub r: f64,
    /// Child displacement law (N-BRW).
    pub displacement: JumpDistribution,
    /// Time between snapshots.
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Keep positions every `dump_stride` snapshots (0: final snapshot only).
    pub dump_stride: usize,
}

impl SelectionConfig {
    pub fn nbbm(n: usize, r: f64, t_max: f64, seed: u64) -> Self {
        Self {
            n,
            r,
            displacement: JumpDistribution::None,
            dt: 1.0,
            t_max,
            seed,
            dump_stride: 0,
        }
    }

    pub fn nbrw(n: usize, displacement: JumpDistribution, t_max: f64, seed: u64) -> Self {
        Self {
            n,
            r: 1.0,
            displacement,
            dt: 1.0,
            t_max,
            seed,
            dump_stride: 0,
        }
    }

    fn validate(&self, init: &[f64]) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param(format!("N = {} must be >= 2", self.n)));
        }
        if init.len() != self.n {
            return Err(Error::param(format!("{} initial positions for N = {}", init.len(), self.n)));
        }
        if init.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("initial positions must be finite"));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::param(format!("rate r = {} must be > 0", self.r)));
        }
        if !(self.dt > 0.0) || !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::param("snapshot interval must be > 0 and T >= 0"));
        }
        Ok(())
    }

    fn snapshot_times(&self) -> Vec<f64> {
        let k = (self.t_max / self.dt + 1e-9).floor() as usize;
        let mut ts: Vec<f64> = (0..=k).map(|i| i as f64 * self.dt).collect();
        if self.t_max - ts[k] > 1e-9 * self.dt {
            ts.push(self.t_max);
        }
        ts
    }

    fn keep(&self, idx: usize, last: bool) -> bool {
        last || (self.dump_stride > 0 && idx.is_multiple_of(self.dump_stride))
    }
}

/// Replaces the leftmost particle (lowest index on ties) by `child` unless
/// the child itself is the leftmost of the `N + 1`.
pub fn insert_and_cull(positions: &mut [f64], child: f64) {
    let mut arg = 0;
    for (i, &x) in positions.iter().enumerate().skip(1) {
        if x < positions[arg] {
            arg = i;
        }
    }
    if child >= positions[arg] {
        positions[arg] = child;
    }
}

pub fn nbbm_run(cfg: &SelectionConfig, init: &[f64]) -> Result<ParticleSeries> {
    cfg.validate(init)?;
    let mut rng = RngStream::new(cfg.seed, 0);
    let mut pos = init.to_vec();
    let total_rate = cfg.r * cfg.n as f64;
    let times = cfg.snapshot_times();
    let mut series = ParticleSeries::new();
    series.push(ParticleSnapshot::from_positions(0.0, &pos, 0, cfg.keep(0, times.len() == 1)));
    let mut t = 0.0;
    let mut events = 0u64;
    let mut next_event = rng.exponential(total_rate);
    for (idx, &ts) in times.iter().enumerate().skip(1) {
        while next_event < ts {
            advance_all(&mut pos, next_event - t, &mut rng);
            t = next_event;
            let parent = rng.index(cfg.n);
            let child = pos[parent];
            insert_and_cull(&mut pos, child);
            events += 1;
            next_event = t + rng.exponential(total_rate);
        }
        advance_all(&mut pos, ts - t, &mut rng);
        t = ts;
        let last = idx + 1 == times.len();
        series.push(ParticleSnapshot::from_positions(ts, &pos, events, cfg.keep(idx, last)));
    }
    Ok(series)
}

pub fn nbrw_run(cfg: &SelectionConfig, init: &[f64]) -> Result<ParticleSeries> {
    cfg.validate(init)?;
    cfg.displacement.validate()?;
    let mean = cfg.displacement.mean();
    if mean.abs() > 1e-12 || matches!(cfg.displacement, JumpDistribution::None) {
        return Err(Error::param(format!("displacement law must be a proper law with mean 0, got mean {mean}")));
    }
    let mut rng = RngStream::new(cfg.seed, 0);
    let mut pos = init.to_vec();
    let total_rate = cfg.n as f64;
    let times = cfg.snapshot_times();
    let mut series = ParticleSeries::new();
    series.push(ParticleSnapshot::from_positions(0.0, &pos, 0, cfg.keep(0, times.len() == 1)));
    let mut events = 0u64;
    let mut next_event = rng.exponential(total_rate);
    for (idx, &ts) in times.iter().enumerate().skip(1) {
        while next_event < ts {
            let parent = rng.index(cfg.n);
            let child = pos[parent] + cfg.displacement.sample(&mut rng);
            insert_and_cull(&mut pos, child);
            events += 1;
            next_event += rng.exponential(total_rate);
        }
        let last = idx + 1 == times.len();
        series.push(ParticleSnapshot::from_positions(ts, &pos, events, cfg.keep(idx, last)));
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontStatistic {
    Min,
    #[default]
    Median,
    Max,
}

impl FrontStatistic {
    pub fn of(&self, s: &ParticleSnapshot) -> f64 {
        match self {
            FrontStatistic::Min => s.min,
            FrontStatistic::Median => s.median,
            FrontStatistic::Max => s.max,
        }
    }
}

/// Least-squares slope of the chosen order statistic after `burn_in`; the
/// standard error comes from batch means over up to 10 batches.
pub fn front_velocity(series: &ParticleSeries, burn_in: f64, statistic: FrontStatistic) -> Result<EstimateWithCI> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|s| s.t >= burn_in)
        .map(|s| (s.t, statistic.of(s)))
        .collect();
    if pts.len() < 10 {
        return Err(Error::param(format!("{} snapshots after burn-in, need >= 10", pts.len())));
    }
    let (ts, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let (_, slope, ols_se) = ols(&ts, &ys);
    let batches = (pts.len() / 5).clamp(2, 10);
    let bm = batch_means_regression(&pts, burn_in, batches)?;
    // Batch slopes are nearly independent, but the overall slope only has
    // `batches` effective samples; never report less than the OLS error.
    Ok(EstimateWithCI::new(slope, bm.stderr.max(ols_se), bm.n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_with_stderr;

    #[test]
    fn no_branching_is_one_path() {
        let mut rng = RngStream::new(1, 0);
        let s = bbm_run(&mut rng, 0.0, 3.0, 10).unwrap();
        assert_eq!(s.count(), 1);
        assert_eq!(s.t, 3.0);
    }

    #[test]
    fn yule_mean() {
        let mut rng = RngStream::new(2, 0);
        let reps = 10_000;
        let counts: Vec<f64> = (0..reps)
            .map(|_| bbm_run(&mut rng, 1.0, 2.0, 100_000).unwrap().count() as f64)
            .collect();
        let est = mean_with_stderr(&counts);
        let target = 2f64.exp();
        assert!((est.value - target).abs() < 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn growth_cap() {
        let mut rng = RngStream::new(2, 0);
        assert!(matches!(bbm_run(&mut rng, 1.0, 5.0, 20), Err(Error::Parameter(_))));
        let mut hit = false;
        for _ in 0..50 {
            if matches!(bbm_run(&mut rng, 1.0, 2.0, 8), Err(Error::Growth { .. })) {
                hit = true;
                break;
            }
        }
        assert!(hit);
    }

    #[test]
    fn mckean_fixed_points() {
        let mut rng = RngStream::new(3, 0);
        let one = mckean_mc(&mut rng, &|_| 1.0, 1.0, 1.0, 0.0, 100).unwrap();
        assert_eq!((one.value, one.stderr), (1.0, 0.0));
        let zero = mckean_mc(&mut rng, &|_| 0.0, 1.0, 1.0, 0.0, 100).unwrap();
        assert_eq!((zero.value, zero.stderr), (0.0, 0.0));
        assert!(mckean_mc(&mut rng, &|_| 2.0, 1.0, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn mckean_at_small_time_is_gaussian_tail() {
        // Without branching the product is the single factor 1{ξ_t + x ≥ 0}.
        let mut rng = RngStream::new(4, 0);
        let est = mckean_mc(&mut rng, &|y| if y >= 0.0 { 1.0 } else { 0.0 }, 1e-9, 1.0, 0.5, 40_000).unwrap();
        let target = 0.691_462_461_274_013;
        assert!((est.value - target).abs() < 4.0 * est.stderr);
    }

    #[test]
    fn cull_examples() {
        let mut p = vec![0.0, 5.0];
        insert_and_cull(&mut p, 5.0);
        p.sort_by(f64::total_cmp);
        assert_eq!(p, vec![5.0, 5.0]);
        let mut p = vec![0.0, 5.0];
        insert_and_cull(&mut p, 0.0);
        assert_eq!(p, vec![0.0, 5.0]);
        let mut p = vec![0.0, -3.0];
        insert_and_cull(&mut p, 1.0);
        p.sort_by(f64::total_cmp);
        assert_eq!(p, vec![0.0, 1.0]);
        let mut p = vec![0.0, -3.0];
        insert_and_cull(&mut p, -5.0);
        p.sort_by(f64::total_cmp);
        assert_eq!(p, vec![-3.0, 0.0]);
        let mut p = vec![1.0, 1.0, 2.0];
        insert_and_cull(&mut p, 1.5);
        assert_eq!(p, vec![1.5, 1.0, 2.0]);
    }

    #[test]
    fn selection_keeps_population() {
        let cfg = SelectionConfig { dt: 0.5, ..SelectionConfig::nbbm(20, 1.0, 10.0, 5) };
        let s = nbbm_run(&cfg, &[0.0; 20]).unwrap();
        assert_eq!(s.len(), 21);
        assert!(s.iter().all(|x| x.n == 20));
        assert!(s.last().unwrap().positions.is_some());
        assert_eq!(s, nbbm_run(&cfg, &[0.0; 20]).unwrap());
        let cfg = SelectionConfig::nbrw(20, JumpDistribution::centered_gaussian(1.0), 10.0, 5);
        let s = nbrw_run(&cfg, &[0.0; 20]).unwrap();
        assert!(s.iter().all(|x| x.n == 20));
        let min_path: Vec<f64> = s.iter().map(|x| x.min).collect();
        assert!(min_path.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn nbrw_rejects_biased_displacement() {
        let law = JumpDistribution::Gaussian { mean: 0.3, std: 1.0 };
        let cfg = SelectionConfig::nbrw(5, law, 1.0, 1);
        assert!(nbrw_run(&cfg, &[0.0; 5]).is_err());
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> ParticleSeries {
        let mut s = ParticleSeries::new();
        for k in 0..100 {
            let t = k as f64 * 0.5;
            s.push(ParticleSnapshot::from_positions(t, &[f(t)], 0, false));
        }
        s
    }

    #[test]
    fn velocity_of_deterministic_series() {
        let v = front_velocity(&synthetic(|t| 2.0 * t), 0.0, FrontStatistic::Median).unwrap();
        assert!((v.value - 2.0).abs() < 1e-12 && v.stderr < 1e-10);
        let v = front_velocity(&synthetic(|_| 3.0), 0.0, FrontStatistic::Max).unwrap();
        assert!(v.value.abs() < 1e-12);
        assert!(front_velocity(&synthetic(|t| t), 47.0, FrontStatistic::Min).is_err());
    }

}
