//! Fleming–Viot particle system for `Z_t − ct` killed at 0.
//!
//! Time is discretized with a fixed step. A particle is absorbed when its
//! new position is `≤ 0` or, with the bridge correction, when a Brownian
//! bridge between its endpoints would have crossed 0. Absorbed particles are
//! processed in ascending index order; each jumps onto a uniformly chosen
//! particle among those alive at that moment, which includes particles
//! relocated earlier in the same step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{LevyTriplet, RngStream};
use crate::series::{ParticleSeries, ParticleSnapshot};
use crate::stats::{mean_with_stderr, EstimateWithCI};

/// Exponent beyond which `exp(−x)` underflows; the bridge draw is skipped.
const BRIDGE_CUTOFF: f64 = 745.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvConfig {
    pub triplet: LevyTriplet,
    pub c: f64,
    pub n: usize,
    pub dt: f64,
    pub t_max: f64,
    pub bridge_correction: bool,
    pub seed: u64,
    /// Steps between snapshots.
    pub stride: usize,
    /// Keep sorted positions in every snapshot (the final one always keeps them).
    pub keep_positions: bool,
}

impl FvConfig {
    pub fn brownian(c: f64, n: usize, dt: f64, t_max: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            triplet: LevyTriplet::brownian(1.0)?,
            c,
            n,
            dt,
            t_max,
            bridge_correction: true,
            seed,
            stride: ((0.1 / dt).round() as usize).max(1),
            keep_positions: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.triplet.validate()?;
        if !(self.c.is_finite()) {
            return Err(Error::param("drift c must be finite"));
        }
        if self.n < 2 {
            return Err(Error::param(format!("N = {} must be >= 2", self.n)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::param(format!("T = {} must be >= 0", self.t_max)));
        }
        if self.t_max > 0.0 && self.t_max < self.dt {
            return Err(Error::param("horizon T must be 0 or at least dt"));
        }
        if self.stride == 0 {
            return Err(Error::param("snapshot stride must be >= 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub positions: Vec<f64>,
    pub t: f64,
    pub resample_count: u64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::param("ensemble needs at least 2 particles"));
        }
        if let Some(x) = positions.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::param(format!("initial position {x} is not in (0, inf)")));
        }
        Ok(Self { positions, t: 0.0, resample_count: 0 })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn snapshot(&self, keep_positions: bool) -> ParticleSnapshot {
        ParticleSnapshot::from_positions(self.t, &self.positions, self.resample_count, keep_positions)
    }
}

/// Moves every `absorbed[i]` particle onto a uniform member of `alive`,
/// growing `alive` as it goes. Returns the number of relocations.
pub fn relocate(positions: &mut [f64], absorbed: &[usize], alive: &mut Vec<usize>, rng: &mut RngStream) -> Result<u64> {
    if alive.is_empty() && !absorbed.is_empty() {
        return Err(Error::Extinction { at: "relocation with no survivors".into() });
    }
    for &i in absorbed {
        let target = alive[rng.index(alive.len())];
        positions[i] = positions[target];
        alive.push(i);
    }
    Ok(absorbed.len() as u64)
}

pub fn fv_step(ens: &mut ParticleEnsemble, cfg: &FvConfig, rng: &mut RngStream) -> Result<()> {
    let dt = cfg.dt;
    let var_dt = cfg.triplet.sigma * cfg.triplet.sigma * dt;
    let mut absorbed = Vec::new();
    let mut alive = Vec::with_capacity(ens.n());
    for (i, x) in ens.positions.iter_mut().enumerate() {
        let x0 = *x;
        let x1 = x0 + cfg.triplet.increment_unchecked(rng, cfg.c, dt);
        *x = x1;
        let hit = if x1 <= 0.0 {
            true
        } else if cfg.bridge_correction {
            let e = 2.0 * x0 * x1 / var_dt;
            e < BRIDGE_CUTOFF && rng.uniform() < (-e).exp()
        } else {
            false
        };
        if hit {
            absorbed.push(i);
        } else {
            alive.push(i);
        }
    }
    ens.t += dt;
    if alive.is_empty() {
        return Err(Error::Extinction { at: format!("t = {}: all {} particles absorbed", ens.t, ens.n()) });
    }
    ens.resample_count += relocate(&mut ens.positions, &absorbed, &mut alive, rng)?;
    Ok(())
}

pub fn fv_run(cfg: &FvConfig, init: &[f64]) -> Result<ParticleSeries> {
    let stream = RngStream::new(cfg.seed, 0);
    fv_run_with(cfg, init, stream)
}

/// As [`fv_run`], on an explicit stream (for replicas).
pub fn fv_run_with(cfg: &FvConfig, init: &[f64], mut rng: RngStream) -> Result<ParticleSeries> {
    cfg.validate()?;
    if init.len() != cfg.n {
        return Err(Error::param(format!("{} initial positions for N = {}", init.len(), cfg.n)));
    }
    let mut ens = ParticleEnsemble::new(init.to_vec())?;
    let steps = cfg.steps();
    let mut series = ParticleSeries::new();
    series.push(ens.snapshot(cfg.keep_positions || steps == 0));
    for k in 1..=steps {
        fv_step(&mut ens, cfg, &mut rng)?;
        ens.t = k as f64 * cfg.dt;
        if k % cfg.stride == 0 || k == steps {
            series.push(ens.snapshot(cfg.keep_positions || k == steps));
        }
    }
    Ok(series)
}

/// Resamplings per particle per unit time after `burn_in`, with a
/// batch-means standard error over (up to) 10 batches of snapshot intervals.
pub fn absorption_rate_estimate(series: &ParticleSeries, burn_in: f64) -> Result<EstimateWithCI> {
    let snaps: Vec<&ParticleSnapshot> = series.iter().filter(|s| s.t >= burn_in).collect();
    if snaps.len() < 2 {
        return Err(Error::param(format!("no post-burn-in window after t = {burn_in}")));
    }
    let n = snaps[0].n as f64;
    let first = snaps[0];
    let last = snaps[snaps.len() - 1];
    let span = last.t - first.t;
    let value = (last.events - first.events) as f64 / (n * span);
    let intervals = snaps.len() - 1;
    let batches = intervals.min(10);
    let per = intervals / batches;
    let rates: Vec<f64> = (0..batches)
        .map(|b| {
            let a = snaps[b * per];
            let z = snaps[(b + 1) * per];
            (z.events - a.events) as f64 / (n * (z.t - a.t))
        })
        .collect();
    let se = if batches >= 2 { mean_with_stderr(&rates).stderr } else { 0.0 };
    Ok(EstimateWithCI::new(value, se, batches))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{qsd_cdf, qsd_sample};
    use crate::stats::ks_to_cdf;

    #[test]
    fn far_from_boundary_is_plain_diffusion() {
        let cfg = FvConfig::brownian(1.0, 4, 1e-3, 1.0, 5).unwrap();
        let mut ens = ParticleEnsemble::new(vec![1e4; 4]).unwrap();
        let mut rng = RngStream::new(5, 0);
        let mut twin = rng.clone();
        fv_step(&mut ens, &cfg, &mut rng).unwrap();
        assert_eq!(ens.resample_count, 0);
        for x in &ens.positions {
            let expected = 1e4 + cfg.triplet.increment_unchecked(&mut twin, 1.0, 1e-3);
            assert_eq!(*x, expected);
        }
    }

    #[test]
    fn absorbed_particle_lands_on_survivor() {
        let mut cfg = FvConfig::brownian(1.0, 2, 1e-3, 1.0, 1).unwrap();
        cfg.c = 1e6;
        let mut ens = ParticleEnsemble::new(vec![1e-3, 1e5]).unwrap();
        let mut rng = RngStream::new(1, 0);
        fv_step(&mut ens, &cfg, &mut rng).unwrap();
        assert_eq!(ens.resample_count, 1);
        assert_eq!(ens.positions[0], ens.positions[1]);
        assert!(ens.positions[1] > 0.0);
    }

    #[test]
    fn total_extinction_errors() {
        let mut cfg = FvConfig::brownian(1.0, 3, 1e-3, 1.0, 1).unwrap();
        cfg.c = 1e6;
        let mut ens = ParticleEnsemble::new(vec![1.0; 3]).unwrap();
        let mut rng = RngStream::new(1, 0);
        assert!(matches!(fv_step(&mut ens, &cfg, &mut rng), Err(Error::Extinction { .. })));
    }

    #[test]
    fn relocation_is_sequential() {
        let mut rng = RngStream::new(3, 0);
        let mut pos = vec![-1.0, -2.0, 7.0];
        let mut alive = vec![2];
        relocate(&mut pos, &[0, 1], &mut alive, &mut rng).unwrap();
        assert_eq!(pos, vec![7.0, 7.0, 7.0]);
        assert_eq!(alive, vec![2, 0, 1]);
    }

    #[test]
    fn zero_horizon_returns_init() {
        let cfg = FvConfig::brownian(1.0, 3, 1e-3, 0.0, 1).unwrap();
        let s = fv_run(&cfg, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.snapshots[0].positions.as_deref(), Some(&[1.0, 2.0, 3.0][..]));
    }

    #[test]
    fn conservation_positivity_and_determinism() {
        let cfg = FvConfig::brownian(1.0, 50, 1e-2, 5.0, 9).unwrap();
        let init = vec![0.5; 50];
        let a = fv_run(&cfg, &init).unwrap();
        let b = fv_run(&cfg, &init).unwrap();
        assert_eq!(a, b);
        for s in a.iter() {
            assert_eq!(s.n, 50);
            assert!(s.min > 0.0);
        }
    }

    #[test]
    fn zero_resamplings_give_zero_rate() {
        let mut series = ParticleSeries::new();
        for k in 0..20 {
            series.push(ParticleSnapshot::from_positions(k as f64, &[1.0, 2.0], 0, false));
        }
        let est = absorption_rate_estimate(&series, 5.0).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.stderr, 0.0);
        assert!(absorption_rate_estimate(&series, 100.0).is_err());
    }

    #[test]
    fn stays_near_minimal_qsd_small() {
        // At N = 400 the stationary law itself sits about 0.08 from the QSD in KS.
        let mut rng = RngStream::new(21, 1);
        let init = qsd_sample(&mut rng, 1.0, 0.5, 400).unwrap();
        let mut cfg = FvConfig::brownian(1.0, 400, 2e-3, 10.0, 21).unwrap();
        cfg.keep_positions = true;
        let s = fv_run(&cfg, &init).unwrap();
        for snap in s.iter().step_by(10) {
            let d = ks_to_cdf(snap.positions.as_ref().unwrap(), |x| qsd_cdf(1.0, 0.5, x).unwrap()).unwrap();
            assert!(d < 0.15, "t = {}: ks {d}", snap.t);
        }
        let rate = absorption_rate_estimate(&s, 2.0).unwrap();
        assert!((rate.value - 0.5).abs() < 0.1, "rate {rate:?}");
    }
}
