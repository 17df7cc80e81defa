//! Seeded random streams and single-step increments of drifted Brownian and
//! finite-activity Lévy paths.
//!
//! Every stream is a ChaCha8 generator whose seed is derived from a
//! `(seed, stream_id)` pair by [`split_seed`]. Draw counts per variate are
//! fixed so that a given call sequence reproduces the same bits:
//!
//! | variate                     | raw 64-bit draws          |
//! |-----------------------------|---------------------------|
//! | `uniform`                   | 1                         |
//! | `standard_normal`           | 2 (Box–Muller, no cache)  |
//! | `exponential`               | 1                         |
//! | `poisson` (mean < 30)       | 1 (inversion)             |
//! | `index`                     | ≥ 1 (unbiased rejection)  |

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = std::f64::consts::TAU;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for replica `stream_id`: `splitmix64(seed ^ splitmix64(stream_id))`.
pub fn split_seed(seed: u64, stream_id: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream_id))
}

/// A reproducible random stream owned by one simulation instance.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            rng: ChaCha8Rng::seed_from_u64(split_seed(seed, stream_id)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream sharing the base seed, for replica `stream_id`.
    pub fn sibling(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    /// Uniform variate on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (TWO_PI * u2).cos()
    }

    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform().ln() / rate
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        if mean < 30.0 {
            let u = self.uniform();
            let mut p = (-mean).exp();
            let mut cdf = p;
            let mut k = 0u64;
            while u > cdf && p > 0.0 {
                k += 1;
                p *= mean / k as f64;
                cdf += p;
            }
            k
        } else {
            rand_distr::Poisson::new(mean)
                .expect("finite positive mean")
                .sample(&mut self.rng) as u64
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Law of a single jump (or of a displacement), without intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpDistribution {
    /// No jumps.
    None,
    /// With probability `p_up` an Exp(`rate_up`) jump to the right, otherwise
    /// an Exp(`rate_down`) jump to the left. `p_up = 1/2`, equal rates α gives
    /// the symmetric density `(α/2) e^{-α|x|}`.
    TwoSidedExponential {
        p_up: f64,
        rate_up: f64,
        rate_down: f64,
    },
    Gaussian {
        #[serde(default)]
        mean: f64,
        std: f64,
    },
    /// Atoms `(location, weight)`; weights sum to one.
    PointMasses { atoms: Vec<(f64, f64)> },
}

impl JumpDistribution {
    pub fn symmetric_exponential(alpha: f64) -> Self {
        JumpDistribution::TwoSidedExponential {
            p_up: 0.5,
            rate_up: alpha,
            rate_down: alpha,
        }
    }

    pub fn centered_gaussian(std: f64) -> Self {
        JumpDistribution::Gaussian { mean: 0.0, std }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JumpDistribution::None => Ok(()),
            JumpDistribution::TwoSidedExponential {
                p_up,
                rate_up,
                rate_down,
            } => {
                if !(0.0..=1.0).contains(p_up) {
                    return Err(Error::param(format!("p_up = {p_up} not in [0, 1]")));
                }
                if !(*rate_up > 0.0 && rate_up.is_finite() && *rate_down > 0.0 && rate_down.is_finite()) {
                    return Err(Error::param("exponential jump rates must be positive"));
                }
                Ok(())
            }
            JumpDistribution::Gaussian { mean, std } => {
                if !(*std > 0.0 && std.is_finite() && mean.is_finite()) {
                    return Err(Error::param(format!("gaussian jump std = {std} must be positive")));
                }
                Ok(())
            }
            JumpDistribution::PointMasses { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::param("point_masses needs at least one atom"));
                }
                if atoms.iter().any(|&(x, w)| !x.is_finite() || !(w >= 0.0)) {
                    return Err(Error::param("point_masses atoms must be finite with weight >= 0"));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::param(format!("point_masses weights sum to {total}, not 1")));
                }
                Ok(())
            }
        }
    }

    /// Supremum of the interval on which the moment generating function is finite.
    pub fn theta_star(&self) -> f64 {
        match self {
            JumpDistribution::TwoSidedExponential { p_up, rate_up, .. } if *p_up > 0.0 => *rate_up,
            _ => f64::INFINITY,
        }
    }

    /// `E e^{θY}`; `+∞` outside the domain.
    pub fn mgf(&self, theta: f64) -> f64 {
        match self {
            JumpDistribution::None => 1.0,
            JumpDistribution::TwoSidedExponential {
                p_up,
                rate_up,
                rate_down,
            } => {
                let up = if *p_up > 0.0 {
                    if theta >= *rate_up {
                        return f64::INFINITY;
                    }
                    p_up * rate_up / (rate_up - theta)
                } else {
                    0.0
                };
                let down = if *p_up < 1.0 {
                    if theta <= -*rate_down {
                        return f64::INFINITY;
                    }
                    (1.0 - p_up) * rate_down / (rate_down + theta)
                } else {
                    0.0
                };
                up + down
            }
            JumpDistribution::Gaussian { mean, std } => (mean * theta + 0.5 * std * std * theta * theta).exp(),
            JumpDistribution::PointMasses { atoms } => atoms.iter().map(|&(x, w)| w * (theta * x).exp()).sum(),
        }
    }

    /// Derivative of [`Self::mgf`].
    pub fn mgf_prime(&self, theta: f64) -> f64 {
        match self {
            JumpDistribution::None => 0.0,
            JumpDistribution::TwoSidedExponential {
                p_up,
                rate_up,
                rate_down,
            } => {
                let up = if *p_up > 0.0 {
                    p_up * rate_up / (rate_up - theta).powi(2)
                } else {
                    0.0
                };
                let down = if *p_up < 1.0 {
                    -(1.0 - p_up) * rate_down / (rate_down + theta).powi(2)
                } else {
                    0.0
                };
                up + down
            }
            JumpDistribution::Gaussian { mean, std } => (mean + std * std * theta) * self.mgf(theta),
            JumpDistribution::PointMasses { atoms } => atoms.iter().map(|&(x, w)| w * x * (theta * x).exp()).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.mgf_prime(0.0)
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            JumpDistribution::None => 0.0,
            JumpDistribution::TwoSidedExponential {
                p_up,
                rate_up,
                rate_down,
            } => 2.0 * p_up / (rate_up * rate_up) + 2.0 * (1.0 - p_up) / (rate_down * rate_down),
            JumpDistribution::Gaussian { mean, std } => mean * mean + std * std,
            JumpDistribution::PointMasses { atoms } => atoms.iter().map(|&(x, w)| w * x * x).sum(),
        }
    }

    /// Density of an absolutely continuous law; `None` for atoms or no jumps.
    pub fn density(&self, x: f64) -> Option<f64> {
        match self {
            JumpDistribution::TwoSidedExponential {
                p_up,
                rate_up,
                rate_down,
            } => Some(if x >= 0.0 {
                p_up * rate_up * (-rate_up * x).exp()
            } else {
                (1.0 - p_up) * rate_down * (rate_down * x).exp()
            }),
            JumpDistribution::Gaussian { mean, std } => {
                let z = (x - mean) / std;
                Some((-0.5 * z * z).exp() / (std * TWO_PI.sqrt()))
            }
            _ => None,
        }
    }

    /// Exponentially tilted law `e^{θy} F(dy) / E e^{θY}`; stays in family.
    pub fn tilt(&self, theta: f64) -> Result<Self> {
        let m = self.mgf(theta);
        if !m.is_finite() {
            return Err(Error::domain(format!("tilt θ = {theta} outside jump mgf domain")));
        }
        Ok(match self {
            JumpDistribution::None => JumpDistribution::None,
            JumpDistribution::TwoSidedExponential {
                p_up,
                rate_up,
                rate_down,
            } => {
                let up_mass = if *p_up > 0.0 { p_up * rate_up / (rate_up - theta) } else { 0.0 };
                JumpDistribution::TwoSidedExponential {
                    p_up: up_mass / m,
                    rate_up: rate_up - theta,
                    rate_down: rate_down + theta,
                }
            }
            JumpDistribution::Gaussian { mean, std } => JumpDistribution::Gaussian {
                mean: mean + theta * std * std,
                std: *std,
            },
            JumpDistribution::PointMasses { atoms } => JumpDistribution::PointMasses {
                atoms: atoms.iter().map(|&(x, w)| (x, w * (theta * x).exp() / m)).collect(),
            },
        })
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            JumpDistribution::None => 0.0,
            JumpDistribution::TwoSidedExponential {
                p_up,
                rate_up,
                rate_down,
            } => {
                let side = rng.uniform();
                if side < *p_up {
                    rng.exponential(*rate_up)
                } else {
                    -rng.exponential(*rate_down)
                }
            }
            JumpDistribution::Gaussian { mean, std } => mean + std * rng.standard_normal(),
            JumpDistribution::PointMasses { atoms } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for &(x, w) in atoms {
                    acc += w;
                    if u < acc {
                        return x;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
        }
    }
}

/// Jump law with its intensity λ (expected jumps per unit time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpLaw {
    pub distribution: JumpDistribution,
    pub intensity: f64,
}

impl JumpLaw {
    pub fn none() -> Self {
        Self {
            distribution: JumpDistribution::None,
            intensity: 0.0,
        }
    }

    pub fn new(distribution: JumpDistribution, intensity: f64) -> Result<Self> {
        let law = Self {
            distribution,
            intensity,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn two_sided_exponential(alpha: f64, intensity: f64) -> Result<Self> {
        Self::new(JumpDistribution::symmetric_exponential(alpha), intensity)
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        let none = matches!(self.distribution, JumpDistribution::None);
        if !(self.intensity >= 0.0 && self.intensity.is_finite()) {
            return Err(Error::param(format!("jump intensity {} must be finite and >= 0", self.intensity)));
        }
        if none != (self.intensity == 0.0) {
            return Err(Error::param("jump intensity must be 0 exactly when there are no jumps"));
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        self.intensity == 0.0
    }
}

/// Lévy triplet `(b, σ, Π)` with finite-activity `Π = λ·F`.
///
/// The Laplace exponent is `ψ(θ) = bθ + σ²θ²/2 + λ(E e^{θY} − 1)`: the small
/// jump compensator of the general Lévy–Khintchine form is absorbed into
/// `b`, so `E Z_1 = b + λ E Y` and the path increment over `dt` is
/// `b dt + σ W_dt + Σ Y_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyTriplet {
    pub drift: f64,
    pub sigma: f64,
    pub jumps: JumpLaw,
}

impl LevyTriplet {
    pub fn brownian(sigma: f64) -> Result<Self> {
        Self::raw(0.0, sigma, JumpLaw::none())
    }

    /// Triplet with drift chosen so that `E Z_1 = 0`.
    pub fn centered(sigma: f64, jumps: JumpLaw) -> Result<Self> {
        jumps.validate()?;
        let drift = -jumps.intensity * jumps.distribution.mean();
        Self::raw(drift, sigma, jumps)
    }

    /// Triplet taken as given, possibly with nonzero mean.
    pub fn raw(drift: f64, sigma: f64, jumps: JumpLaw) -> Result<Self> {
        let t = Self { drift, sigma, jumps };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!("sigma = {} must be > 0", self.sigma)));
        }
        if !self.drift.is_finite() {
            return Err(Error::param("drift must be finite"));
        }
        self.jumps.validate()
    }

    /// `E Z_1 = ψ'(0+)`.
    pub fn mean(&self) -> f64 {
        self.drift + self.jumps.intensity * self.jumps.distribution.mean()
    }

    pub fn variance_rate(&self) -> f64 {
        self.sigma * self.sigma + self.jumps.intensity * self.jumps.distribution.second_moment()
    }

    pub fn is_centered(&self, tol: f64) -> bool {
        self.mean().abs() <= tol
    }

    /// Increment of `Z_t − ct` over `dt`; no validation.
    #[inline]
    pub(crate) fn increment_unchecked(&self, rng: &mut RngStream, c: f64, dt: f64) -> f64 {
        let mut dx = (self.drift - c) * dt + self.sigma * dt.sqrt() * rng.standard_normal();
        if self.jumps.intensity > 0.0 {
            let k = rng.poisson(self.jumps.intensity * dt);
            for _ in 0..k {
                dx += self.jumps.distribution.sample(rng);
            }
        }
        dx
    }
}

/// Normal(0, σ²·dt) variate; two raw draws.
pub fn gaussian_increment(rng: &mut RngStream, dt: f64, sigma: f64) -> Result<f64> {
    if !(dt > 0.0) || !(sigma > 0.0) {
        return Err(Error::param(format!("dt = {dt} and sigma = {sigma} must be positive")));
    }
    Ok(sigma * dt.sqrt() * rng.standard_normal())
}

/// One increment of the drifted process `Z^c_t = Z_t − ct` over `dt`.
pub fn levy_increment(rng: &mut RngStream, triplet: &LevyTriplet, c: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::param(format!("dt = {dt} must be positive")));
    }
    triplet.validate()?;
    Ok(triplet.increment_unchecked(rng, c, dt))
}

/// Probability that a Brownian bridge from `x0` to `x1` over `dt` touches 0.
pub fn bridge_hit_probability(x0: f64, x1: f64, dt: f64, sigma: f64) -> f64 {
    if x0 <= 0.0 || x1 <= 0.0 {
        return 1.0;
    }
    (-2.0 * x0 * x1 / (sigma * sigma * dt)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn streams_reproduce_and_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn standard_normal_uses_two_draws() {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 0);
        a.standard_normal();
        b.next_u64();
        b.next_u64();
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn gaussian_increment_moments() {
        let mut rng = RngStream::new(11, 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| gaussian_increment(&mut rng, 1.0, 1.0).unwrap()).collect();
        assert!(moments(&xs).0.abs() < 4e-3);

        let xs: Vec<f64> = (0..1_000_000).map(|_| gaussian_increment(&mut rng, 0.01, 1.0).unwrap()).collect();
        assert!((moments(&xs).1 / 0.01 - 1.0).abs() < 0.01);

        let xs: Vec<f64> = (0..1_000_000).map(|_| gaussian_increment(&mut rng, 4.0, 0.5).unwrap()).collect();
        assert!((moments(&xs).1 - 1.0).abs() < 0.01);
    }

    #[test]
    fn gaussian_increment_rejects_bad_parameters() {
        let mut rng = RngStream::new(0, 0);
        assert!(gaussian_increment(&mut rng, 0.0, 1.0).is_err());
        assert!(gaussian_increment(&mut rng, 1.0, -1.0).is_err());
    }

    #[test]
    fn drift_shifts_levy_increment_mean() {
        let mut rng = RngStream::new(5, 1);
        let t = LevyTriplet::brownian(1.0).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| levy_increment(&mut rng, &t, 1.0, 1.0).unwrap()).collect();
        assert!((moments(&xs).0 + 1.0).abs() < 4e-3);
    }

    #[test]
    fn compound_poisson_variance() {
        // Var = σ² + λ·E[Y²] = 1 + 1·2/α² with α = 2.
        let jumps = JumpLaw::two_sided_exponential(2.0, 1.0).unwrap();
        let t = LevyTriplet::centered(1.0, jumps).unwrap();
        assert!((t.variance_rate() - 1.5).abs() < 1e-15);
        let mut rng = RngStream::new(9, 2);
        let xs: Vec<f64> = (0..1_000_000).map(|_| levy_increment(&mut rng, &t, 0.0, 1.0).unwrap()).collect();
        let (mean, var) = moments(&xs);
        assert!((var / 1.5 - 1.0).abs() < 0.02, "var = {var}");
        assert!(mean.abs() < 5.0 * (1.5f64 / 1e6).sqrt());
    }

    #[test]
    fn second_moment_matches_quadrature() {
        let law = JumpDistribution::TwoSidedExponential {
            p_up: 0.3,
            rate_up: 1.5,
            rate_down: 2.5,
        };
        let h = 1e-3;
        let mut acc = 0.0;
        let mut x = -40.0;
        while x < 40.0 {
            let mid = x + 0.5 * h;
            acc += mid * mid * law.density(mid).unwrap() * h;
            x += h;
        }
        assert!((acc - law.second_moment()).abs() < 1e-5);
    }

    #[test]
    fn bridge_probability_cases() {
        assert!((bridge_hit_probability(1.0, 1.0, 1.0, 1.0) - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(bridge_hit_probability(0.0, 5.0, 1.0, 1.0), 1.0);
        assert_eq!(bridge_hit_probability(10.0, 10.0, 0.01, 1.0), 0.0);
    }

    #[test]
    fn bridge_probability_matches_fine_step_bridge() {
        // Oracle: simulate the bridge minimum on a fine grid. Discrete
        // monitoring misses crossings, so the estimate is biased low by
        // O(sqrt(step)); the fine grid keeps that below the tolerance.
        let mut rng = RngStream::new(21, 0);
        let steps = 2000;
        let reps = 20_000;
        let dt = 1.0 / steps as f64;
        let mut hits = 0;
        for _ in 0..reps {
            let mut w = 0.0;
            let mut path = Vec::with_capacity(steps + 1);
            path.push(0.0);
            for _ in 0..steps {
                w += dt.sqrt() * rng.standard_normal();
                path.push(w);
            }
            let w1 = path[steps];
            let hit = path.iter().enumerate().any(|(k, &wk)| {
                let s = k as f64 * dt;
                1.0 + (wk - s * w1) <= 0.0
            });
            if hit {
                hits += 1;
            }
        }
        let p = hits as f64 / reps as f64;
        let exact = bridge_hit_probability(1.0, 1.0, 1.0, 1.0);
        assert!((p - exact).abs() < 0.015, "p = {p}, exact = {exact}");
    }

    #[test]
    fn jump_law_invariants() {
        assert!(JumpLaw::new(JumpDistribution::None, 1.0).is_err());
        assert!(JumpLaw::new(JumpDistribution::centered_gaussian(1.0), 0.0).is_err());
        assert!(JumpLaw::new(JumpDistribution::PointMasses { atoms: vec![(1.0, 0.5), (-1.0, 0.4)] }, 1.0).is_err());
        assert!(JumpLaw::new(JumpDistribution::PointMasses { atoms: vec![(1.0, 0.5), (-1.0, 0.5)] }, 1.0).is_ok());
        assert!(LevyTriplet::brownian(0.0).is_err());
    }

    #[test]
    fn centering_removes_mean() {
        let jumps = JumpLaw::new(JumpDistribution::PointMasses { atoms: vec![(2.0, 0.25), (-1.0, 0.75)] }, 3.0).unwrap();
        let t = LevyTriplet::centered(1.0, jumps).unwrap();
        assert!(t.is_centered(1e-14));
        assert!((t.drift - 0.75).abs() < 1e-14);
    }
}
