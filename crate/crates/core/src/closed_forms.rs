//! The QSD / traveling-wave family of Brownian motion with drift `−c`
//! absorbed at 0, and a generator residual that checks candidate profiles
//! against `ℒ* w + c w' + r w = 0`.
//!
//! Every member solves `½ w'' + c w' + r w = 0` with `w(0) = 0`. With
//! `β = √(c² − 2r)`:
//!
//! ```text
//! w(x) = m e^{−cx} sinh(βx),  m = 2r/β     (0 < r < c²/2)
//! w(x) = m x e^{−cx},         m = c²       (r = c²/2)
//! ```
//!
//! The constants follow from `∫₀^∞ e^{−cx} sinh(βx) dx = β/(c² − β²) = β/(2r)`.
//! Evaluation uses the factored form `w = 2r e^{−ax} (1 − e^{−2βx})/(2β)`
//! with `a = c − β = 2r/(c + β)`, which is continuous through `β → 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, GridFunction};
use crate::kernels::{JumpDistribution, LevyTriplet, RngStream};

/// Relative slack under which `c² − 2r < 0` is treated as the critical case.
const CRITICAL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QsdBrownianFamily {
    pub c: f64,
    pub r: f64,
    pub m: f64,
    pub beta: f64,
}

impl QsdBrownianFamily {
    pub fn new(c: f64, r: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param(format!("drift c = {c} must be > 0")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::param(format!("rate r = {r} must be > 0")));
        }
        let disc = c * c - 2.0 * r;
        if disc < -CRITICAL_SLACK * c * c {
            return Err(Error::NonNormalizable { c, r, limit: 0.5 * c * c });
        }
        let beta = disc.max(0.0).sqrt();
        let m = if beta > 0.0 { 2.0 * r / beta } else { c * c };
        Ok(Self { c, r, m, beta })
    }

    /// Decay rate `a = c − β` of the tail.
    fn a(&self) -> f64 {
        2.0 * self.r / (self.c + self.beta)
    }

    /// `(1 − e^{−2βx})/(2β)`, equal to `x` at `β = 0`.
    fn sinh_factor(&self, x: f64) -> f64 {
        if self.beta == 0.0 {
            x
        } else {
            -(-2.0 * self.beta * x).exp_m1() / (2.0 * self.beta)
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        2.0 * self.r * (-self.a() * x).exp() * self.sinh_factor(x)
    }

    /// `ν_r((x, ∞)) = e^{−ax}(1 + a·(1 − e^{−2βx})/(2β))`.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let a = self.a();
        (-a * x).exp() * (1.0 + a * self.sinh_factor(x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let a = self.a();
        (-(-a * x).exp_m1() - a * self.sinh_factor(x) * (-a * x).exp()).max(0.0)
    }

    pub fn mean(&self) -> f64 {
        // ∫ S(x) dx = 1/a + a·(1/a − 1/(a + 2β))/(2β) = 1/a + 1/(a + 2β).
        let a = self.a();
        1.0 / a + 1.0 / (a + 2.0 * self.beta)
    }

    pub fn mean_absorption_time(&self) -> f64 {
        1.0 / self.r
    }

    pub fn tail_exponent(&self) -> f64 {
        self.a()
    }

    pub fn is_minimal(&self) -> bool {
        self.beta == 0.0
    }

    /// Inverse-transform draw via bisection on the survival function.
    pub fn sample_one(&self, rng: &mut RngStream) -> f64 {
        let target = rng.uniform();
        let mut hi = self.mean().max(1.0);
        while self.survival(hi) > target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if self.survival(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn sample(&self, rng: &mut RngStream, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    pub fn density_on(&self, grid: Grid1D) -> Result<GridFunction> {
        GridFunction::from_fn(grid, |x| self.density(x))
    }
}

pub fn qsd_density(c: f64, r: f64, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::param(format!("x = {x} must be >= 0")));
    }
    Ok(QsdBrownianFamily::new(c, r)?.density(x))
}

pub fn qsd_cdf(c: f64, r: f64, x: f64) -> Result<f64> {
    Ok(QsdBrownianFamily::new(c, r)?.cdf(x))
}

pub fn qsd_sample(rng: &mut RngStream, c: f64, r: f64, count: usize) -> Result<Vec<f64>> {
    Ok(QsdBrownianFamily::new(c, r)?.sample(rng, count))
}

/// The member with `r = c²/2`: density `c² x e^{−cx}`.
pub fn minimal_qsd(c: f64) -> Result<QsdBrownianFamily> {
    QsdBrownianFamily::new(c, 0.5 * c * c)
}

/// `r(b) = cb − b²/2`, the QSD selected by initial tails `e^{−bx}`, `0 < b < c`.
pub fn attraction_rate(c: f64, b: f64) -> Result<f64> {
    if !(b > 0.0 && b < c) {
        return Err(Error::domain(format!("tail exponent b = {b} must lie in (0, c = {c})")));
    }
    Ok(c * b - 0.5 * b * b)
}

/// Smaller root `c − √(c² − 2r)` of `b² − 2cb + 2r = 0`.
pub fn tail_exponent(c: f64, r: f64) -> Result<f64> {
    match QsdBrownianFamily::new(c, r) {
        Ok(f) => Ok(f.tail_exponent()),
        Err(Error::NonNormalizable { .. }) => Err(Error::domain(format!("r = {r} exceeds c²/2 for c = {c}"))),
        Err(e) => Err(e),
    }
}

/// Solution of `½ w'' + c w' + r w = 0`, `w(0) = 0`, `w'(0) = 1`, for any
/// `r > 0`, including the oscillating branch `r > c²/2` that is not a density.
pub fn eigen_profile(c: f64, r: f64, x: f64) -> f64 {
    let disc = c * c - 2.0 * r;
    let decay = (-c * x).exp();
    if disc > 0.0 {
        let b = disc.sqrt();
        decay * (b * x).sinh() / b
    } else if disc < 0.0 {
        let k = (-disc).sqrt();
        decay * (k * x).sin() / k
    } else {
        decay * x
    }
}

/// Pointwise residual `ℒ* w + c w' + r w` and its discretization diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorResidual {
    pub residual: GridFunction,
    /// Max |residual| over interior nodes.
    pub max_interior: f64,
    /// Max interior residual at spacing `2h` divided by that at `h`, over
    /// the same nodes; ≈ 4 when truncation error dominates.
    pub richardson_ratio: Option<f64>,
    /// Richardson error estimate exceeds 10⁻³ of the largest term `|r w|`.
    pub coarse_grid_warning: bool,
}

/// Residual of `ℒ* w + c w' + r w` on `[0, xmax]`, with `w` extended by zero
/// outside the grid. Derivatives are central differences; the jump integral
/// `λ ∫ (w(x − y) − w(x)) F(dy)` is trapezoidal for densities and uses
/// linear interpolation for atoms.
pub fn generator_residual(w: &GridFunction, triplet: &LevyTriplet, c: f64, r: f64) -> Result<GeneratorResidual> {
    triplet.validate()?;
    if w.grid.xmin.abs() > 1e-12 {
        return Err(Error::param("residual profile must start at x = 0"));
    }
    let scale = w.max_abs().max(f64::MIN_POSITIVE);
    if w.values[0].abs() > 1e-9 * scale {
        return Err(Error::param("residual profile must satisfy w(0) = 0"));
    }
    let fine = residual_values(&w.values, w.grid.h, triplet, c, r);
    let max_interior = fine[1..fine.len() - 1].iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let (richardson_ratio, coarse_grid_warning) = if w.grid.n >= 7 {
        let coarse_vals: Vec<f64> = w.values.iter().step_by(2).copied().collect();
        let coarse = residual_values(&coarse_vals, 2.0 * w.grid.h, triplet, c, r);
        let mut max_c = 0.0f64;
        let mut max_f = 0.0f64;
        let mut max_diff = 0.0f64;
        for j in 1..coarse.len() - 1 {
            let i = 2 * j;
            if i >= fine.len() - 1 {
                break;
            }
            max_c = max_c.max(coarse[j].abs());
            max_f = max_f.max(fine[i].abs());
            max_diff = max_diff.max((coarse[j] - fine[i]).abs());
        }
        let ratio = (max_f > 0.0).then(|| max_c / max_f);
        (ratio, max_diff / 3.0 > 1e-3 * r * scale)
    } else {
        (None, false)
    };

    Ok(GeneratorResidual {
        residual: GridFunction::new(w.grid, fine)?,
        max_interior,
        richardson_ratio,
        coarse_grid_warning,
    })
}

fn residual_values(w: &[f64], h: f64, triplet: &LevyTriplet, c: f64, r: f64) -> Vec<f64> {
    let n = w.len();
    let half_var = 0.5 * triplet.sigma * triplet.sigma;
    let b = triplet.drift;
    let jumps = jump_adjoint(w, h, &triplet.jumps.distribution, triplet.jumps.intensity);
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let d2 = (w[i + 1] - 2.0 * w[i] + w[i - 1]) / (h * h);
        let d1 = (w[i + 1] - w[i - 1]) / (2.0 * h);
        out[i] = half_var * d2 - b * d1 + c * d1 + r * w[i] + jumps.as_ref().map_or(0.0, |j| j[i]);
    }
    out
}

fn jump_adjoint(w: &[f64], h: f64, law: &JumpDistribution, intensity: f64) -> Option<Vec<f64>> {
    if intensity == 0.0 {
        return None;
    }
    let n = w.len();
    let at = |x: f64| -> f64 {
        let s = x / h;
        if !(s >= 0.0) || s > (n - 1) as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(n - 2);
        let f = s - i as f64;
        w[i] * (1.0 - f) + w[i + 1] * f
    };
    let mut out = vec![0.0; n];
    match law {
        JumpDistribution::None => return None,
        JumpDistribution::PointMasses { atoms } => {
            for (i, o) in out.iter_mut().enumerate() {
                let x = i as f64 * h;
                let shifted: f64 = atoms.iter().map(|&(y, p)| p * at(x - y)).sum();
                *o = intensity * (shifted - w[i]);
            }
        }
        _ => {
            // ∫ w(z) ρ(x − z) dz, trapezoid over the grid nodes z_j.
            let density = |d: f64| law.density(d).unwrap_or(0.0);
            for (i, o) in out.iter_mut().enumerate() {
                let x = i as f64 * h;
                let mut acc = 0.0;
                for (j, &wj) in w.iter().enumerate() {
                    let weight = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                    acc += weight * wj * density(x - j as f64 * h);
                }
                *o = intensity * (h * acc - w[i]);
            }
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let n = panels + panels % 2;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        integrate_simpson(f, a, b, 200_000)
    }

    #[test]
    fn density_examples() {
        assert!((qsd_density(1.0, 0.5, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(qsd_density(1.0, 0.5, 0.0).unwrap(), 0.0);
        let expected = 1.5 * (-2.0f64).exp() * 1.0f64.sinh();
        assert!((qsd_density(1.0, 0.375, 2.0).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.238564).abs() < 1e-5);
    }

    #[test]
    fn normalization_constant_by_quadrature() {
        // ∫ e^{−cx} sinh(βx) = β/(2r) at c = 1, r = 0.375, β = 1/2.
        let i = quad(|x| (-x).exp() * (0.5 * x).sinh(), 0.0, 80.0);
        assert!((i - 0.5 / 0.75).abs() < 1e-10);
        assert!((QsdBrownianFamily::new(1.0, 0.375).unwrap().m - 1.5).abs() < 1e-15);
    }

    #[test]
    fn non_normalizable_and_invalid_rates() {
        assert!(matches!(qsd_density(1.0, 0.6, 1.0), Err(Error::NonNormalizable { .. })));
        assert!(matches!(qsd_density(1.0, 0.0, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(tail_exponent(1.0, 0.6), Err(Error::Domain(_))));
    }

    #[test]
    fn cdf_examples() {
        assert!((qsd_cdf(1.0, 0.5, 1.0).unwrap() - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-14);
        let q = quad(|x| x * (-x).exp(), 0.0, 1.0);
        assert!((qsd_cdf(1.0, 0.5, 1.0).unwrap() - q).abs() < 1e-12);
        assert!((qsd_cdf(1.0, 0.5, 1e3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(qsd_cdf(1.0, 0.375, 0.0).unwrap(), 0.0);
        let f = QsdBrownianFamily::new(1.0, 0.375).unwrap();
        for x in [1e-6, 0.3, 2.0, 9.0] {
            let q = quad(|y| f.density(y), 0.0, x);
            assert!((f.cdf(x) - q).abs() < 1e-12);
            assert!((f.cdf(x) + f.survival(x) - 1.0).abs() < 2e-16);
        }
    }

    #[test]
    fn minimal_and_tail_examples() {
        let f = minimal_qsd(1.0).unwrap();
        assert_eq!(f.r, 0.5);
        assert!((f.density(2.0) - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(f.mean_absorption_time(), 2.0);
        let f = minimal_qsd(2f64.sqrt()).unwrap();
        assert!((f.r - 1.0).abs() < 1e-15);
        assert!((f.density(1.0) - 2.0 * (-(2f64.sqrt())).exp()).abs() < 1e-14);

        assert!((attraction_rate(1.0, 0.5).unwrap() - 0.375).abs() < 1e-15);
        assert!((attraction_rate(2.0, 1.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((attraction_rate(1.0, 1.0 - 1e-9).unwrap() - 0.5).abs() < 1e-8);
        assert!(attraction_rate(1.0, 1.0).is_err() && attraction_rate(1.0, 0.0).is_err());

        assert!((tail_exponent(1.0, 0.375).unwrap() - 0.5).abs() < 1e-15);
        assert!((tail_exponent(1.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        for &(c, r) in &[(1.0, 0.1), (2.0, 1.9), (0.5, 0.07)] {
            let b = tail_exponent(c, r).unwrap();
            assert!((attraction_rate(c, b).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_law_of_survival() {
        for &(c, r) in &[(1.0, 0.375), (1.0, 0.2), (2.0, 1.5)] {
            let f = QsdBrownianFamily::new(c, r).unwrap();
            let slope = -f.survival(50.0).ln() / 50.0;
            assert!((slope / f.tail_exponent() - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn minimal_member_decays_fastest() {
        let c = 1.3;
        let rmax = 0.5 * c * c;
        let best = tail_exponent(c, rmax).unwrap();
        for k in 1..20 {
            let r = rmax * k as f64 / 20.0;
            assert!(tail_exponent(c, r).unwrap() < best);
        }
    }

    #[test]
    fn sampler_moments_and_fit() {
        let mut rng = RngStream::new(31, 0);
        let xs = qsd_sample(&mut rng, 1.0, 0.5, 100_000).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean / 2.0 - 1.0).abs() < 0.01);
        assert!(qsd_sample(&mut rng, 1.0, 0.5, 0).unwrap().is_empty());
        let f = QsdBrownianFamily::new(2.0, 2.0).unwrap();
        let xs = f.sample(&mut rng, 100_000);
        let d = crate::stats::ks_to_cdf(&xs, |x| f.cdf(x)).unwrap();
        assert!(d < 0.01, "ks = {d}");
    }

    #[test]
    fn eigen_profile_branches() {
        assert!((eigen_profile(1.0, 0.5, 2.0) - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        // The oscillating branch changes sign: not a density.
        assert!(eigen_profile(1.0, 2.0, 2.0) < 0.0);
    }

    fn residual_on(c: f64, r: f64, h: f64) -> f64 {
        let grid = Grid1D::spanning(0.0, 30.0, h).unwrap();
        let w = QsdBrownianFamily::new(c, r).unwrap().density_on(grid).unwrap();
        let t = LevyTriplet::brownian(1.0).unwrap();
        generator_residual(&w, &t, c, r).unwrap().max_interior
    }

    #[test]
    fn residual_vanishes_at_discretization_order() {
        let h = 1e-3;
        for &(c, r) in &[(1.0, 0.5), (1.0, 0.375)] {
            let res = residual_on(c, r, h);
            assert!(res <= 10.0 * h * h, "residual {res}");
        }
        let coarse = residual_on(1.0, 0.5, 0.02);
        let fine = residual_on(1.0, 0.5, 0.01);
        assert!(coarse / fine > 3.5);
    }

    #[test]
    fn gaussian_bump_is_not_a_wave() {
        let grid = Grid1D::spanning(0.0, 30.0, 1e-3).unwrap();
        let w = GridFunction::from_fn(grid, |x| (-(x - 3.0).powi(2)).exp() - (-9.0f64).exp()).unwrap();
        let t = LevyTriplet::brownian(1.0).unwrap();
        let res = generator_residual(&w, &t, 1.0, 0.5).unwrap();
        assert!(res.max_interior > 0.1);
        let ratio = res.richardson_ratio.unwrap();
        assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn residual_requires_boundary_zero() {
        let grid = Grid1D::spanning(0.0, 10.0, 0.1).unwrap();
        let w = GridFunction::from_fn(grid, |x| (-x).exp()).unwrap();
        let t = LevyTriplet::brownian(1.0).unwrap();
        assert!(generator_residual(&w, &t, 1.0, 0.5).is_err());
    }

    #[test]
    fn coarse_grid_is_flagged() {
        let grid = Grid1D::spanning(0.0, 30.0, 0.25).unwrap();
        let w = minimal_qsd(1.0).unwrap().density_on(grid).unwrap();
        let t = LevyTriplet::brownian(1.0).unwrap();
        assert!(generator_residual(&w, &t, 1.0, 0.5).unwrap().coarse_grid_warning);
        let grid = Grid1D::spanning(0.0, 30.0, 1e-3).unwrap();
        let w = minimal_qsd(1.0).unwrap().density_on(grid).unwrap();
        assert!(!generator_residual(&w, &t, 1.0, 0.5).unwrap().coarse_grid_warning);
    }

    #[test]
    fn normalization_over_random_members() {
        let mut rng = RngStream::new(77, 0);
        for _ in 0..100 {
            let c = 0.3 + 2.7 * rng.uniform();
            let r = 0.5 * c * c * (0.05 + 0.95 * rng.uniform());
            let f = QsdBrownianFamily::new(c, r).unwrap();
            let upper = 60.0 / f.tail_exponent();
            let total = integrate_simpson(|x| f.density(x), 0.0, upper, 400_000);
            assert!((total + f.survival(upper) - 1.0).abs() < 1e-10, "c={c} r={r} total={total}");
        }
    }
}
