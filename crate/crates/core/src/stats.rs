//! Estimators shared by the experiments: empirical CDFs, Kolmogorov–Smirnov
//! distances, tail-exponent fits and batch-means regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point estimate with a standard error and the number of samples or
/// batches it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl EstimateWithCI {
    pub fn new(value: f64, stderr: f64, n: usize) -> Self {
        debug_assert!(stderr >= 0.0 && n >= 1);
        Self { value, stderr, n }
    }

    /// `value ± z·stderr`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.value - z * self.stderr, self.value + z * self.stderr)
    }

    /// True if the two `z`-intervals intersect.
    pub fn overlaps(&self, other: &EstimateWithCI, z: f64) -> bool {
        let (a0, a1) = self.interval(z);
        let (b0, b1) = other.interval(z);
        a0 <= b1 && b0 <= a1
    }
}

/// A cumulative distribution function, possibly with jumps.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;

    /// Left limit `F(x−)`; equals `cdf` for continuous laws.
    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }

    /// Jump locations, for step functions.
    fn jumps(&self) -> &[f64] {
        &[]
    }
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Right-continuous empirical CDF of a finite multiset.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(positions: &[f64]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::param("empirical CDF of an empty sample"));
        }
        if positions.iter().any(|x| x.is_nan()) {
            return Err(Error::param("empirical CDF input contains NaN"));
        }
        let mut sorted = positions.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}

impl Cdf for Ecdf {
    fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&s| s < x) as f64 / self.sorted.len() as f64
    }

    fn jumps(&self) -> &[f64] {
        &self.sorted
    }
}

pub fn ecdf(positions: &[f64]) -> Result<Ecdf> {
    Ecdf::new(positions)
}

/// `count` equally spaced probe points on `[lo, hi]`.
pub fn probe_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 || !(hi > lo) {
        return vec![lo];
    }
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| lo + i as f64 * step).collect()
}

/// `sup |F − G|` over the probe grid together with every jump location of
/// either function, using both one-sided values at jumps.
pub fn ks_distance(f: &dyn Cdf, g: &dyn Cdf, probe: &[f64]) -> f64 {
    let mut d = 0.0f64;
    let mut visit = |x: f64| {
        d = d.max((f.cdf(x) - g.cdf(x)).abs());
        d = d.max((f.cdf_left(x) - g.cdf_left(x)).abs());
    };
    probe.iter().copied().for_each(&mut visit);
    f.jumps().iter().copied().for_each(&mut visit);
    g.jumps().iter().copied().for_each(&mut visit);
    d
}

/// Exact one-sample KS statistic of `samples` against a continuous CDF.
pub fn ks_to_cdf(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let e = Ecdf::new(samples)?;
    let n = e.len() as f64;
    Ok(e.sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let fx = cdf(x);
            (fx - i as f64 / n).abs().max(((i + 1) as f64 / n - fx).abs())
        })
        .fold(0.0, f64::max))
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let fa = Ecdf::new(a)?;
    let fb = Ecdf::new(b)?;
    Ok(ks_distance(&fa, &fb, &[]))
}

/// Ordinary least squares `y = a + b·x`; returns `(a, b, stderr(b))`.
pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if xs.len() > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (intercept, slope, se)
}

/// Least-squares slope of `−log(value)` against `x` over `window`.
pub fn tail_log_slope(xs: &[f64], values: &[f64], window: (f64, f64)) -> Result<EstimateWithCI> {
    if xs.len() != values.len() {
        return Err(Error::param("tail fit needs matching x and value arrays"));
    }
    let (lo, hi) = window;
    let (wx, wy): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(values)
        .filter(|(x, _)| **x >= lo && **x <= hi)
        .map(|(x, v)| (*x, *v))
        .unzip();
    if wx.len() < 2 {
        return Err(Error::param(format!("fewer than two points in window [{lo}, {hi}]")));
    }
    if wy.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::param("tail fit requires strictly positive values in the window"));
    }
    let neg_log: Vec<f64> = wy.iter().map(|v| -v.ln()).collect();
    let (_, slope, se) = ols(&wx, &neg_log);
    Ok(EstimateWithCI::new(slope, se, wx.len()))
}

/// Slope of `y` on `t` per batch after `burn_in`; returns the mean slope
/// with its between-batch standard error.
pub fn batch_means_regression(series: &[(f64, f64)], burn_in: f64, batches: usize) -> Result<EstimateWithCI> {
    if batches < 2 {
        return Err(Error::param("batch means needs at least 2 batches"));
    }
    let tail: Vec<(f64, f64)> = series.iter().copied().filter(|p| p.0 >= burn_in).collect();
    let per = tail.len() / batches;
    if per < 5 {
        return Err(Error::param(format!(
            "{} points after burn-in cannot fill {batches} batches of >= 5",
            tail.len()
        )));
    }
    let slopes: Vec<f64> = (0..batches)
        .map(|b| {
            let chunk = &tail[b * per..(b + 1) * per];
            let (ts, ys): (Vec<f64>, Vec<f64>) = chunk.iter().copied().unzip();
            ols(&ts, &ys).1
        })
        .collect();
    Ok(mean_with_stderr(&slopes))
}

pub fn mean_with_stderr(xs: &[f64]) -> EstimateWithCI {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let se = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    EstimateWithCI::new(mean, se, xs.len())
}
