//! Finite substochastic matrices: conditioned evolution, Yaglom limits and
//! the Perron eigentriple `(R, ν, β)`.
//!
//! On a finite irreducible transient class every chain is R-positive, so this
//! module is an oracle for the R-positive case only. Truncating the
//! constant-drift birth-death chain at a finite level turns a chain with a
//! continuum of QSDs into one with a unique QSD.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_SLACK: f64 = 1e-12;
const EIGEN_TOL: f64 = 1e-14;
const MAX_ITER: usize = 2_000_000;

/// Row-major sub-stochastic transition matrix on the transient states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstochasticMatrix {
    n: usize,
    entries: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigentriple {
    /// Convergence parameter `R`; the spectral radius is `1/R`.
    pub r: f64,
    pub nu: Vec<f64>,
    pub beta: Vec<f64>,
}

impl SubstochasticMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::param("matrix needs at least one state"));
        }
        let mut entries = Vec::with_capacity(n * n);
        let mut leaks = false;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::param(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::param(format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if s > 1.0 + ROW_SUM_SLACK {
                return Err(Error::param(format!("row {i} sums to {s} > 1")));
            }
            leaks |= s < 1.0 - ROW_SUM_SLACK;
            entries.extend_from_slice(row);
        }
        if !leaks {
            return Err(Error::param("no row loses mass: the chain has no absorption"));
        }
        Ok(Self { n, entries })
    }

    /// Birth-death chain on `{1, …, levels}` absorbed at 0: up with `p_up`,
    /// down with `p_down`, otherwise hold. The top level reflects.
    pub fn birth_death(p_up: f64, p_down: f64, levels: usize) -> Result<Self> {
        if !(p_up >= 0.0 && p_down > 0.0 && p_up + p_down <= 1.0) {
            return Err(Error::param(format!(
                "birth-death probabilities up = {p_up}, down = {p_down} are invalid"
            )));
        }
        if levels == 0 {
            return Err(Error::param("birth-death chain needs at least one level"));
        }
        let hold = 1.0 - p_up - p_down;
        let mut rows = vec![vec![0.0; levels]; levels];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = hold;
            if i > 0 {
                row[i - 1] = p_down;
            }
            if i + 1 < levels {
                row[i + 1] = p_up;
            } else {
                row[i] += p_up;
            }
        }
        Self::new(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// `μ p` for a row vector `μ`.
    pub fn left_mul(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let row = &self.entries[i * self.n..(i + 1) * self.n];
            for (o, &p) in out.iter_mut().zip(row) {
                *o += m * p;
            }
        }
        out
    }

    /// `p f` for a column vector `f`.
    pub fn right_mul(&self, f: &[f64]) -> Vec<f64> {
        self.entries
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(f).map(|(p, v)| p * v).sum())
            .collect()
    }

    /// Strong connectivity of the transition graph.
    pub fn is_irreducible(&self) -> bool {
        let reach = |forward: bool| {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..self.n {
                    let p = if forward { self.get(i, j) } else { self.get(j, i) };
                    if p > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

fn check_probability(mu: &[f64], n: usize) -> Result<()> {
    if mu.len() != n {
        return Err(Error::param(format!("distribution has {} entries, expected {n}", mu.len())));
    }
    if mu.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::param("distribution has a negative entry"));
    }
    let s: f64 = mu.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("distribution sums to {s}, not 1")));
    }
    Ok(())
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// One conditioned step: returns the renormalized law and the survival mass.
fn conditioned_step(p: &SubstochasticMatrix, mu: &[f64], step: usize) -> Result<(Vec<f64>, f64)> {
    let mut next = p.left_mul(mu);
    let mass: f64 = next.iter().sum();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::Extinction { at: format!("step {step}") });
    }
    next.iter_mut().for_each(|v| *v /= mass);
    Ok((next, mass))
}

/// `μ0 pᵏ` renormalized to a probability vector.
pub fn conditioned_evolution(p: &SubstochasticMatrix, mu0: &[f64], steps: usize) -> Result<Vec<f64>> {
    check_probability(mu0, p.n)?;
    let mut mu = mu0.to_vec();
    for k in 1..=steps {
        mu = conditioned_step(p, &mu, k)?.0;
    }
    Ok(mu)
}

/// Unconditioned survival probability `μ0 pᵏ 1`.
pub fn survival_probability(p: &SubstochasticMatrix, mu0: &[f64], steps: usize) -> Result<f64> {
    check_probability(mu0, p.n)?;
    let mut log_mass = 0.0;
    let mut mu = mu0.to_vec();
    for k in 1..=steps {
        let (next, mass) = conditioned_step(p, &mu, k)?;
        log_mass += mass.ln();
        mu = next;
    }
    Ok(log_mass.exp())
}

/// Power iteration on the lazy matrix `(p + I)/2`, which has the same
/// Perron vectors as `p` and converges for periodic `p` too.
fn perron_vector(p: &SubstochasticMatrix, left: bool) -> Result<(f64, Vec<f64>)> {
    let n = p.n;
    let apply = |v: &[f64]| if left { p.left_mul(v) } else { p.right_mul(v) };
    let mut v = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let pv = apply(&v);
        let lambda = pv.iter().sum::<f64>() / v.iter().sum::<f64>();
        residual = pv.iter().zip(&v).map(|(a, b)| (a - lambda * b).abs()).fold(0.0, f64::max)
            / v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if residual < EIGEN_TOL * lambda.max(f64::MIN_POSITIVE) {
            return Ok((lambda, v));
        }
        let mut next: Vec<f64> = pv.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        v = next;
    }
    Err(Error::Numerical { msg: "power iteration did not converge".into(), attained: residual })
}

pub fn eigentriple(p: &SubstochasticMatrix) -> Result<Eigentriple> {
    if !p.is_irreducible() {
        return Err(Error::Structure("transient class is not irreducible".into()));
    }
    let (lambda, nu) = perron_vector(p, true)?;
    let (_, mut beta) = perron_vector(p, false)?;
    if !(lambda > 0.0) {
        return Err(Error::Numerical { msg: "spectral radius is zero".into(), attained: lambda });
    }
    let pairing: f64 = nu.iter().zip(&beta).map(|(a, b)| a * b).sum();
    beta.iter_mut().for_each(|b| *b /= pairing);
    Ok(Eigentriple { r: 1.0 / lambda, nu, beta })
}

/// Conditioned evolution from `δ_start` until the total-variation distance
/// to the limit, bounded through the geometric tail of successive changes,
/// falls below `tol`. Returns the limit and the last per-step survival factor.
pub fn yaglom_limit(p: &SubstochasticMatrix, start: usize, tol: f64) -> Result<(Vec<f64>, f64)> {
    if start >= p.n {
        return Err(Error::param(format!("start state {start} out of range 0..{}", p.n)));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tolerance must be positive"));
    }
    let mut mu = vec![0.0; p.n];
    mu[start] = 1.0;
    let mut prev_change = f64::NAN;
    let mut prev_ratio = f64::NAN;
    for k in 1..=MAX_ITER {
        let (next, mass) = conditioned_step(p, &mu, k)?;
        let change = total_variation(&next, &mu);
        mu = next;
        if change == 0.0 {
            return Ok((mu, mass));
        }
        let ratio = change / prev_change;
        let worst = ratio.max(prev_ratio);
        prev_change = change;
        prev_ratio = ratio;
        // Two consecutive contraction estimates guard against transients.
        if worst < 1.0 && change * worst / (1.0 - worst) < tol {
            return Ok((mu, mass));
        }
    }
    Err(Error::Numerical { msg: "Yaglom iteration did not settle".into(), attained: prev_change })
}
