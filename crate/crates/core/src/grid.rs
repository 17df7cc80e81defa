use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `x_i = xmin + i·h`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub xmin: f64,
    pub h: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(xmin: f64, h: f64, n: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param(format!("grid spacing h = {h} must be positive")));
        }
        if n < 3 {
            return Err(Error::param("grid needs at least 3 nodes"));
        }
        if !xmin.is_finite() {
            return Err(Error::param("grid origin must be finite"));
        }
        Ok(Self { xmin, h, n })
    }

    /// Grid spanning `[xmin, xmax]`; `(xmax − xmin)/h` must be an integer.
    pub fn spanning(xmin: f64, xmax: f64, h: f64) -> Result<Self> {
        let cells = (xmax - xmin) / h;
        let rounded = cells.round();
        if !(cells > 0.0) || (cells - rounded).abs() > 1e-8 * rounded.max(1.0) {
            return Err(Error::param(format!(
                "(xmax - xmin)/h = {cells} is not a positive integer cell count"
            )));
        }
        Self::new(xmin, h, rounded as usize + 1)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.xmin + i as f64 * self.h
    }

    pub fn xmax(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }
}

/// Nodal values on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::param(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("grid values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values)
    }

    /// Trapezoidal integral over the whole grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.h)
    }

    /// Copy rescaled to unit trapezoidal mass.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.integral();
        if !(m > 0.0) {
            return Err(Error::param("cannot normalize a profile with non-positive mass"));
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v / m).collect(),
        })
    }

    /// Piecewise-linear interpolation, zero outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let s = (x - self.grid.xmin) / self.grid.h;
        if !(s >= 0.0) || s > (self.grid.n - 1) as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(self.grid.n - 2);
        let f = s - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    pub fn sup_distance(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .nodes()
            .zip(&self.values)
            .map(|(x, v)| (v - f(x)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}
