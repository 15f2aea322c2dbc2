use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid in log-moneyness `x = log(S / S0)`, one or two
/// dimensions with the same resolution and bounds in each. Points are
/// `x_min + i dx`, `i = 0..n`, with `dx = (x_max - x_min) / n`; the right end
/// point is the periodic image of the left one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Configuration(format!("grid dimension {dim} not supported")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Configuration(format!("grid resolution {n} must be a power of two >= 4")));
        }
        if !(x_min < 0.0 && 0.0 < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::Configuration(format!(
                "grid bounds [{x_min}, {x_max}] must straddle the origin"
            )));
        }
        let g = Self { dim, n, x_min, x_max };
        let pos = -x_min / g.dx();
        if (pos - pos.round()).abs() > 1e-9 {
            return Err(Error::Configuration(format!(
                "x = 0 is not a node of the {n}-point grid on [{x_min}, {x_max}]"
            )));
        }
        Ok(g)
    }

    /// The symmetric `[-3, 3]` log-moneyness grid used throughout the
    /// benchmarks.
    pub fn standard(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, -3.0, 3.0)
    }

    pub fn with_resolution(&self, n: usize) -> Result<Self> {
        Self::new(self.dim, n, self.x_min, self.x_max)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Per-axis index of `x = 0`.
    pub fn origin_axis_index(&self) -> usize {
        (-self.x_min / self.dx()).round() as usize
    }

    /// Flat index of the origin (row-major, first axis slowest).
    pub fn origin_index(&self) -> usize {
        let i = self.origin_axis_index();
        match self.dim {
            1 => i,
            _ => i * self.n + i,
        }
    }

    /// Axis coordinates of flat index `idx`; the second entry is unused in 1-d.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.coord(idx), 0.0],
            _ => [self.coord(idx / self.n), self.coord(idx % self.n)],
        }
    }

    /// Angular frequency of FFT bin `k`; the Nyquist bin reports `+pi/dx`.
    pub fn omega(&self, k: usize) -> f64 {
        let span = self.x_max - self.x_min;
        let signed = if k <= self.n / 2 { k as f64 } else { k as f64 - self.n as f64 };
        2.0 * std::f64::consts::PI * signed / span
    }

    pub fn is_nyquist(&self, k: usize) -> bool {
        k == self.n / 2
    }

    /// Refinement factor from `self` to `finer` when the grids are nested.
    pub fn nesting_factor(&self, finer: &GridSpec) -> Result<usize> {
        let same_bounds = (self.x_min - finer.x_min).abs() < 1e-12 && (self.x_max - finer.x_max).abs() < 1e-12;
        if self.dim != finer.dim || !same_bounds || finer.n < self.n || !finer.n.is_multiple_of(self.n) {
            return Err(Error::Configuration(format!(
                "grid with {} points is not nested in grid with {} points",
                self.n, finer.n
            )));
        }
        Ok(finer.n / self.n)
    }
}

/// A function sampled on a [`GridSpec`], flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ValueSurface {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Configuration(format!(
                "surface has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn at_origin(&self) -> f64 {
        self.values[self.grid.origin_index()]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
