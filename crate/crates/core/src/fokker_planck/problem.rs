use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// A drift or diffusion coefficient as a function of money.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    Constant { value: f64 },
    /// `intercept + slope * m`.
    Linear { intercept: f64, slope: f64 },
    /// Piecewise linear through `(m, value)` points sorted by `m`; constant
    /// beyond the first and last point.
    Table { m: Vec<f64>, value: Vec<f64> },
}

impl Coefficient {
    pub fn constant(value: f64) -> Self {
        Coefficient::Constant { value }
    }

    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return config("coefficient table needs at least one point");
        }
        if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return config("coefficient table abscissae must be strictly increasing");
        }
        let (m, value) = points.into_iter().unzip();
        Ok(Coefficient::Table { m, value })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Constant { value } => *value,
            Coefficient::Linear { intercept, slope } => intercept + slope * x,
            Coefficient::Table { m, value } => {
                let k = m.partition_point(|&p| p <= x);
                if k == 0 {
                    value[0]
                } else if k == m.len() {
                    value[m.len() - 1]
                } else {
                    let t = (x - m[k - 1]) / (m[k] - m[k - 1]);
                    value[k - 1] + t * (value[k] - value[k - 1])
                }
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if let Coefficient::Table { m, value } = self {
            if m.is_empty() || m.len() != value.len() {
                return config(format!("{name} table needs matching, nonempty m and value arrays"));
            }
            if m.windows(2).any(|w| !(w[0] < w[1])) {
                return config(format!("{name} table abscissae must be strictly increasing"));
            }
        }
        Ok(())
    }
}

/// Initial profile, as cell-averaged densities once placed on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Initial {
    Uniform,
    /// All mass in the cell containing `at`.
    Delta { at: f64 },
    /// Densities per cell; must integrate to one.
    Values { p: Vec<f64> },
}

/// `∂P/∂t = ∂/∂m [A P + ∂(B P)/∂m]` on `[grid_min, grid_max]` with zero flux
/// through both ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpProblem {
    pub grid_min: f64,
    pub grid_max: f64,
    pub cells: usize,
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    #[serde(default = "default_initial")]
    pub initial: Initial,
}

fn default_initial() -> Initial {
    Initial::Uniform
}

pub const MASS_TOLERANCE: f64 = 1e-12;

impl FpProblem {
    pub fn new(grid_min: f64, grid_max: f64, cells: usize, drift: Coefficient, diffusion: Coefficient) -> Self {
        FpProblem {
            grid_min,
            grid_max,
            cells,
            drift,
            diffusion,
            initial: Initial::Uniform,
        }
    }

    pub fn with_initial(mut self, initial: Initial) -> Self {
        self.initial = initial;
        self
    }

    pub fn width(&self) -> f64 {
        (self.grid_max - self.grid_min) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.grid_min + (i as f64 + 0.5) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }

    /// Left edge of cell `i` (`i == cells` gives the right end).
    pub fn edge(&self, i: usize) -> f64 {
        self.grid_min + i as f64 * self.width()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_min.is_finite() && self.grid_max.is_finite() && self.grid_min < self.grid_max) {
            return config(format!(
                "grid must be a finite interval with min < max, got [{}, {}]",
                self.grid_min, self.grid_max
            ));
        }
        if self.cells < 2 {
            return config(format!("grid needs at least 2 cells, got {}", self.cells));
        }
        self.drift.validate("drift")?;
        self.diffusion.validate("diffusion")?;
        // B is needed at centers and interior interfaces.
        let h = self.width();
        for k in 0..(2 * self.cells - 1) {
            let x = self.grid_min + (k as f64 + 1.0) * 0.5 * h;
            let b = self.diffusion.eval(x);
            if !(b > 0.0) || !b.is_finite() {
                return config(format!("diffusion must be positive on the grid, B({x}) = {b}"));
            }
            if !self.drift.eval(x).is_finite() {
                return config(format!("drift is not finite at m = {x}"));
            }
        }
        if let Initial::Delta { at } = self.initial {
            if !(self.grid_min..self.grid_max).contains(&at) {
                return config(format!("delta initial position {at} lies outside the grid"));
            }
        }
        if let Initial::Values { p } = &self.initial {
            if p.len() != self.cells {
                return config(format!("initial profile has {} values for {} cells", p.len(), self.cells));
            }
            if p.iter().any(|v| !(*v >= 0.0)) {
                return config("initial profile must be nonnegative");
            }
            let mass: f64 = p.iter().sum::<f64>() * h;
            if (mass - 1.0).abs() > MASS_TOLERANCE {
                return config(format!("initial profile integrates to {mass}, not 1"));
            }
        }
        Ok(())
    }

    /// Initial cell densities.
    pub fn initial_profile(&self) -> Vec<f64> {
        let h = self.width();
        match &self.initial {
            Initial::Uniform => vec![1.0 / (self.grid_max - self.grid_min); self.cells],
            Initial::Delta { at } => {
                let mut p = vec![0.0; self.cells];
                let i = (((at - self.grid_min) / h) as usize).min(self.cells - 1);
                p[i] = 1.0 / h;
                p
            }
            Initial::Values { p } => p.clone(),
        }
    }
}

/// Densities from cell averages of an antiderivative `F`, normalized to
/// unit mass on the grid.
pub fn cell_averages(problem: &FpProblem, antiderivative: impl Fn(f64) -> f64) -> Vec<f64> {
    let h = problem.width();
    let raw: Vec<f64> = (0..problem.cells)
        .map(|i| (antiderivative(problem.edge(i + 1)) - antiderivative(problem.edge(i))) / h)
        .collect();
    let mass: f64 = raw.iter().sum::<f64>() * h;
    raw.into_iter().map(|v| v / mass).collect()
}

/// `∫|P - Q| dm` between two cell-density profiles of width `h`.
pub fn l1_distance(p: &[f64], q: &[f64], h: f64) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() * h
}

pub fn mass(p: &[f64], h: f64) -> f64 {
    p.iter().sum::<f64>() * h
}
