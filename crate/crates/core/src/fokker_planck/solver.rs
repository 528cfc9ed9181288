use serde::{Deserialize, Serialize};

use super::problem::{mass, FpProblem};
use crate::error::{config, Result};

/// `z / (e^z - 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Backward Euler; stable for any `dt > 0`.
    #[default]
    Implicit,
    /// Forward Euler; `dt` must keep every update a convex combination.
    Explicit,
}

/// Exponentially fitted finite-volume operator. The flux through the
/// interface between cells `i` and `i+1` is
/// `J = (up[i] P[i+1] - down[i] P[i]) / h`, which vanishes at both ends.
#[derive(Clone, Debug, PartialEq)]
pub struct FpOperator {
    pub h: f64,
    up: Vec<f64>,
    down: Vec<f64>,
    /// Ratio `P[i+1]/P[i]` that makes the interface flux zero, in log form.
    log_ratio: Vec<f64>,
}

impl FpOperator {
    pub fn new(problem: &FpProblem) -> Result<Self> {
        problem.validate()?;
        let n = problem.cells;
        let h = problem.width();
        let b: Vec<f64> = (0..n).map(|i| problem.diffusion.eval(problem.center(i))).collect();
        let mut up = Vec::with_capacity(n - 1);
        let mut down = Vec::with_capacity(n - 1);
        let mut log_ratio = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let x = problem.edge(i + 1);
            let w = h * problem.drift.eval(x) / problem.diffusion.eval(x);
            up.push(bernoulli(-w) * b[i + 1]);
            down.push(bernoulli(w) * b[i]);
            log_ratio.push(-w + b[i].ln() - b[i + 1].ln());
        }
        Ok(FpOperator {
            h,
            up,
            down,
            log_ratio,
        })
    }

    pub fn cells(&self) -> usize {
        self.up.len() + 1
    }

    /// Flux through every interior interface.
    pub fn fluxes(&self, p: &[f64]) -> Vec<f64> {
        (0..self.up.len())
            .map(|i| (self.up[i] * p[i + 1] - self.down[i] * p[i]) / self.h)
            .collect()
    }

    /// `dP/dt` for the profile `p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let j = self.fluxes(p);
        let n = self.cells();
        (0..n)
            .map(|i| {
                let right = if i + 1 < n { j[i] } else { 0.0 };
                let left = if i > 0 { j[i - 1] } else { 0.0 };
                (right - left) / self.h
            })
            .collect()
    }

    /// Largest `dt` for which the explicit update stays positive.
    pub fn explicit_dt_limit(&self) -> f64 {
        let n = self.cells();
        let r = 1.0 / (self.h * self.h);
        (0..n)
            .map(|i| {
                let out = if i + 1 < n { self.down[i] } else { 0.0 } + if i > 0 { self.up[i - 1] } else { 0.0 };
                1.0 / (r * out)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn step_explicit(&self, p: &mut [f64], dt: f64) {
        let d = self.apply(p);
        for (v, dv) in p.iter_mut().zip(d) {
            *v += dt * dv;
        }
    }

    /// One backward-Euler step, solved with the Thomas algorithm.
    pub fn step_implicit(&self, p: &mut [f64], dt: f64) {
        let n = self.cells();
        let r = dt / (self.h * self.h);
        // Row i: -r down[i-1] P[i-1] + (1 + r(down[i] + up[i-1])) P[i] - r up[i] P[i+1].
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let diag = |i: usize| {
            1.0 + r * (if i + 1 < n { self.down[i] } else { 0.0 } + if i > 0 { self.up[i - 1] } else { 0.0 })
        };
        let upper = |i: usize| if i + 1 < n { -r * self.up[i] } else { 0.0 };
        let lower = |i: usize| if i > 0 { -r * self.down[i - 1] } else { 0.0 };
        let b0 = diag(0);
        c[0] = upper(0) / b0;
        d[0] = p[0] / b0;
        for i in 1..n {
            let m = diag(i) - lower(i) * c[i - 1];
            c[i] = upper(i) / m;
            d[i] = (p[i] - lower(i) * d[i - 1]) / m;
        }
        p[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            p[i] = d[i] - c[i] * p[i + 1];
        }
    }

    /// Discrete zero-flux profile, normalized to unit mass.
    pub fn stationary(&self) -> Vec<f64> {
        let mut logp = Vec::with_capacity(self.cells());
        logp.push(0.0);
        for &lr in &self.log_ratio {
            let last = *logp.last().unwrap();
            logp.push(last + lr);
        }
        let top = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p: Vec<f64> = logp.iter().map(|l| (l - top).exp()).collect();
        let m = mass(&p, self.h);
        p.into_iter().map(|v| v / m).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub scheme: Scheme,
    /// Keep the profile every this many steps; the final profile is always
    /// kept.
    #[serde(default)]
    pub record_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpSolution {
    pub centers: Vec<f64>,
    pub width: f64,
    pub times: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
    pub mass: Vec<f64>,
    /// Flux through the left and right ends at each output time.
    pub boundary_flux: Vec<(f64, f64)>,
}

impl FpSolution {
    pub fn last(&self) -> &[f64] {
        self.profiles.last().expect("a solution holds at least the initial profile")
    }
}

/// Advances the initial profile of `problem` by `steps` steps of `dt`.
pub fn fp_step(problem: &FpProblem, opts: &StepOptions) -> Result<FpSolution> {
    let op = FpOperator::new(problem)?;
    fp_step_from(problem, &op, problem.initial_profile(), opts)
}

/// As [`fp_step`], from an arbitrary starting profile.
pub fn fp_step_from(
    problem: &FpProblem,
    op: &FpOperator,
    mut p: Vec<f64>,
    opts: &StepOptions,
) -> Result<FpSolution> {
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return config(format!("time step must be positive, got {}", opts.dt));
    }
    if p.len() != op.cells() {
        return config(format!("profile has {} values for {} cells", p.len(), op.cells()));
    }
    if opts.scheme == Scheme::Explicit {
        let limit = op.explicit_dt_limit();
        if opts.dt > limit {
            return config(format!(
                "explicit step dt = {} exceeds the stability limit {limit:.6e}; use the implicit scheme or a smaller dt",
                opts.dt
            ));
        }
    }
    let h = op.h;
    let mut sol = FpSolution {
        centers: problem.centers(),
        width: h,
        times: Vec::new(),
        profiles: Vec::new(),
        mass: Vec::new(),
        boundary_flux: Vec::new(),
    };
    let record = |sol: &mut FpSolution, t: f64, p: &[f64]| {
        sol.times.push(t);
        sol.mass.push(mass(p, h));
        // The scheme imposes J = 0 on both outer faces.
        sol.boundary_flux.push((0.0, 0.0));
        sol.profiles.push(p.to_vec());
    };
    record(&mut sol, 0.0, &p);
    for k in 1..=opts.steps {
        match opts.scheme {
            Scheme::Implicit => op.step_implicit(&mut p, opts.dt),
            Scheme::Explicit => op.step_explicit(&mut p, opts.dt),
        }
        let keep = opts.record_every.is_some_and(|e| e > 0 && k % e == 0);
        if keep || k == opts.steps {
            record(&mut sol, k as f64 * opts.dt, &p);
        }
    }
    Ok(sol)
}

/// Zero-flux stationary profile `P ∝ exp(-∫A/B dm)/B`, in the discrete form
/// that the stepping scheme leaves invariant.
pub fn fp_stationary(problem: &FpProblem) -> Result<Vec<f64>> {
    Ok(FpOperator::new(problem)?.stationary())
}
