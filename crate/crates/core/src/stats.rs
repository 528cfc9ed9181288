//! Small statistical helpers shared by the measures, fitting and engine code.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Exact mean and population variance of integer data.
pub fn mean_variance_i64(values: &[i64]) -> (f64, f64) {
    let n = values.len() as i128;
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let s: i128 = values.iter().map(|&v| v as i128).sum();
    let s2: i128 = values.iter().map(|&v| (v as i128) * (v as i128)).sum();
    let mean = s as f64 / n as f64;
    // n^2 Var = n Σv² − (Σv)², computed in integers.
    let var = (n * s2 - s * s) as f64 / (n * n) as f64;
    (mean, var)
}

pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Small-lambda form converges faster here.
        let pi2 = std::f64::consts::PI.powi(2);
        let c = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let mut s = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            s += (-j * j * pi2 / (8.0 * lambda * lambda)).exp();
        }
        return (1.0 - c * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a one-sample KS distance `d` on `n` points, with
/// the usual finite-size correction to the scaling variable.
pub fn ks_pvalue(n: f64, d: f64) -> f64 {
    let sn = n.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample KS distance of weighted data against a continuous CDF.
/// `points` must be sorted by value; weights are nonnegative.
pub fn weighted_ks(points: &[(f64, f64)], cdf: impl Fn(f64) -> f64) -> f64 {
    let total: f64 = points.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < points.len() {
        let x = points[i].0;
        let f = cdf(x);
        d = d.max((acc / total - f).abs());
        while i < points.len() && points[i].0 == x {
            acc += points[i].1;
            i += 1;
        }
        d = d.max((acc / total - f).abs());
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Weighted least squares `y = a + b x`. Returns `None` when `x` has no spread.
pub fn linear_fit(x: &[f64], y: &[f64], w: Option<&[f64]>) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let wt = |i: usize| w.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(wt).sum();
    let mx = (0..n).map(|i| wt(i) * x[i]).sum::<f64>() / sw;
    let my = (0..n).map(|i| wt(i) * y[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| wt(i) * (x[i] - mx).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| wt(i) * (x[i] - mx) * (y[i] - my)).sum();
    let syy: f64 = (0..n).map(|i| wt(i) * (y[i] - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Boltzmann-Gibbs law on the integer lattice `m = lower, lower+1, ...`:
/// `P(m) = (1-q) q^{m-lower}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeExponential {
    pub lower: i64,
    pub q: f64,
}

impl LatticeExponential {
    /// The member of the family with the given mean; `None` if the mean lies
    /// below the support.
    pub fn with_mean(lower: i64, mean: f64) -> Option<Self> {
        let mu = mean - lower as f64;
        if !(mu >= 0.0) || !mu.is_finite() {
            return None;
        }
        Some(LatticeExponential {
            lower,
            q: mu / (1.0 + mu),
        })
    }

    pub fn mean(&self) -> f64 {
        self.lower as f64 + self.q / (1.0 - self.q)
    }

    /// Decay scale `T` in `P ∝ e^{-(m-lower)/T}`.
    pub fn temperature(&self) -> f64 {
        -1.0 / self.q.ln()
    }

    pub fn pmf(&self, m: i64) -> f64 {
        if m < self.lower {
            0.0
        } else {
            (1.0 - self.q) * self.q.powf((m - self.lower) as f64)
        }
    }

    /// `P(X < edge)`.
    pub fn cdf_below(&self, edge: i64) -> f64 {
        if edge <= self.lower {
            0.0
        } else {
            1.0 - self.q.powf((edge - self.lower) as f64)
        }
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        let q = self.q;
        if q <= 0.0 {
            return 0.0;
        }
        (-(1.0 - q) * (1.0 - q).ln() - q * q.ln()) / (1.0 - q)
    }
}
