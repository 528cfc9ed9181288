use rand::SeedableRng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::WeightedSample;
use crate::error::{Error, Result};
use crate::measures::DistributionEstimate;
use crate::rng::replica_rng;
use crate::stats::linear_fit;

pub const MIN_EXPONENTIAL_POINTS: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialOptions {
    /// Fit only `x <= truncate_at`, accounting for the truncation.
    pub truncate_at: Option<f64>,
    /// Bootstrap replicates for the interval; `0` uses the asymptotic one.
    pub bootstrap: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for ExponentialOptions {
    fn default() -> Self {
        ExponentialOptions {
            truncate_at: None,
            bootstrap: 200,
            confidence: 0.95,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLinearFit {
    /// Slope of `ln(count)` against money.
    pub slope: f64,
    /// `-1/slope`, the decay scale of a continuous exponential.
    pub temperature: f64,
    /// Mean of the geometric law with ratio `e^{slope}` per unit, i.e. the
    /// temperature as measured on the integer lattice.
    pub lattice_mean: f64,
    pub r_squared: f64,
    pub bins_used: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub temperature: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Total weight entering the fit.
    pub n: f64,
    pub truncated_at: Option<f64>,
    pub log_linear: Option<LogLinearFit>,
}

/// Scale of an exponential truncated to `[0, r]` whose conditional mean is
/// `mean`: solves `mean = T - r/(e^{r/T} - 1)`.
pub fn truncated_exponential_scale(mean: f64, r: f64) -> Result<f64> {
    if !(mean > 0.0) || !(r > 0.0) {
        return Err(Error::Fit(format!(
            "truncated exponential needs positive mean and cutoff, got {mean} and {r}"
        )));
    }
    if mean >= r / 2.0 {
        return Err(Error::Fit(format!(
            "mean {mean} on [0, {r}] is not below r/2: data are not decaying, no finite scale"
        )));
    }
    let g = |t: f64| {
        let u = r / t;
        // T - r/(e^u - 1), written to stay finite for large u.
        t - r * (-u).exp() / (-(-u).exp_m1())
    };
    // g is increasing in T; bracket in log space.
    let (mut lo, mut hi) = ((mean * 1e-3).ln(), (r * 1e6).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid.exp()) < mean {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

fn point_estimate(points: &[(f64, f64)], truncate_at: Option<f64>) -> Result<f64> {
    let (sw, sx) = points
        .iter()
        .filter(|p| truncate_at.is_none_or(|r| p.0 <= r))
        .fold((0.0, 0.0), |(sw, sx), &(x, w)| (sw + w, sx + w * x));
    if sw == 0.0 {
        return Err(Error::Fit("no observations inside the fit range".into()));
    }
    let mean = sx / sw;
    match truncate_at {
        None if mean > 0.0 => Ok(mean),
        None => Err(Error::Fit("sample mean is zero: no exponential scale".into())),
        Some(r) => truncated_exponential_scale(mean, r),
    }
}

/// Maximum-likelihood exponential scale with a confidence interval.
pub fn fit_exponential(sample: &WeightedSample, opts: &ExponentialOptions) -> Result<ExponentialFit> {
    let points = match opts.truncate_at {
        Some(r) => sample.below_or_at(r),
        None => sample.points(),
    };
    let n: f64 = points.iter().map(|p| p.1).sum();
    if n < MIN_EXPONENTIAL_POINTS {
        return Err(Error::Fit(format!(
            "exponential fit needs at least {MIN_EXPONENTIAL_POINTS} points, got {n}"
        )));
    }
    if points.first().map(|p| p.0) == points.last().map(|p| p.0) {
        return Err(Error::Fit(format!(
            "all {n} observations equal {}: degenerate sample",
            points[0].0
        )));
    }
    let t = point_estimate(points, opts.truncate_at)?;
    let alpha = (1.0 - opts.confidence) / 2.0;
    let (ci_low, ci_high) = if opts.bootstrap == 0 {
        // Var(T̂) ≈ T²/n for the untruncated MLE.
        let z = normal_quantile(1.0 - alpha);
        (t * (1.0 - z / n.sqrt()), t * (1.0 + z / n.sqrt()))
    } else {
        let mut reps = bootstrap(points, opts, |p| point_estimate(p, opts.truncate_at));
        reps.sort_by(f64::total_cmp);
        if reps.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let at = |q: f64| reps[((q * reps.len() as f64) as usize).min(reps.len() - 1)];
            (at(alpha), at(1.0 - alpha))
        }
    };
    Ok(ExponentialFit {
        temperature: t,
        ci_low,
        ci_high,
        n,
        truncated_at: opts.truncate_at,
        log_linear: log_linear_sample(points, t / 4.0, opts.truncate_at),
    })
}

/// Poisson bootstrap: each point's weight is redrawn as `Poisson(weight)`.
fn bootstrap(
    points: &[(f64, f64)],
    opts: &ExponentialOptions,
    estimate: impl Fn(&[(f64, f64)]) -> Result<f64>,
) -> Vec<f64> {
    let mut scratch = points.to_vec();
    let mut out = Vec::with_capacity(opts.bootstrap);
    for b in 0..opts.bootstrap {
        let mut rng = replica_rng(opts.seed, b as u64);
        for (s, p) in scratch.iter_mut().zip(points) {
            s.1 = Poisson::new(p.1).map_or(0.0, |d| d.sample(&mut rng));
        }
        if let Ok(t) = estimate(&scratch) {
            out.push(t);
        }
    }
    out
}

fn normal_quantile(p: f64) -> f64 {
    // Bisection on the CDF; only used for a handful of confidence levels.
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if crate::stats::normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const MIN_BIN_COUNT: f64 = 5.0;

/// Weighted least squares of `ln(count)` against bin position, with counts
/// as weights, over the leading run of bins holding at least five counts.
fn log_linear(bins: impl Iterator<Item = (f64, f64)>) -> Option<LogLinearFit> {
    let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for (pos, count) in bins {
        if count < MIN_BIN_COUNT {
            break;
        }
        x.push(pos);
        y.push(count.ln());
        w.push(count);
    }
    if x.len() < 3 {
        return None;
    }
    let fit = linear_fit(&x, &y, Some(&w))?;
    if fit.slope >= 0.0 {
        return None;
    }
    let q = fit.slope.exp();
    Some(LogLinearFit {
        slope: fit.slope,
        temperature: -1.0 / fit.slope,
        lattice_mean: q / (1.0 - q),
        r_squared: fit.r_squared,
        bins_used: x.len(),
    })
}

fn log_linear_sample(points: &[(f64, f64)], width: f64, cut: Option<f64>) -> Option<LogLinearFit> {
    if !(width > 0.0) {
        return None;
    }
    let max = cut.unwrap_or(points.last()?.0);
    let nbins = ((max / width).floor() as usize).clamp(1, 100_000);
    let mut counts = vec![0.0; nbins];
    for &(x, w) in points {
        let k = (x / width) as usize;
        if k < nbins {
            counts[k] += w;
        }
    }
    log_linear(counts.into_iter().enumerate().map(|(k, c)| (k as f64 * width, c)))
}

/// Log-linear temperature of a money histogram, measured from its first bin.
pub fn log_linear_temperature(est: &DistributionEstimate) -> Option<LogLinearFit> {
    log_linear(est.bins().map(|b| ((b.lo - est.lo) as f64, b.count as f64)))
}

/// Exponential fit of a money histogram above `floor`: on the integer
/// lattice the maximum-likelihood temperature is the mean excess.
pub fn fit_exponential_histogram(est: &DistributionEstimate, floor: i64) -> Result<ExponentialFit> {
    let n = est.population as f64;
    if n < MIN_EXPONENTIAL_POINTS {
        return Err(Error::Fit(format!(
            "exponential fit needs at least {MIN_EXPONENTIAL_POINTS} points, got {n}"
        )));
    }
    if est.min == est.max {
        return Err(Error::Fit(format!("all {n} balances equal {}: degenerate sample", est.min)));
    }
    if est.min < floor {
        return Err(Error::Fit(format!("balance {} lies below the floor {floor}", est.min)));
    }
    let t = est.mean - floor as f64;
    let se = (est.variance / n).sqrt();
    let z = normal_quantile(0.975);
    Ok(ExponentialFit {
        temperature: t,
        ci_low: t - z * se,
        ci_high: t + z * se,
        n,
        truncated_at: None,
        log_linear: log_linear_temperature(est),
    })
}

/// Draws an exponential sample with the given scale; used by the synthetic
/// round trips.
pub fn synthetic_exponential(n: usize, temperature: f64, seed: u64) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = rand_distr::Exp::new(1.0 / temperature).expect("positive scale");
    (0..n).map(|_| d.sample(&mut rng)).collect()
}
