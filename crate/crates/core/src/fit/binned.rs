//! Likelihood fits to integer money histograms, where balance `m` is read as
//! the interval `[m, m+1)` above the histogram floor.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::measures::{Binning, DistributionEstimate};
use crate::stats::ks_pvalue;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedFit {
    pub shape: f64,
    pub scale: f64,
    pub log_likelihood: f64,
    /// Observations inside the fitted window.
    pub n: u64,
}

fn golden(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-9 {
            break;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// `(left offset, right offset, count)` for the regular bins that end at or
/// before `floor + window`.
fn window_bins(est: &DistributionEstimate, floor: i64, window: i64) -> Vec<(f64, f64, f64)> {
    est.bins()
        .filter(|b| b.count > 0 && b.lo >= floor && b.hi <= floor + window)
        .map(|b| ((b.lo - floor) as f64, (b.hi - floor) as f64, b.count as f64))
        .collect()
}

fn gamma_ll(bins: &[(f64, f64, f64)], window: f64, shape: f64, scale: f64) -> f64 {
    let cdf = |x: f64| gamma_lr(shape, x / scale);
    let norm = cdf(window);
    if !(norm > 0.0) {
        return f64::NEG_INFINITY;
    }
    bins.iter()
        .map(|&(lo, hi, n)| {
            let p = if lo == 0.0 { cdf(hi) } else { cdf(hi) - cdf(lo) };
            n * (p / norm).max(1e-300).ln()
        })
        .sum()
}

fn check_window(est: &DistributionEstimate, floor: i64, window: i64) -> Result<Vec<(f64, f64, f64)>> {
    if window < 2 {
        return Err(Error::Fit(format!("fit window must span at least 2 units, got {window}")));
    }
    let bins = window_bins(est, floor, window);
    if bins.len() < 2 {
        return Err(Error::Fit("fewer than two occupied bins inside the fit window".into()));
    }
    Ok(bins)
}

/// Gamma law truncated to `[floor, floor + window)`, fitted by maximum
/// likelihood on the binned counts.
pub fn fit_truncated_gamma(est: &DistributionEstimate, floor: i64, window: i64) -> Result<BinnedFit> {
    let bins = check_window(est, floor, window)?;
    let w = window as f64;
    let n: f64 = bins.iter().map(|b| b.2).sum();
    let mean = bins.iter().map(|b| b.2 * 0.5 * (b.0 + b.1)).sum::<f64>() / n;
    let best_scale = |k: f64| {
        let guess = (mean / k).ln();
        golden(guess - 4.0, guess + 4.0, |ls| gamma_ll(&bins, w, k, ls.exp()))
    };
    let (lk, ll) = golden((0.05f64).ln(), (500f64).ln(), |lk| best_scale(lk.exp()).1);
    let shape = lk.exp();
    Ok(BinnedFit {
        shape,
        scale: best_scale(shape).0.exp(),
        log_likelihood: ll,
        n: n as u64,
    })
}

/// Exponential (shape one) law truncated to the same window.
pub fn fit_truncated_exponential(
    est: &DistributionEstimate,
    floor: i64,
    window: i64,
) -> Result<BinnedFit> {
    let bins = check_window(est, floor, window)?;
    let w = window as f64;
    let n: f64 = bins.iter().map(|b| b.2).sum();
    let (ls, ll) = golden((1e-3 * w).ln(), (1e4 * w).ln(), |ls| gamma_ll(&bins, w, 1.0, ls.exp()));
    Ok(BinnedFit {
        shape: 1.0,
        scale: ls.exp(),
        log_likelihood: ll,
        n: n as u64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRatio {
    pub gamma: BinnedFit,
    pub exponential: BinnedFit,
    /// `2 (LL_gamma - LL_exp)`, chi-squared with one degree of freedom
    /// under the exponential.
    pub statistic: f64,
}

pub fn gamma_vs_exponential(
    est: &DistributionEstimate,
    floor: i64,
    window: i64,
) -> Result<LikelihoodRatio> {
    let gamma = fit_truncated_gamma(est, floor, window)?;
    let exponential = fit_truncated_exponential(est, floor, window)?;
    Ok(LikelihoodRatio {
        gamma,
        exponential,
        statistic: 2.0 * (gamma.log_likelihood - exponential.log_likelihood),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailTest {
    pub start: i64,
    pub n: u64,
    /// Mean excess above `start`.
    pub mean_excess: f64,
    pub ks: f64,
    pub p_value: f64,
}

/// Compares the excess `m - start` of balances `m >= start` with the
/// mean-matched geometric law.
pub fn tail_exponential_test(values: &[i64], start: i64) -> Result<TailTest> {
    let excess: Vec<i64> = values.iter().filter(|&&v| v >= start).map(|&v| v - start).collect();
    if excess.len() < 2 {
        return Err(Error::Fit(format!("fewer than two balances at or above {start}")));
    }
    let h = DistributionEstimate::from_values(&excess, Binning::unit())?;
    let ks = h
        .ks_to_exponential(0)
        .ok_or_else(|| Error::Fit("tail has no finite mean".into()))?;
    let n = excess.len() as u64;
    Ok(TailTest {
        start,
        n,
        mean_excess: h.mean,
        ks,
        p_value: ks_pvalue(n as f64, ks),
    })
}

/// KS distance of a histogram to the mean-matched lattice exponential and
/// its p-value on `n` observations.
pub fn exponential_ks_test(est: &DistributionEstimate, floor: i64) -> Option<(f64, f64)> {
    let d = est.ks_to_exponential(floor)?;
    Some((d, ks_pvalue(est.population as f64, d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Gamma};

    fn histogram(values: Vec<f64>) -> (Vec<i64>, DistributionEstimate) {
        let v: Vec<i64> = values.into_iter().map(|x| x.floor() as i64).collect();
        let h = DistributionEstimate::from_values(&v, Binning::unit()).unwrap();
        (v, h)
    }

    #[test]
    fn gamma_is_recovered_and_beats_exponential() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let d = Gamma::new(3.0, 4.0).unwrap();
        let (_, h) = histogram((0..50_000).map(|_| d.sample(&mut rng)).collect());
        let lr = gamma_vs_exponential(&h, 0, 36).unwrap();
        assert!((lr.gamma.shape / 3.0 - 1.0).abs() < 0.05, "{lr:?}");
        assert!((lr.gamma.scale / 4.0 - 1.0).abs() < 0.05, "{lr:?}");
        assert!(lr.statistic > 100.0);
    }

    #[test]
    fn exponential_data_gives_no_gamma_advantage() {
        let (v, h) = histogram(crate::fit::synthetic_exponential(50_000, 10.0, 6));
        let lr = gamma_vs_exponential(&h, 0, 30).unwrap();
        assert!((lr.gamma.shape - 1.0).abs() < 0.05, "{lr:?}");
        assert!(lr.statistic < 10.0, "{lr:?}");
        assert!((lr.exponential.scale / 10.0 - 1.0).abs() < 0.03);
        let tail = tail_exponential_test(&v, 30).unwrap();
        assert!(tail.p_value > 0.01, "{tail:?}");
    }

    #[test]
    fn tail_test_measures_excess() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let d = Gamma::new(2.0, 5.0).unwrap();
        let (v, _) = histogram((0..20_000).map(|_| d.sample(&mut rng)).collect());
        let t = tail_exponential_test(&v, 10).unwrap();
        assert!(t.mean_excess > 5.0);
        assert!(tail_exponential_test(&v, 10_000).is_err());
    }
}
