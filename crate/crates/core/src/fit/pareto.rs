use rand::SeedableRng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};

use super::WeightedSample;
use crate::error::{Error, Result};
use crate::stats::{ks_pvalue, weighted_ks};

pub const MIN_TAIL_POINTS: f64 = 100.0;
/// Below this KS p-value the power law is rejected for the tail.
pub const POOR_FIT_P: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Threshold at a quantile of the whole sample.
    Quantile { q: f64 },
    Fixed { r_star: f64 },
    /// Threshold minimizing the tail KS distance over a quantile grid, keeping
    /// at least `min_tail` weight above it.
    KsScan { min_tail: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Quantile { q: 0.99 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFit {
    pub alpha: f64,
    pub r_star: f64,
    /// Weight strictly above `r_star`.
    pub n_tail: f64,
    pub ks: f64,
    pub p_value: f64,
    /// The tail is not consistent with a power law.
    pub poor: bool,
}

/// Hill estimator on the points above `r_star`.
pub fn hill(sample: &WeightedSample, r_star: f64) -> Result<ParetoFit> {
    if !(r_star > 0.0) {
        return Err(Error::Fit(format!("power-law threshold must be positive, got {r_star}")));
    }
    let tail = sample.above(r_star);
    let n: f64 = tail.iter().map(|p| p.1).sum();
    if n < MIN_TAIL_POINTS {
        return Err(Error::Fit(format!(
            "power-law fit needs at least {MIN_TAIL_POINTS} points above {r_star}, got {n}"
        )));
    }
    let s: f64 = tail.iter().map(|&(x, w)| w * (x / r_star).ln()).sum();
    let alpha = n / s;
    let ks = weighted_ks(tail, |x| 1.0 - (r_star / x).powf(alpha));
    let p_value = ks_pvalue(n, ks);
    Ok(ParetoFit {
        alpha,
        r_star,
        n_tail: n,
        ks,
        p_value,
        poor: p_value < POOR_FIT_P,
    })
}

pub fn fit_pareto_tail(sample: &WeightedSample, policy: ThresholdPolicy) -> Result<ParetoFit> {
    match policy {
        ThresholdPolicy::Fixed { r_star } => hill(sample, r_star),
        ThresholdPolicy::Quantile { q } => {
            if !(0.0..1.0).contains(&q) {
                return Err(Error::Fit(format!("threshold quantile must lie in [0, 1), got {q}")));
            }
            hill(sample, sample.quantile(q))
        }
        ThresholdPolicy::KsScan { min_tail } => {
            let min_tail = min_tail.max(MIN_TAIL_POINTS);
            let mut best: Option<ParetoFit> = None;
            for k in 0..=98 {
                let r = sample.quantile(0.5 + 0.005 * k as f64);
                if sample.weight_above(r) < min_tail {
                    break;
                }
                if let Ok(fit) = hill(sample, r) {
                    if best.is_none_or(|b| fit.ks < b.ks) {
                        best = Some(fit);
                    }
                }
            }
            best.ok_or_else(|| {
                Error::Fit(format!("no threshold leaves {min_tail} points in the tail"))
            })
        }
    }
}

pub fn synthetic_pareto(n: usize, scale: f64, alpha: f64, seed: u64) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = Pareto::new(scale, alpha).expect("positive parameters");
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::synthetic_exponential;

    #[test]
    fn generator_round_trip() {
        let s = WeightedSample::from_values(&synthetic_pareto(10_000, 100.0, 2.0, 1)).unwrap();
        let fit = fit_pareto_tail(&s, ThresholdPolicy::Fixed { r_star: 100.0 }).unwrap();
        assert!((1.94..=2.06).contains(&fit.alpha), "{fit:?}");
        assert!(!fit.poor);
        let scan = fit_pareto_tail(&s, ThresholdPolicy::KsScan { min_tail: 500.0 }).unwrap();
        assert!((scan.alpha - 2.0).abs() < 0.2, "{scan:?}");
    }

    #[test]
    fn exponential_tail_is_flagged() {
        let s = WeightedSample::from_values(&synthetic_exponential(100_000, 10.0, 2)).unwrap();
        // Far out, an exponential tail over a short range mimics a power law;
        // the rejection needs the tail to span a few decay lengths.
        let fit = fit_pareto_tail(&s, ThresholdPolicy::Quantile { q: 0.9 }).unwrap();
        assert!(fit.poor, "{fit:?}");
    }

    #[test]
    fn rescaling_leaves_alpha_unchanged() {
        let raw = synthetic_pareto(5_000, 1.0, 1.5, 9);
        let s = WeightedSample::from_values(&raw).unwrap();
        let a = fit_pareto_tail(&s, ThresholdPolicy::Fixed { r_star: 2.0 }).unwrap();
        let b = fit_pareto_tail(&s.scaled(10.0).unwrap(), ThresholdPolicy::Fixed { r_star: 20.0 })
            .unwrap();
        assert!((a.alpha - b.alpha).abs() < 1e-9 * a.alpha);
        let q = fit_pareto_tail(&s.scaled(10.0).unwrap(), ThresholdPolicy::Quantile { q: 0.9 }).unwrap();
        let q0 = fit_pareto_tail(&s, ThresholdPolicy::Quantile { q: 0.9 }).unwrap();
        assert!((q.alpha - q0.alpha).abs() < 1e-9 * q0.alpha);
        assert!((q.r_star - 10.0 * q0.r_star).abs() < 1e-9 * q.r_star);
    }

    #[test]
    fn thin_tail_is_an_error() {
        let s = WeightedSample::from_values(&synthetic_pareto(150, 1.0, 2.0, 4)).unwrap();
        let err = fit_pareto_tail(&s, ThresholdPolicy::default()).unwrap_err();
        assert!(err.to_string().contains("at least"));
    }
}
