use serde::{Deserialize, Serialize};

use super::exponential::truncated_exponential_scale;
use super::pareto::{fit_pareto_tail, ParetoFit, ThresholdPolicy};
use super::WeightedSample;
use crate::error::{Error, Result};
use crate::stats::{ks_pvalue, weighted_ks};

pub const MIN_TWO_CLASS_POINTS: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrossoverPolicy {
    /// First point where `ln(S_emp / S_exp)` exceeds `nats`, with `S_exp`
    /// from an exponential fitted to the lower `bulk_quantile` of the data.
    LogRatio { bulk_quantile: f64, nats: f64 },
    /// Crossover minimizing the KS distance of the truncated exponential
    /// below it, on a quantile grid.
    KsScan,
}

impl Default for CrossoverPolicy {
    fn default() -> Self {
        CrossoverPolicy::LogRatio {
            bulk_quantile: 0.95,
            nats: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoClassOptions {
    pub crossover: CrossoverPolicy,
    /// Fit `T` accounting for the truncation at `r*`; otherwise `T` is the
    /// plain mean below `r*`.
    pub truncated: bool,
    pub tail: ThresholdPolicy,
    /// Weight that must remain above a candidate crossover.
    pub min_tail: f64,
}

impl Default for TwoClassOptions {
    fn default() -> Self {
        TwoClassOptions {
            crossover: CrossoverPolicy::default(),
            truncated: true,
            tail: ThresholdPolicy::default(),
            min_tail: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoClassDiagnostics {
    pub n: f64,
    pub mean: f64,
    /// Weight at or below `r*`.
    pub n_lower: f64,
    pub bulk_ks: f64,
    pub bulk_p: f64,
    /// Plain mean below `r*`, the estimate that ignores truncation.
    pub untruncated_temperature: f64,
    pub crossover_found: bool,
    pub tail: Option<ParetoFit>,
    /// Why the tail fit failed, when it did.
    pub tail_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoClassFit {
    #[serde(rename = "T")]
    pub temperature: f64,
    pub alpha: f64,
    pub r_star: f64,
    pub f: f64,
    #[serde(rename = "G_pred")]
    pub g_pred: f64,
    #[serde(rename = "G_empirical")]
    pub g_empirical: f64,
    pub diagnostics: TwoClassDiagnostics,
}

fn lower_temperature(sample: &WeightedSample, r: f64, truncated: bool) -> Result<(f64, f64)> {
    let lower = sample.below_or_at(r);
    let (sw, sx) = lower.iter().fold((0.0, 0.0), |(a, b), &(x, w)| (a + w, b + w * x));
    if sw == 0.0 {
        return Err(Error::Fit(format!("no observations below the crossover {r}")));
    }
    let plain = sx / sw;
    // Nothing is cut off when the crossover is the sample maximum.
    let t = if truncated && r < sample.max() {
        truncated_exponential_scale(plain, r)?
    } else {
        plain
    };
    Ok((t, plain))
}

fn bulk_ks(sample: &WeightedSample, r: f64, t: f64) -> (f64, f64) {
    let lower = sample.below_or_at(r);
    let n: f64 = lower.iter().map(|p| p.1).sum();
    let norm = -(-r / t).exp_m1();
    let d = weighted_ks(lower, |x| -(-x / t).exp_m1() / norm);
    (d, ks_pvalue(n, d))
}

fn crossover(sample: &WeightedSample, opts: &TwoClassOptions) -> Result<Option<f64>> {
    let total = sample.total_weight();
    match opts.crossover {
        CrossoverPolicy::LogRatio { bulk_quantile, nats } => {
            let q = sample.quantile(bulk_quantile);
            let (t0, _) = lower_temperature(sample, q, true)?;
            let mut above = total;
            for &(x, w) in sample.points() {
                above -= w;
                if above < opts.min_tail {
                    break;
                }
                // S_emp(x) = P(X > x) against e^{-x/T}.
                let ratio = (above / total).ln() + x / t0;
                if ratio > nats {
                    return Ok(Some(x));
                }
            }
            Ok(None)
        }
        CrossoverPolicy::KsScan => {
            let mut best: Option<(f64, f64)> = None;
            for k in 0..=45 {
                let r = sample.quantile(0.5 + 0.01 * k as f64);
                if sample.weight_above(r) < opts.min_tail {
                    break;
                }
                if let Ok((t, _)) = lower_temperature(sample, r, true) {
                    let (d, _) = bulk_ks(sample, r, t);
                    if best.is_none_or(|b| d < b.1) {
                        best = Some((r, d));
                    }
                }
            }
            Ok(best.map(|b| b.0))
        }
    }
}

/// Splits an income sample into an exponential lower class and a power-law
/// upper class, and derives `f = 1 - T/<r>` and `G_pred = (1 + f)/2`.
pub fn two_class_decompose(sample: &WeightedSample, opts: &TwoClassOptions) -> Result<TwoClassFit> {
    let n = sample.total_weight();
    if n < MIN_TWO_CLASS_POINTS {
        return Err(Error::Fit(format!(
            "two-class decomposition needs at least {MIN_TWO_CLASS_POINTS} points, got {n}"
        )));
    }
    if sample.is_degenerate() {
        return Err(Error::Fit(format!("all incomes equal {}: degenerate sample", sample.min())));
    }
    let found = crossover(sample, opts)?;
    let r_star = found.unwrap_or(sample.max());
    let (t, plain) = lower_temperature(sample, r_star, opts.truncated)?;
    let (bulk_ks, bulk_p) = bulk_ks(sample, r_star, t);
    let (tail, tail_error) = match fit_pareto_tail(sample, opts.tail) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mean = sample.mean();
    let f = 1.0 - t / mean;
    Ok(TwoClassFit {
        temperature: t,
        alpha: tail.map_or(f64::NAN, |p| p.alpha),
        r_star,
        f,
        g_pred: (1.0 + f) / 2.0,
        g_empirical: sample.gini()?,
        diagnostics: TwoClassDiagnostics {
            n,
            mean,
            n_lower: n - sample.weight_above(r_star),
            bulk_ks,
            bulk_p,
            untruncated_temperature: plain,
            crossover_found: found.is_some(),
            tail,
            tail_error,
        },
    })
}

/// Mixture of an exponential lower class and a power-law upper class: a
/// fraction `upper` of the points is drawn from `Pareto(scale, alpha)`.
pub fn synthetic_mixture(
    n: usize,
    temperature: f64,
    upper: f64,
    scale: f64,
    alpha: f64,
    seed: u64,
) -> Vec<f64> {
    let n_up = (upper * n as f64).round() as usize;
    let mut v = super::synthetic_exponential(n - n_up, temperature, seed);
    v.extend(super::synthetic_pareto(n_up, scale, alpha, seed.wrapping_add(1)));
    v
}

/// Groups a sample into an `income,weight` bracket table with brackets of
/// `width`, each represented by its weighted mean income.
pub fn bracket(sample: &WeightedSample, width: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for &(x, w) in sample.points() {
        let k = (x / width).floor();
        match out.last_mut() {
            Some(last) if last.0 == k => {
                last.1 += w * x;
                last.2 += w;
            }
            _ => out.push((k, w * x, w)),
        }
    }
    out.into_iter().map(|(_, sx, w)| (sx / w, w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::synthetic_exponential;

    #[test]
    fn pure_exponential_has_no_upper_class() {
        let s = WeightedSample::from_values(&synthetic_exponential(100_000, 30.0, 11)).unwrap();
        let fit = two_class_decompose(&s, &TwoClassOptions::default()).unwrap();
        assert!(fit.f.abs() < 0.02, "{fit:?}");
        assert!((fit.g_pred - 0.5).abs() < 0.01);
        assert!((fit.g_empirical - 0.5).abs() < 0.01);
        assert_eq!(fit.g_pred, (1.0 + fit.f) / 2.0);
        assert_eq!(fit.f, 1.0 - fit.temperature / fit.diagnostics.mean);
    }

    #[test]
    fn mixture_parameters_are_recovered() {
        let raw = synthetic_mixture(100_000, 30.0, 0.03, 150.0, 2.0, 5);
        let s = WeightedSample::from_values(&raw).unwrap();
        let fit = two_class_decompose(&s, &TwoClassOptions::default()).unwrap();
        assert!(fit.diagnostics.crossover_found);
        assert!((fit.temperature / 30.0 - 1.0).abs() < 0.05, "{fit:?}");
        assert!((fit.alpha / 2.0 - 1.0).abs() < 0.1, "{fit:?}");
        assert!(fit.f > 0.1);
    }

    #[test]
    fn scaling_is_covariant() {
        let raw = synthetic_mixture(20_000, 30.0, 0.03, 150.0, 2.0, 8);
        let s = WeightedSample::from_values(&raw).unwrap();
        let a = two_class_decompose(&s, &TwoClassOptions::default()).unwrap();
        let b = two_class_decompose(&s.scaled(7.0).unwrap(), &TwoClassOptions::default()).unwrap();
        assert!((b.temperature / a.temperature - 7.0).abs() < 1e-6);
        assert!((b.r_star / a.r_star - 7.0).abs() < 1e-9);
        assert!((b.f - a.f).abs() < 1e-6);
        assert!((b.alpha - a.alpha).abs() < 1e-6);
        assert!((b.g_empirical - a.g_empirical).abs() < 1e-9);
    }

    #[test]
    fn bracketed_table_round_trip() {
        let raw = synthetic_mixture(100_000, 30.0, 0.03, 150.0, 2.0, 21);
        let s = WeightedSample::from_values(&raw).unwrap();
        let table = WeightedSample::from_weighted(bracket(&s, 1.0)).unwrap();
        assert!(table.points().len() < 5_000);
        let fit = two_class_decompose(&table, &TwoClassOptions::default()).unwrap();
        assert!((fit.temperature / 30.0 - 1.0).abs() < 0.05, "{fit:?}");
        assert!((fit.alpha / 2.0 - 1.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn small_samples_are_rejected() {
        let s = WeightedSample::from_values(&synthetic_exponential(500, 1.0, 1)).unwrap();
        assert!(two_class_decompose(&s, &TwoClassOptions::default()).is_err());
    }
}
