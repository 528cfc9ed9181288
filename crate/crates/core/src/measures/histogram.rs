use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::money::MoneyAmount;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Nonnegative,
    Signed,
}

/// How balances are coarse-grained into bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binning {
    /// Left edge of the first regular bin. `None` starts at the smallest
    /// observed value rounded down to a multiple of the width.
    pub lo: Option<i64>,
    pub width: i64,
    /// Exclusive right edge of the last regular bin; values at or above it
    /// go to the overflow bin. `None` covers the observed maximum.
    pub cap: Option<i64>,
}

impl Binning {
    pub fn unit() -> Self {
        Binning {
            lo: Some(0),
            width: 1,
            cap: None,
        }
    }

    /// Default money binning: width-1 bins on `[0, 20 T_m)`, overflow beyond.
    pub fn for_temperature(temperature: f64) -> Self {
        let cap = (20.0 * temperature).ceil().max(1.0) as i64;
        Binning {
            lo: Some(0),
            width: 1,
            cap: Some(cap),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: i64,
    pub hi: i64,
    pub count: u64,
}

/// Histogram of one snapshot plus its exact moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionEstimate {
    pub lo: i64,
    pub bin_width: i64,
    pub counts: Vec<u64>,
    pub overflow: u64,
    pub population: u64,
    pub support: Support,
    pub mean: f64,
    pub variance: f64,
    pub min: i64,
    pub max: i64,
}

impl DistributionEstimate {
    pub fn from_money(values: &[MoneyAmount], binning: Binning) -> Result<Self> {
        let raw: Vec<i64> = values.iter().map(|m| m.0).collect();
        Self::from_values(&raw, binning)
    }

    pub fn from_values(values: &[i64], binning: Binning) -> Result<Self> {
        if values.is_empty() {
            return usage("cannot build a histogram from no values");
        }
        if binning.width < 1 {
            return usage(format!("bin width must be at least 1, got {}", binning.width));
        }
        let min = *values.iter().min().unwrap();
        let max = *values.iter().max().unwrap();
        let w = binning.width;
        let lo = binning.lo.unwrap_or_else(|| min.div_euclid(w) * w);
        if min < lo {
            return usage(format!("value {min} lies below the first bin edge {lo}"));
        }
        let cap = match binning.cap {
            Some(c) if c <= lo => return usage(format!("histogram cap {c} must exceed {lo}")),
            Some(c) => lo + (c - lo + w - 1) / w * w,
            None => lo + ((max - lo) / w + 1) * w,
        };
        let nbins = ((cap - lo) / w) as usize;
        let mut counts = vec![0u64; nbins];
        let mut overflow = 0;
        for &v in values {
            if v >= cap {
                overflow += 1;
            } else {
                counts[((v - lo) / w) as usize] += 1;
            }
        }
        let (mean, variance) = stats::mean_variance_i64(values);
        Ok(DistributionEstimate {
            lo,
            bin_width: w,
            counts,
            overflow,
            population: values.len() as u64,
            support: if min < 0 || lo < 0 {
                Support::Signed
            } else {
                Support::Nonnegative
            },
            mean,
            variance,
            min,
            max,
        })
    }

    pub fn bins(&self) -> impl Iterator<Item = Bin> + '_ {
        self.counts.iter().enumerate().map(move |(k, &count)| {
            let lo = self.lo + k as i64 * self.bin_width;
            Bin {
                lo,
                hi: lo + self.bin_width,
                count,
            }
        })
    }

    /// Exclusive right edge of the regular bins.
    pub fn cap(&self) -> i64 {
        self.lo + self.counts.len() as i64 * self.bin_width
    }

    /// Regular-bin counts followed by the overflow count.
    pub fn all_counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.counts.iter().copied().chain(std::iter::once(self.overflow))
    }

    pub fn occupied_bins(&self) -> usize {
        self.all_counts().filter(|&c| c > 0).count()
    }

    /// Adds another histogram with identical binning; moments are pooled.
    pub fn merge(&mut self, other: &DistributionEstimate) -> Result<()> {
        if self.lo != other.lo
            || self.bin_width != other.bin_width
            || self.counts.len() != other.counts.len()
        {
            return Err(Error::Usage("cannot merge histograms with different binning".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        let (n1, n2) = (self.population as f64, other.population as f64);
        let n = n1 + n2;
        let mean = (n1 * self.mean + n2 * other.mean) / n;
        let m2 = n1 * (self.variance + (self.mean - mean).powi(2))
            + n2 * (other.variance + (other.mean - mean).powi(2));
        self.population += other.population;
        self.mean = mean;
        self.variance = m2 / n;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        if other.support == Support::Signed {
            self.support = Support::Signed;
        }
        Ok(())
    }

    /// Empirical CDF at every right bin edge: `P(X < hi)`.
    pub fn cdf_at_edges(&self) -> Vec<(i64, f64)> {
        let n = self.population as f64;
        let mut acc = 0u64;
        self.bins()
            .map(|b| {
                acc += b.count;
                (b.hi, acc as f64 / n)
            })
            .collect()
    }

    /// Kolmogorov-Smirnov distance, taken over bin edges, between this
    /// histogram and the lattice Boltzmann-Gibbs law `P(m) ∝ e^{-(m-lower)/T}`
    /// on integers `m >= lower` with the same mean as the data.
    pub fn ks_to_exponential(&self, lower: i64) -> Option<f64> {
        let dist = stats::LatticeExponential::with_mean(lower, self.mean)?;
        Some(self.ks_to_cdf(|edge| dist.cdf_below(edge)))
    }

    /// KS distance over bin edges against `cdf(edge) = P(X < edge)`.
    pub fn ks_to_cdf(&self, cdf: impl Fn(i64) -> f64) -> f64 {
        let mut d = (cdf(self.lo)).abs();
        for (edge, f) in self.cdf_at_edges() {
            d = d.max((f - cdf(edge)).abs());
        }
        d
    }

    /// Two-sample KS distance between histograms with identical binning.
    pub fn ks_between(&self, other: &DistributionEstimate) -> Result<f64> {
        if self.lo != other.lo || self.bin_width != other.bin_width {
            return usage("KS between histograms needs identical bin edges");
        }
        let a = self.cdf_at_edges();
        let b = other.cdf_at_edges();
        let len = a.len().max(b.len());
        let mut d: f64 = 0.0;
        for k in 0..len {
            let fa = a.get(k).map_or(1.0 - self.overflow as f64 / self.population as f64, |x| x.1);
            let fb = b
                .get(k)
                .map_or(1.0 - other.overflow as f64 / other.population as f64, |x| x.1);
            d = d.max((fa - fb).abs());
        }
        Ok(d)
    }

    /// Log-likelihood of the binned data under a model with `cdf(x) = P(X < x)`,
    /// where bin `[lo, hi)` holds the integers `lo..hi`, so its mass is
    /// `cdf(hi - 0.5) - cdf(lo - 0.5)`. The overflow bin takes the rest.
    pub fn binned_log_likelihood(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        const FLOOR: f64 = 1e-300;
        let mut ll = 0.0;
        for b in self.bins().filter(|b| b.count > 0) {
            let p = cdf(b.hi as f64 - 0.5) - cdf(b.lo as f64 - 0.5);
            ll += b.count as f64 * p.max(FLOOR).ln();
        }
        if self.overflow > 0 {
            let p = 1.0 - cdf(self.cap() as f64 - 0.5);
            ll += self.overflow as f64 * p.max(FLOOR).ln();
        }
        ll
    }

    /// Log-likelihood advantage of the moment-matched Gaussian over the
    /// moment-matched lattice exponential rooted at `lower`. Positive values
    /// mean the Gaussian describes the snapshot better.
    pub fn gaussian_vs_exponential(&self, lower: i64) -> f64 {
        let mu = self.mean;
        let sigma = self.variance.sqrt().max(1e-9);
        let gauss = self.binned_log_likelihood(|x| stats::normal_cdf((x - mu) / sigma));
        let exp = match stats::LatticeExponential::with_mean(lower, self.mean) {
            Some(g) => self.binned_log_likelihood(|x| g.cdf_below(x.ceil() as i64)),
            None => f64::NEG_INFINITY,
        };
        gauss - exp
    }

    /// Probability mass per regular bin (overflow excluded).
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.population as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}
