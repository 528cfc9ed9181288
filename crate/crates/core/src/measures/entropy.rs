use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::histogram::DistributionEstimate;
use crate::error::{usage, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// `-Σ p_k ln p_k` over occupied bins.
    #[default]
    Shannon,
    /// `ln(N! / Π n_k!) / N`, the log-multiplicity per agent.
    Multiplicity,
}

/// Entropy per agent in nats. The overflow bin counts as one more bin.
pub fn entropy(estimate: &DistributionEstimate, mode: EntropyMode) -> Result<f64> {
    if estimate.population == 0 {
        return usage("entropy of an empty histogram");
    }
    let n = estimate.population as f64;
    Ok(match mode {
        EntropyMode::Shannon => shannon_counts(estimate.all_counts(), n),
        EntropyMode::Multiplicity => {
            let mut ln_w = ln_gamma(n + 1.0);
            for c in estimate.all_counts().filter(|&c| c > 1) {
                ln_w -= ln_gamma(c as f64 + 1.0);
            }
            (ln_w / n).max(0.0)
        }
    })
}

pub(crate) fn shannon_counts(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    let s: f64 = counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    s.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::histogram::Binning;
    use crate::stats::LatticeExponential;

    fn est(values: &[i64]) -> DistributionEstimate {
        DistributionEstimate::from_values(values, Binning::unit()).unwrap()
    }

    #[test]
    fn delta_has_zero_entropy() {
        let h = est(&vec![10; 5000]);
        assert_eq!(entropy(&h, EntropyMode::Shannon).unwrap(), 0.0);
        assert!(entropy(&h, EntropyMode::Multiplicity).unwrap().abs() < 1e-9);
    }

    #[test]
    fn two_equal_bins_give_ln2() {
        let h = est(&[0, 0, 1, 1]);
        assert!((entropy(&h, EntropyMode::Shannon).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bounded_by_log_of_occupied_bins() {
        let h = est(&[0, 0, 0, 1, 3, 3, 7, 9, 9, 9, 9]);
        let s = entropy(&h, EntropyMode::Shannon).unwrap();
        assert!(s <= (h.occupied_bins() as f64).ln() + 1e-15);
    }

    #[test]
    fn multiplicity_approaches_shannon() {
        let mut v = Vec::new();
        for (k, c) in [(0, 40_000), (1, 30_000), (2, 20_000), (3, 10_000)] {
            v.extend(std::iter::repeat_n(k, c));
        }
        let h = est(&v);
        let s = entropy(&h, EntropyMode::Shannon).unwrap();
        let w = entropy(&h, EntropyMode::Multiplicity).unwrap();
        let n = h.population as f64;
        assert!(w < s);
        assert!(s - w < 4.0 * n.ln() / n);
    }

    /// Every occupation vector `(n_0, .., n_K)` with `Σ n_k = n` and `Σ k n_k = total`.
    fn occupations(n: u64, total: u64, k: u64, out: &mut Vec<u64>, acc: &mut Vec<Vec<u64>>) {
        if n == 0 {
            if total == 0 {
                acc.push(out.clone());
            }
            return;
        }
        if k > total {
            return;
        }
        for c in 0..=n {
            if c * k > total {
                break;
            }
            out.push(c);
            occupations(n - c, total - c * k, k + 1, out, acc);
            out.pop();
        }
    }

    #[test]
    fn exponential_maximizes_entropy_at_fixed_mean() {
        for (n, total) in [(12u64, 12u64), (10, 20), (16, 8)] {
            let mut all = Vec::new();
            occupations(n, total, 0, &mut Vec::new(), &mut all);
            assert!(!all.is_empty());
            let best = all
                .iter()
                .map(|occ| (shannon_counts(occ.iter().copied(), n as f64), occ))
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            let bound = LatticeExponential::with_mean(0, total as f64 / n as f64)
                .unwrap()
                .entropy();
            // No histogram beats the lattice exponential at the same mean.
            assert!(best.0 <= bound + 1e-12, "{:?}: {} > {bound}", best.1, best.0);
        }
    }
}
