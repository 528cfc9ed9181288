//! Ensemble statistics: histograms, money temperature, entropy, Gini and
//! mark-to-market wealth.

mod entropy;
mod gini;
mod histogram;
mod wealth;

pub use entropy::{entropy, EntropyMode};
pub use gini::{gini, gini_i64, gini_pairwise, gini_sorted, gini_weighted, PAIRWISE_LIMIT};
pub use histogram::{Bin, Binning, DistributionEstimate, Support};
pub use wealth::{wealth, PriceVector};

use crate::ensemble::Ensemble;
use crate::money::MoneyAmount;

/// Money temperature `T_m = M / N` kept as an exact ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Temperature {
    pub total: MoneyAmount,
    pub population: usize,
}

impl Temperature {
    pub fn value(&self) -> f64 {
        self.total.as_f64() / self.population as f64
    }
}

pub fn temperature(ensemble: &Ensemble) -> Temperature {
    Temperature {
        total: ensemble.total_money(),
        population: ensemble.population(),
    }
}
