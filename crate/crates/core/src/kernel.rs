//! Transaction rules: how much money changes hands once a (payer, payee)
//! pair has been drawn.
//!
//! Pair selection belongs to the dynamics engine; kernels only pick the
//! amount. The time-reversal class of each family follows from how the
//! transition rate depends on the balances: a rate that depends only on the
//! amount (or on the pooled sum `m + m'`) is symmetric under reversal, a
//! rate proportional to the payer's balance is not.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::money::{MoneyAmount, Rate};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelKind {
    /// Every transaction moves exactly `delta`.
    AdditiveFixed { delta: i64 },
    /// Amount uniform on `1..=max`.
    AdditiveUniform { max: i64 },
    /// The payer hands over `fraction` of its balance.
    Multiplicative { fraction: f64 },
    /// The pair pools its money and splits it uniformly at random.
    RandomSplitPool,
    /// Mutual-credit service worth `delta`, for signed LETS balances.
    LetsService { delta: i64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    TimeReversible,
    NonReversible,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelKind", into = "KernelKind")]
pub struct ExchangeKernel {
    kind: KernelKind,
    fraction: Rate,
    symmetry: Symmetry,
}

impl TryFrom<KernelKind> for ExchangeKernel {
    type Error = Error;
    fn try_from(kind: KernelKind) -> Result<Self> {
        ExchangeKernel::new(kind)
    }
}

impl From<ExchangeKernel> for KernelKind {
    fn from(k: ExchangeKernel) -> Self {
        k.kind
    }
}

impl ExchangeKernel {
    pub fn new(kind: KernelKind) -> Result<Self> {
        let mut fraction = Rate::ZERO;
        match kind {
            KernelKind::AdditiveFixed { delta } | KernelKind::LetsService { delta } => {
                if delta < 1 {
                    return config(format!("kernel amount must be at least 1 unit, got {delta}"));
                }
            }
            KernelKind::AdditiveUniform { max } => {
                if max < 1 {
                    return config(format!("uniform kernel maximum must be at least 1, got {max}"));
                }
            }
            KernelKind::Multiplicative { fraction: f } => {
                if !(f > 0.0 && f < 1.0) {
                    return config(format!("multiplicative fraction must lie in (0, 1), got {f}"));
                }
                fraction = Rate::from_f64(f)?;
            }
            KernelKind::RandomSplitPool => {}
        }
        Ok(ExchangeKernel {
            kind,
            fraction,
            symmetry: classify(kind),
        })
    }

    pub fn additive(delta: i64) -> Self {
        Self::new(KernelKind::AdditiveFixed { delta }).expect("additive amount must be >= 1")
    }

    pub fn multiplicative(fraction: f64) -> Self {
        Self::new(KernelKind::Multiplicative { fraction }).expect("fraction must lie in (0, 1)")
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn classify_symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn is_lets(&self) -> bool {
        matches!(self.kind, KernelKind::LetsService { .. })
    }

    /// Largest amount a single proposal can move, if bounded independently of
    /// the balances.
    pub fn max_step(&self) -> Option<i64> {
        match self.kind {
            KernelKind::AdditiveFixed { delta } | KernelKind::LetsService { delta } => Some(delta),
            KernelKind::AdditiveUniform { max } => Some(max),
            _ => None,
        }
    }

    /// Multiplicative amount: `round_half_even(γ m)`, floored at one unit
    /// when the payer holds anything.
    pub fn multiplicative_amount(&self, payer_money: MoneyAmount) -> MoneyAmount {
        if payer_money <= MoneyAmount::ZERO {
            return MoneyAmount::ZERO;
        }
        let d = self.fraction.apply_half_even(payer_money);
        if d < MoneyAmount(1) {
            MoneyAmount(1)
        } else {
            d
        }
    }

    /// Amount the payer loses. Zero means a no-op event. Only the pooled
    /// split can return a negative amount (the payer gains).
    pub fn propose_delta<R: Rng + ?Sized>(
        &self,
        payer_money: MoneyAmount,
        payee_money: MoneyAmount,
        rng: &mut R,
    ) -> MoneyAmount {
        match self.kind {
            KernelKind::AdditiveFixed { delta } | KernelKind::LetsService { delta } => {
                MoneyAmount(delta)
            }
            KernelKind::AdditiveUniform { max } => MoneyAmount(rng.random_range(1..=max)),
            KernelKind::Multiplicative { .. } => self.multiplicative_amount(payer_money),
            KernelKind::RandomSplitPool => {
                let pool = payer_money + payee_money;
                if pool < MoneyAmount::ZERO {
                    return MoneyAmount::ZERO;
                }
                let keep = rng.random_range(0..=pool.0);
                payer_money - MoneyAmount(keep)
            }
        }
    }

    /// Every `(amount, probability)` the kernel can propose for the given
    /// balances; used by the exact master-equation oracle. Amounts follow the
    /// same sign convention as [`propose_delta`](Self::propose_delta).
    pub fn proposal_distribution(
        &self,
        payer_money: MoneyAmount,
        payee_money: MoneyAmount,
    ) -> Vec<(MoneyAmount, f64)> {
        match self.kind {
            KernelKind::AdditiveFixed { delta } | KernelKind::LetsService { delta } => {
                vec![(MoneyAmount(delta), 1.0)]
            }
            KernelKind::AdditiveUniform { max } => {
                let p = 1.0 / max as f64;
                (1..=max).map(|d| (MoneyAmount(d), p)).collect()
            }
            KernelKind::Multiplicative { .. } => {
                vec![(self.multiplicative_amount(payer_money), 1.0)]
            }
            KernelKind::RandomSplitPool => {
                let pool = payer_money + payee_money;
                if pool < MoneyAmount::ZERO {
                    return vec![(MoneyAmount::ZERO, 1.0)];
                }
                let p = 1.0 / (pool.0 + 1) as f64;
                (0..=pool.0)
                    .map(|keep| (payer_money - MoneyAmount(keep), p))
                    .collect()
            }
        }
    }
}

fn classify(kind: KernelKind) -> Symmetry {
    match kind {
        KernelKind::AdditiveFixed { .. }
        | KernelKind::AdditiveUniform { .. }
        | KernelKind::LetsService { .. }
        | KernelKind::RandomSplitPool => Symmetry::TimeReversible,
        KernelKind::Multiplicative { .. } => Symmetry::NonReversible,
    }
}
