//! Mutual-credit (LETS) ledger with signed balances summing to zero.

use serde::{Deserialize, Serialize};

use crate::ensemble::{AgentId, Bounds, Ensemble, Rejection, TransferOutcome};
use crate::error::{config, usage, Result};
use crate::money::MoneyAmount;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LetsLedger {
    balances: Vec<MoneyAmount>,
    lower: MoneyAmount,
    upper: Option<MoneyAmount>,
}

impl LetsLedger {
    /// Fresh ledger of `n` zero balances with `lower <= m̃ <= upper`.
    pub fn new(n: usize, lower: MoneyAmount, upper: Option<MoneyAmount>) -> Result<Self> {
        if n == 0 {
            return config("LETS ledger needs at least one member");
        }
        if lower >= MoneyAmount::ZERO {
            return config(format!("LETS lower bound must be negative, got {lower}"));
        }
        if upper.is_some_and(|u| u <= MoneyAmount::ZERO) {
            return config("LETS upper bound must be positive");
        }
        Ok(LetsLedger {
            balances: vec![MoneyAmount::ZERO; n],
            lower,
            upper,
        })
    }

    pub(crate) fn from_parts(
        balances: Vec<MoneyAmount>,
        lower: MoneyAmount,
        upper: Option<MoneyAmount>,
    ) -> Self {
        LetsLedger {
            balances,
            lower,
            upper,
        }
    }

    pub fn population(&self) -> usize {
        self.balances.len()
    }

    pub fn balances(&self) -> &[MoneyAmount] {
        &self.balances
    }

    pub fn lower(&self) -> MoneyAmount {
        self.lower
    }

    pub fn upper(&self) -> Option<MoneyAmount> {
        self.upper
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            min: self.lower,
            max: self.upper,
        }
    }

    pub fn sum(&self) -> MoneyAmount {
        self.balances.iter().sum()
    }

    /// Provider renders a service worth `delta` to the receiver:
    /// `m̃_provider += Δ`, `m̃_receiver -= Δ`.
    pub fn lets_trade(
        &mut self,
        provider: AgentId,
        receiver: AgentId,
        delta: MoneyAmount,
    ) -> Result<TransferOutcome> {
        let n = self.balances.len();
        if provider >= n || receiver >= n {
            return usage(format!("unknown member in ({provider}, {receiver}); size {n}"));
        }
        if provider == receiver {
            return usage("provider and receiver must differ");
        }
        if !delta.is_positive() {
            return usage(format!("service value must be positive, got {delta}"));
        }
        if self.balances[receiver] - delta < self.lower {
            return Ok(TransferOutcome::Rejected(Rejection::PayerAtLowerBound));
        }
        if self.upper.is_some_and(|u| self.balances[provider] + delta > u) {
            return Ok(TransferOutcome::Rejected(Rejection::PayeeAtUpperBound));
        }
        self.balances[provider] += delta;
        self.balances[receiver] -= delta;
        Ok(TransferOutcome::Applied)
    }

    /// Converts to positive money `m_i = m̃_i - m̃_min` held under the usual
    /// `m >= 0` bound. The new total is `N |m̃_min|`, logged as genesis.
    pub fn lets_shift(&self) -> Result<Ensemble> {
        let shifted = self.balances.iter().map(|&b| b - self.lower).collect();
        Ensemble::from_balances(shifted, Bounds::default())
    }
}
