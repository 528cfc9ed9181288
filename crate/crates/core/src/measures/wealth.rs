use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::ensemble::{AgentState, CommodityId};
use crate::error::{usage, Result};
use crate::money::MoneyAmount;

/// Money price per unit volume of each commodity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceVector {
    prices: BTreeMap<CommodityId, MoneyAmount>,
}

impl PriceVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, commodity: CommodityId, price: MoneyAmount) -> Result<()> {
        if price < MoneyAmount::ZERO {
            return usage(format!("price of commodity {commodity} must be nonnegative"));
        }
        self.prices.insert(commodity, price);
        Ok(())
    }

    pub fn with(mut self, commodity: CommodityId, price: MoneyAmount) -> Result<Self> {
        self.set(commodity, price)?;
        Ok(self)
    }

    pub fn get(&self, commodity: CommodityId) -> Option<MoneyAmount> {
        self.prices.get(&commodity).copied()
    }
}

/// Money plus holdings marked to market, `m + Σ_α p_α v^(α)`.
pub fn wealth(agent: &AgentState, prices: &PriceVector) -> Result<MoneyAmount> {
    let mut w = agent.money;
    for (&c, &v) in &agent.holdings {
        let p = prices
            .get(c)
            .ok_or_else(|| crate::Error::Usage(format!("no price for commodity {c}")))?;
        w += MoneyAmount(p.0 * v as i64);
    }
    Ok(w)
}
