//! Agent ensemble, the global money ledger and its conservation audit.
//!
//! Horizontal transfers move money between agents and never change the
//! ledger total. Vertical flows (the genesis allocation, stimulus, tax) cross
//! the system boundary and are the only way the total can change; each one
//! is appended to the boundary-flux log so the audit can reconcile
//! `Σ m_i == Σ flux` at any time.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::credit::IouId;
use crate::error::{config, usage, Error, Result};
use crate::money::MoneyAmount;

pub type AgentId = usize;
pub type CommodityId = u32;

pub const GENESIS_TAG: &str = "genesis";

/// Inclusive balance bounds `min <= m <= max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    #[serde(default)]
    pub min: MoneyAmount,
    #[serde(default)]
    pub max: Option<MoneyAmount>,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            min: MoneyAmount::ZERO,
            max: None,
        }
    }
}

impl Bounds {
    pub fn new(min: MoneyAmount, max: Option<MoneyAmount>) -> Result<Self> {
        if let Some(max) = max {
            if max <= min {
                return config(format!("upper bound {max} must exceed lower bound {min}"));
            }
        }
        Ok(Bounds { min, max })
    }

    pub fn contains(&self, m: MoneyAmount) -> bool {
        m >= self.min && self.max.is_none_or(|max| m <= max)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub money: MoneyAmount,
    pub holdings: BTreeMap<CommodityId, u64>,
    /// Open IOUs this agent is party to, maintained by the credit layer.
    pub debt_links: Vec<IouId>,
}

impl AgentState {
    fn new(id: AgentId, money: MoneyAmount) -> Self {
        AgentState {
            id,
            money,
            holdings: BTreeMap::new(),
            debt_links: Vec::new(),
        }
    }

    pub fn volume(&self, commodity: CommodityId) -> u64 {
        self.holdings.get(&commodity).copied().unwrap_or(0)
    }
}

/// One boundary crossing. `agent` is `None` for the genesis allocation, which
/// credits every agent at once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FluxEntry {
    pub tick: u64,
    pub agent: Option<AgentId>,
    pub amount: MoneyAmount,
    pub tag: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    PayerAtLowerBound,
    PayeeAtUpperBound,
    DebtLimit,
    NoLender,
    InsufficientFunds,
    InsufficientGoods,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferOutcome {
    Applied,
    Rejected(Rejection),
}

impl TransferOutcome {
    pub fn is_applied(self) -> bool {
        matches!(self, TransferOutcome::Applied)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tick: u64,
    pub passed: bool,
    pub ledger_total: MoneyAmount,
    pub sum_of_balances: MoneyAmount,
    pub flux_total: MoneyAmount,
    pub violations: Vec<String>,
}

/// Accumulates audits taken along a run and remembers the first failing tick.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditTrail {
    pub audits: u64,
    pub first_violation: Option<u64>,
    pub last: Option<AuditReport>,
}

impl AuditTrail {
    pub fn record(&mut self, report: AuditReport) {
        self.audits += 1;
        if !report.passed && self.first_violation.is_none() {
            self.first_violation = Some(report.tick);
        }
        self.last = Some(report);
    }

    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    agents: Vec<AgentState>,
    total_money: MoneyAmount,
    flux_log: Vec<FluxEntry>,
    bounds: Bounds,
    tick: u64,
}

impl Ensemble {
    /// `n` agents holding `per_capita` each, with default bounds `m >= 0`.
    pub fn init_equal(n: usize, per_capita: MoneyAmount) -> Result<Self> {
        if n == 0 {
            return config("population must be at least 1");
        }
        if per_capita < MoneyAmount::ZERO {
            return config(format!("per-capita money must be nonnegative, got {per_capita}"));
        }
        Self::from_balances(vec![per_capita; n], Bounds::default())
    }

    /// Builds an ensemble from explicit balances; the whole allocation is
    /// logged as one genesis flux entry.
    pub fn from_balances(balances: Vec<MoneyAmount>, bounds: Bounds) -> Result<Self> {
        if balances.is_empty() {
            return config("population must be at least 1");
        }
        if let Some(bad) = balances.iter().position(|&m| !bounds.contains(m)) {
            return config(format!(
                "agent {bad} starts at {} outside bounds [{}, {:?}]",
                balances[bad], bounds.min, bounds.max
            ));
        }
        let total: MoneyAmount = balances.iter().sum();
        let agents = balances
            .into_iter()
            .enumerate()
            .map(|(id, m)| AgentState::new(id, m))
            .collect();
        Ok(Ensemble {
            agents,
            total_money: total,
            flux_log: vec![FluxEntry {
                tick: 0,
                agent: None,
                amount: total,
                tag: GENESIS_TAG.to_string(),
            }],
            bounds,
            tick: 0,
        })
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Result<Self> {
        if let Some(bad) = self.agents.iter().find(|a| !bounds.contains(a.money)) {
            return config(format!("agent {} at {} violates new bounds", bad.id, bad.money));
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn population(&self) -> usize {
        self.agents.len()
    }

    pub fn total_money(&self) -> MoneyAmount {
        self.total_money
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn set_tick(&mut self, tick: u64) {
        self.tick = tick;
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agent(&self, id: AgentId) -> Result<&AgentState> {
        self.agents
            .get(id)
            .ok_or_else(|| Error::Usage(format!("unknown agent id {id}")))
    }

    pub(crate) fn agent_mut(&mut self, id: AgentId) -> Result<&mut AgentState> {
        let n = self.agents.len();
        self.agents
            .get_mut(id)
            .ok_or_else(|| Error::Usage(format!("unknown agent id {id} (population {n})")))
    }

    #[inline]
    pub fn money(&self, id: AgentId) -> MoneyAmount {
        self.agents[id].money
    }

    pub fn balances(&self) -> Vec<MoneyAmount> {
        self.agents.iter().map(|a| a.money).collect()
    }

    pub fn flux_log(&self) -> &[FluxEntry] {
        &self.flux_log
    }

    fn check_pair(&self, payer: AgentId, payee: AgentId) -> Result<()> {
        let n = self.agents.len();
        if payer >= n || payee >= n {
            return usage(format!("unknown agent id in pair ({payer}, {payee}); population {n}"));
        }
        if payer == payee {
            return usage(format!("payer and payee are the same agent {payer}"));
        }
        Ok(())
    }

    /// Checks whether `transfer(payer, payee, amount)` would be accepted.
    pub fn can_transfer(
        &self,
        payer: AgentId,
        payee: AgentId,
        amount: MoneyAmount,
    ) -> Result<TransferOutcome> {
        self.check_pair(payer, payee)?;
        if !amount.is_positive() {
            return usage(format!("transfer amount must be positive, got {amount}"));
        }
        if self.agents[payer].money - amount < self.bounds.min {
            return Ok(TransferOutcome::Rejected(Rejection::PayerAtLowerBound));
        }
        if let Some(max) = self.bounds.max {
            if self.agents[payee].money + amount > max {
                return Ok(TransferOutcome::Rejected(Rejection::PayeeAtUpperBound));
            }
        }
        Ok(TransferOutcome::Applied)
    }

    /// Moves `amount` from payer to payee. A bound breach is a rejection and
    /// leaves the ensemble untouched.
    pub fn transfer(
        &mut self,
        payer: AgentId,
        payee: AgentId,
        amount: MoneyAmount,
    ) -> Result<TransferOutcome> {
        let outcome = self.can_transfer(payer, payee, amount)?;
        if outcome.is_applied() {
            self.agents[payer].money -= amount;
            self.agents[payee].money += amount;
        }
        Ok(outcome)
    }

    /// Money crossing the system boundary. Positive amounts are injections,
    /// negative ones withdrawals (tax).
    pub fn exogenous_inject(
        &mut self,
        recipient: AgentId,
        amount: MoneyAmount,
        tag: &str,
    ) -> Result<TransferOutcome> {
        if amount == MoneyAmount::ZERO {
            return usage("exogenous injection of zero");
        }
        let bounds = self.bounds;
        let tick = self.tick;
        let agent = self.agent_mut(recipient)?;
        let after = agent.money + amount;
        if after < bounds.min {
            return Ok(TransferOutcome::Rejected(Rejection::PayerAtLowerBound));
        }
        if bounds.max.is_some_and(|max| after > max) {
            return Ok(TransferOutcome::Rejected(Rejection::PayeeAtUpperBound));
        }
        agent.money = after;
        self.total_money += amount;
        self.flux_log.push(FluxEntry {
            tick,
            agent: Some(recipient),
            amount,
            tag: tag.to_string(),
        });
        Ok(TransferOutcome::Applied)
    }

    /// Mutates a balance without any ledger entry. Test fixture for the
    /// audit; never called by the simulation itself.
    pub fn apply_unlogged_mutation(&mut self, agent: AgentId, amount: MoneyAmount) -> Result<()> {
        self.agent_mut(agent)?.money += amount;
        Ok(())
    }

    pub fn audit(&self) -> AuditReport {
        let sum: MoneyAmount = self.agents.iter().map(|a| a.money).sum();
        let flux: MoneyAmount = self.flux_log.iter().map(|f| f.amount).sum();
        let mut violations = Vec::new();
        if sum != self.total_money {
            violations.push(format!(
                "sum of balances {sum} differs from ledger total {}",
                self.total_money
            ));
        }
        if flux != self.total_money {
            violations.push(format!(
                "boundary flux {flux} differs from ledger total {}",
                self.total_money
            ));
        }
        if let Some(a) = self.agents.iter().find(|a| !self.bounds.contains(a.money)) {
            violations.push(format!("agent {} at {} is outside bounds", a.id, a.money));
        }
        AuditReport {
            tick: self.tick,
            passed: violations.is_empty(),
            ledger_total: self.total_money,
            sum_of_balances: sum,
            flux_total: flux,
            violations,
        }
    }

    /// Adds goods to an agent's holdings (production happens outside the
    /// monetary layer).
    pub fn endow(&mut self, agent: AgentId, commodity: CommodityId, volume: u64) -> Result<()> {
        *self.agent_mut(agent)?.holdings.entry(commodity).or_insert(0) += volume;
        Ok(())
    }

    /// Buyer pays `unit_price * volume` to seller and receives the goods.
    pub fn trade_goods(
        &mut self,
        buyer: AgentId,
        seller: AgentId,
        commodity: CommodityId,
        volume: u64,
        unit_price: MoneyAmount,
    ) -> Result<TransferOutcome> {
        self.check_pair(buyer, seller)?;
        if volume == 0 {
            return usage("trade of zero volume");
        }
        if self.agents[seller].volume(commodity) < volume {
            return Ok(TransferOutcome::Rejected(Rejection::InsufficientGoods));
        }
        let cost = MoneyAmount(unit_price.0 * volume as i64);
        if cost.is_positive() {
            let outcome = self.can_transfer(buyer, seller, cost)?;
            if !outcome.is_applied() {
                return Ok(outcome);
            }
            self.transfer(buyer, seller, cost)?;
        }
        let seller_goods = self.agents[seller].holdings.entry(commodity).or_insert(0);
        *seller_goods -= volume;
        if *seller_goods == 0 {
            self.agents[seller].holdings.remove(&commodity);
        }
        *self.agents[buyer].holdings.entry(commodity).or_insert(0) += volume;
        Ok(TransferOutcome::Applied)
    }
}

/// JSON sidecar written next to the snapshot CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSidecar {
    pub population: usize,
    pub tick: u64,
    pub total_money: MoneyAmount,
    pub bounds: Bounds,
    pub flux_log: Vec<FluxEntry>,
}

/// One row of the `agent_id,money,debt_net` snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub agent_id: AgentId,
    pub money: MoneyAmount,
    pub debt_net: MoneyAmount,
}

impl Ensemble {
    pub fn sidecar(&self) -> EnsembleSidecar {
        EnsembleSidecar {
            population: self.population(),
            tick: self.tick,
            total_money: self.total_money,
            bounds: self.bounds,
            flux_log: self.flux_log.clone(),
        }
    }

    /// Writes `agent_id,money,debt_net`. `debt_net` is zero when no credit
    /// layer is attached.
    pub fn write_snapshot_csv<W: Write>(
        &self,
        out: W,
        debt_net: Option<&[MoneyAmount]>,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for a in &self.agents {
            let d = debt_net.map_or(MoneyAmount::ZERO, |d| d[a.id]);
            w.serialize(SnapshotRow {
                agent_id: a.id,
                money: a.money,
                debt_net: d,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds an ensemble from a snapshot CSV plus its sidecar.
    pub fn read_snapshot<R: Read>(csv_in: R, sidecar: EnsembleSidecar) -> Result<(Self, Vec<MoneyAmount>)> {
        let rows = read_snapshot_rows(csv_in)?;
        if rows.len() != sidecar.population {
            return Err(Error::Parse {
                line: rows.len() + 1,
                message: format!(
                    "snapshot has {} rows but sidecar population is {}",
                    rows.len(),
                    sidecar.population
                ),
            });
        }
        let mut agents = Vec::with_capacity(rows.len());
        let mut debts = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.agent_id != i {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("expected agent {i}, found {}", r.agent_id),
                });
            }
            agents.push(AgentState::new(i, r.money));
            debts.push(r.debt_net);
        }
        let ens = Ensemble {
            agents,
            total_money: sidecar.total_money,
            flux_log: sidecar.flux_log,
            bounds: sidecar.bounds,
            tick: sidecar.tick,
        };
        Ok((ens, debts))
    }
}

pub fn read_snapshot_rows<R: Read>(input: R) -> Result<Vec<SnapshotRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: SnapshotRow = rec.map_err(|e| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}
