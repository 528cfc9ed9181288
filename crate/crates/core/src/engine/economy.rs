use rand::Rng;

use crate::credit::{
    accrue_interest, bank_loop_step, borrow, settle_due, BankReport, BankState, BorrowOutcome,
    CreditPolicy, DebtBook,
};
use crate::ensemble::{AgentId, AuditReport, Ensemble, Rejection, TransferOutcome};
use crate::error::Result;
use crate::lets::LetsLedger;
use crate::money::{MoneyAmount, Rate};

/// State a replica evolves. The engine draws pairs and amounts; the economy
/// decides whether a transfer goes through and what balance is measured.
pub trait Economy {
    fn population(&self) -> usize;

    /// Money the kernel sees for an agent.
    fn money(&self, agent: AgentId) -> MoneyAmount;

    /// Balance entering the statistics (`m`, `m̃` or `w̃`).
    fn measured(&self, agent: AgentId) -> MoneyAmount;

    fn measured_all(&self) -> Vec<MoneyAmount> {
        (0..self.population()).map(|i| self.measured(i)).collect()
    }

    fn exchange<R: Rng + ?Sized>(
        &mut self,
        payer: AgentId,
        payee: AgentId,
        delta: MoneyAmount,
        rng: &mut R,
    ) -> Result<TransferOutcome>;

    /// Whether [`end_of_sweep`](Self::end_of_sweep) can change balances.
    fn has_sweep_effects(&self) -> bool {
        false
    }

    fn end_of_sweep<R: Rng + ?Sized>(&mut self, _tick: u64, _rng: &mut R) -> Result<()> {
        Ok(())
    }

    fn set_tick(&mut self, tick: u64);

    fn audit(&self) -> AuditReport;

    /// Test fixture: change a balance behind the ledger's back.
    fn inject_fault(&mut self, agent: AgentId, amount: MoneyAmount) -> Result<()>;
}

impl Economy for Ensemble {
    fn population(&self) -> usize {
        Ensemble::population(self)
    }

    #[inline]
    fn money(&self, agent: AgentId) -> MoneyAmount {
        Ensemble::money(self, agent)
    }

    #[inline]
    fn measured(&self, agent: AgentId) -> MoneyAmount {
        Ensemble::money(self, agent)
    }

    fn measured_all(&self) -> Vec<MoneyAmount> {
        self.balances()
    }

    #[inline]
    fn exchange<R: Rng + ?Sized>(
        &mut self,
        payer: AgentId,
        payee: AgentId,
        delta: MoneyAmount,
        _rng: &mut R,
    ) -> Result<TransferOutcome> {
        self.transfer(payer, payee, delta)
    }

    fn set_tick(&mut self, tick: u64) {
        Ensemble::set_tick(self, tick)
    }

    fn audit(&self) -> AuditReport {
        Ensemble::audit(self)
    }

    fn inject_fault(&mut self, agent: AgentId, amount: MoneyAmount) -> Result<()> {
        self.apply_unlogged_mutation(agent, amount)
    }
}

/// LETS ledger plus the tick needed for audit reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LetsEconomy {
    pub ledger: LetsLedger,
    tick: u64,
}

impl LetsEconomy {
    pub fn new(ledger: LetsLedger) -> Self {
        LetsEconomy { ledger, tick: 0 }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }
}

impl Economy for LetsEconomy {
    fn population(&self) -> usize {
        self.ledger.population()
    }

    fn money(&self, agent: AgentId) -> MoneyAmount {
        self.ledger.balances()[agent]
    }

    fn measured(&self, agent: AgentId) -> MoneyAmount {
        self.ledger.balances()[agent]
    }

    fn measured_all(&self) -> Vec<MoneyAmount> {
        self.ledger.balances().to_vec()
    }

    /// The payer receives a service from the payee.
    fn exchange<R: Rng + ?Sized>(
        &mut self,
        payer: AgentId,
        payee: AgentId,
        delta: MoneyAmount,
        _rng: &mut R,
    ) -> Result<TransferOutcome> {
        self.ledger.lets_trade(payee, payer, delta)
    }

    fn set_tick(&mut self, tick: u64) {
        self.tick = tick;
    }

    fn audit(&self) -> AuditReport {
        let sum = self.ledger.sum();
        let mut violations = Vec::new();
        if sum != MoneyAmount::ZERO {
            violations.push(format!("LETS balances sum to {sum}, not zero"));
        }
        let b = self.ledger.bounds();
        if let Some(i) = self.ledger.balances().iter().position(|&m| !b.contains(m)) {
            violations.push(format!("member {i} is outside the LETS bounds"));
        }
        AuditReport {
            tick: self.tick,
            passed: violations.is_empty(),
            ledger_total: MoneyAmount::ZERO,
            sum_of_balances: sum,
            flux_total: MoneyAmount::ZERO,
            violations,
        }
    }

    fn inject_fault(&mut self, agent: AgentId, amount: MoneyAmount) -> Result<()> {
        let mut b = self.ledger.balances().to_vec();
        b[agent] += amount;
        self.ledger = LetsLedger::from_parts(b, self.ledger.lower(), self.ledger.upper());
        Ok(())
    }
}

/// Money ensemble with peer lending: a payer short of cash borrows the
/// shortfall from a randomly drawn agent that holds it, subject to the
/// net-worth floor `w̃ >= -m_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct CreditEconomy {
    pub ensemble: Ensemble,
    pub book: DebtBook,
    pub bank: Option<BankState>,
    policy: CreditPolicy,
    debt_limit: Option<MoneyAmount>,
    rate: Rate,
    term_events: Option<u64>,
    bank_rounds_done: u32,
    sweeps: u64,
}

const LENDER_TRIES: usize = 64;

impl CreditEconomy {
    pub fn new(ensemble: Ensemble, policy: &CreditPolicy) -> Result<Self> {
        policy.validate()?;
        let n = ensemble.population();
        let debt_limit = policy.debt_limit.map(MoneyAmount);
        let bank = match &policy.bank {
            Some(b) => Some(BankState::new(n, b.reserve_ratio)?),
            None => None,
        };
        Ok(CreditEconomy {
            book: DebtBook::new(n, debt_limit),
            ensemble,
            bank,
            policy: policy.clone(),
            debt_limit,
            rate: policy.rate(),
            term_events: policy.loan_term.map(|t| t * n as u64),
            bank_rounds_done: 0,
            sweeps: 0,
        })
    }

    pub fn policy(&self) -> &CreditPolicy {
        &self.policy
    }

    pub fn net_worth(&self) -> Vec<MoneyAmount> {
        self.measured_all()
    }

    pub fn bank_report(&self) -> Option<BankReport> {
        self.bank.as_ref().map(|b| b.report(&self.ensemble))
    }

    /// `d_i` including what is owed to the bank.
    pub fn debt_net(&self) -> Vec<MoneyAmount> {
        (0..self.ensemble.population())
            .map(|i| self.measured(i) - self.ensemble.money(i))
            .collect()
    }

    fn find_lender<R: Rng + ?Sized>(
        &self,
        payer: AgentId,
        amount: MoneyAmount,
        rng: &mut R,
    ) -> Option<AgentId> {
        let n = self.ensemble.population();
        for _ in 0..LENDER_TRIES {
            let mut j = rng.random_range(0..n - 1);
            if j >= payer {
                j += 1;
            }
            if self.ensemble.money(j) >= amount {
                return Some(j);
            }
        }
        // Scarce lenders: choose uniformly among the eligible ones.
        let eligible: Vec<AgentId> = (0..n)
            .filter(|&j| j != payer && self.ensemble.money(j) >= amount)
            .collect();
        if eligible.is_empty() {
            None
        } else {
            Some(eligible[rng.random_range(0..eligible.len())])
        }
    }
}

impl Economy for CreditEconomy {
    fn population(&self) -> usize {
        self.ensemble.population()
    }

    #[inline]
    fn money(&self, agent: AgentId) -> MoneyAmount {
        self.ensemble.money(agent)
    }

    #[inline]
    fn measured(&self, agent: AgentId) -> MoneyAmount {
        let bank = self.bank.as_ref().map_or(MoneyAmount::ZERO, |b| b.owed(agent));
        self.ensemble.money(agent) + self.book.net(agent) - bank
    }

    fn exchange<R: Rng + ?Sized>(
        &mut self,
        payer: AgentId,
        payee: AgentId,
        delta: MoneyAmount,
        rng: &mut R,
    ) -> Result<TransferOutcome> {
        if let Some(limit) = self.debt_limit {
            if self.measured(payer) - delta < -limit {
                return Ok(TransferOutcome::Rejected(Rejection::DebtLimit));
            }
        }
        let cash = self.ensemble.money(payer);
        if cash < delta {
            let shortfall = delta - cash.max(MoneyAmount::ZERO);
            let Some(lender) = self.find_lender(payer, shortfall, rng) else {
                return Ok(TransferOutcome::Rejected(Rejection::NoLender));
            };
            let due = self.term_events.map(|t| self.ensemble.tick() + t);
            match borrow(&mut self.ensemble, &mut self.book, lender, payer, shortfall, due)? {
                BorrowOutcome::Created(_) => {}
                BorrowOutcome::Rejected(r) => return Ok(TransferOutcome::Rejected(r)),
            }
        }
        self.ensemble.transfer(payer, payee, delta)
    }

    fn has_sweep_effects(&self) -> bool {
        !self.rate.is_zero() || self.term_events.is_some() || self.bank.is_some()
    }

    fn end_of_sweep<R: Rng + ?Sized>(&mut self, tick: u64, rng: &mut R) -> Result<()> {
        self.sweeps += 1;
        accrue_interest(&mut self.book, self.rate);
        if let Some(term) = self.term_events {
            let policy = self.policy.default_policy;
            settle_due(&mut self.ensemble, &mut self.book, tick, policy, term, rng)?;
        }
        if let (Some(bank), Some(bp)) = (self.bank.as_mut(), self.policy.bank.as_ref()) {
            if self.bank_rounds_done < bp.rounds && self.sweeps.is_multiple_of(bp.every_sweeps) {
                bank_loop_step(bank, &mut self.ensemble, bp, rng)?;
                self.bank_rounds_done += 1;
            }
        }
        Ok(())
    }

    fn set_tick(&mut self, tick: u64) {
        self.ensemble.set_tick(tick);
    }

    fn audit(&self) -> AuditReport {
        let mut report = self.ensemble.audit();
        let d: MoneyAmount = self.book.net_all().iter().sum();
        if d != MoneyAmount::ZERO {
            report.violations.push(format!("net debt positions sum to {d}, not zero"));
        }
        // Interest, defaults and bank debt may legitimately push w̃ below
        // the floor.
        let floor_enforced = self.rate.is_zero() && self.term_events.is_none() && self.bank.is_none();
        if let (Some(limit), true) = (self.debt_limit, floor_enforced) {
            let floor = self.measured_all().into_iter().min();
            if floor.is_some_and(|f| f < -limit) {
                report.violations.push("an agent's net worth is below the debt limit".into());
            }
        }
        report.passed = report.violations.is_empty();
        report
    }

    fn inject_fault(&mut self, agent: AgentId, amount: MoneyAmount) -> Result<()> {
        self.ensemble.apply_unlogged_mutation(agent, amount)
    }
}
