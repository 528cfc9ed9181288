//! Peer-to-peer IOUs, net worth `w̃ = m + d`, interest and settlement, plus
//! the fractional-reserve bank.
//!
//! Lending is pair creation: money moves lender → borrower while matching
//! entries `+Δ` and `-Δ` appear in the antisymmetric debt matrix, so neither
//! party's net worth changes. Repayment and default annihilate the pair.
//! Accrued interest is booked into the debt matrix as it accrues.

mod bank;

pub use bank::{
    bank_loop_step, multiplier_cascade, BankPolicy, BankReport, BankState, BankStep, Cascade,
    CascadeRound, Rounds,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

use crate::ensemble::{AgentId, Ensemble, Rejection};
use crate::error::{config, usage, Error, Result};
use crate::money::{MoneyAmount, Rate};

pub type IouId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouStatus {
    Open,
    Repaid,
    Defaulted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iou {
    pub id: IouId,
    pub lender: AgentId,
    pub borrower: AgentId,
    pub principal: MoneyAmount,
    pub accrued: MoneyAmount,
    /// `None` means the note never falls due.
    pub due_tick: Option<u64>,
    pub status: IouStatus,
}

impl Iou {
    pub fn outstanding(&self) -> MoneyAmount {
        self.principal + self.accrued
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BorrowOutcome {
    Created(IouId),
    Rejected(Rejection),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettleMode {
    Repay,
    Default,
    Rollover,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SettleOutcome {
    Repaid,
    Defaulted,
    RolledOver(IouId),
    /// Repayment asked for but the borrower cannot pay; nothing changed.
    InsufficientFunds,
}

/// What happens to a note that falls due when the borrower cannot repay.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefaultPolicy {
    #[default]
    AlwaysDefault,
    AlwaysRollover,
    /// Default with probability `p`, otherwise roll over.
    CoinFlip { p: f64 },
}

/// Credit settings of a simulation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditPolicy {
    /// Largest net debt `-d_i` an agent may carry; `None` is unlimited.
    #[serde(default)]
    pub debt_limit: Option<i64>,
    /// Interest per sweep on principal plus accrued interest.
    #[serde(default)]
    pub interest_rate: f64,
    /// Sweeps until a note falls due; `None` never settles.
    #[serde(default)]
    pub loan_term: Option<u64>,
    #[serde(default)]
    pub default_policy: DefaultPolicy,
    #[serde(default)]
    pub bank: Option<BankPolicy>,
}

impl CreditPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.debt_limit.is_some_and(|d| d < 0) {
            return config("debt limit must be nonnegative");
        }
        Rate::from_f64(self.interest_rate)?;
        if self.loan_term == Some(0) {
            return config("loan term must be at least one sweep");
        }
        if let DefaultPolicy::CoinFlip { p } = self.default_policy {
            if !(0.0..=1.0).contains(&p) {
                return config(format!("coin-flip default probability must lie in [0, 1], got {p}"));
            }
        }
        if let Some(b) = &self.bank {
            b.validate()?;
        }
        Ok(())
    }

    pub fn rate(&self) -> Rate {
        Rate::from_f64(self.interest_rate).unwrap_or(Rate::ZERO)
    }
}

/// Antisymmetric matrix `d_ij`: the amount agent `j` owes agent `i`.
/// Only the upper triangle is stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DebtMatrix {
    upper: BTreeMap<(AgentId, AgentId), i64>,
    population: usize,
}

impl DebtMatrix {
    pub fn get(&self, i: AgentId, j: AgentId) -> MoneyAmount {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => MoneyAmount::ZERO,
            std::cmp::Ordering::Less => MoneyAmount(*self.upper.get(&(i, j)).unwrap_or(&0)),
            std::cmp::Ordering::Greater => MoneyAmount(-*self.upper.get(&(j, i)).unwrap_or(&0)),
        }
    }

    fn add(&mut self, creditor: AgentId, debtor: AgentId, amount: i64) {
        let (key, v) = if creditor < debtor {
            ((creditor, debtor), amount)
        } else {
            ((debtor, creditor), -amount)
        };
        let e = self.upper.entry(key).or_insert(0);
        *e += v;
        if *e == 0 {
            self.upper.remove(&key);
        }
    }

    /// `d_i = Σ_j d_ij`.
    pub fn net(&self) -> Vec<MoneyAmount> {
        let mut d = vec![MoneyAmount::ZERO; self.population];
        for (&(i, j), &v) in &self.upper {
            d[i].0 += v;
            d[j].0 -= v;
        }
        d
    }

    /// Nonzero pairs `(i, j, d_ij)` with `i < j`.
    pub fn entries(&self) -> impl Iterator<Item = (AgentId, AgentId, MoneyAmount)> + '_ {
        self.upper.iter().map(|(&(i, j), &v)| (i, j, MoneyAmount(v)))
    }
}

/// All IOUs of one replica with incrementally maintained per-agent totals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DebtBook {
    ious: Vec<Iou>,
    open: usize,
    net: Vec<MoneyAmount>,
    liabilities: Vec<MoneyAmount>,
    limit: Option<MoneyAmount>,
    due: BTreeMap<u64, Vec<IouId>>,
}

impl DebtBook {
    pub fn new(population: usize, limit: Option<MoneyAmount>) -> Self {
        DebtBook {
            ious: Vec::new(),
            open: 0,
            net: vec![MoneyAmount::ZERO; population],
            liabilities: vec![MoneyAmount::ZERO; population],
            limit,
            due: BTreeMap::new(),
        }
    }

    pub fn population(&self) -> usize {
        self.net.len()
    }

    pub fn limit(&self) -> Option<MoneyAmount> {
        self.limit
    }

    pub fn ious(&self) -> &[Iou] {
        &self.ious
    }

    pub fn iou(&self, id: IouId) -> Result<&Iou> {
        self.ious
            .get(id as usize)
            .ok_or_else(|| Error::Usage(format!("unknown IOU {id}")))
    }

    pub fn open_count(&self) -> usize {
        self.open
    }

    /// Net position `d_i`; positive for net creditors.
    #[inline]
    pub fn net(&self, agent: AgentId) -> MoneyAmount {
        self.net[agent]
    }

    pub fn net_all(&self) -> &[MoneyAmount] {
        &self.net
    }

    /// Gross open liabilities (principal + accrued) of `agent` as borrower.
    pub fn liabilities(&self, agent: AgentId) -> MoneyAmount {
        self.liabilities[agent]
    }

    /// Whether `agent` could take on `extra` more net debt.
    pub fn within_limit(&self, agent: AgentId, extra: MoneyAmount) -> bool {
        self.limit.is_none_or(|l| -self.net[agent] + extra <= l)
    }

    pub fn debt_matrix(&self) -> DebtMatrix {
        let mut m = DebtMatrix {
            upper: BTreeMap::new(),
            population: self.net.len(),
        };
        for iou in self.ious.iter().filter(|i| i.status == IouStatus::Open) {
            m.add(iou.lender, iou.borrower, iou.outstanding().0);
        }
        m
    }

    fn book(&mut self, lender: AgentId, borrower: AgentId, amount: MoneyAmount) {
        self.net[lender] += amount;
        self.net[borrower] -= amount;
        self.liabilities[borrower] += amount;
    }

    fn push(
        &mut self,
        ens: &mut Ensemble,
        lender: AgentId,
        borrower: AgentId,
        principal: MoneyAmount,
        due_tick: Option<u64>,
    ) -> IouId {
        let id = self.ious.len() as IouId;
        self.ious.push(Iou {
            id,
            lender,
            borrower,
            principal,
            accrued: MoneyAmount::ZERO,
            due_tick,
            status: IouStatus::Open,
        });
        self.open += 1;
        self.book(lender, borrower, principal);
        if let Some(t) = due_tick {
            self.due.entry(t).or_default().push(id);
        }
        for a in [lender, borrower] {
            if let Ok(agent) = ens.agent_mut(a) {
                agent.debt_links.push(id);
            }
        }
        id
    }

    fn close(&mut self, ens: &mut Ensemble, id: IouId, status: IouStatus) {
        let iou = &mut self.ious[id as usize];
        iou.status = status;
        let (lender, borrower, owed) = (iou.lender, iou.borrower, iou.outstanding());
        self.open -= 1;
        self.book(lender, borrower, -owed);
        for a in [lender, borrower] {
            if let Ok(agent) = ens.agent_mut(a) {
                if let Some(p) = agent.debt_links.iter().position(|&x| x == id) {
                    agent.debt_links.swap_remove(p);
                }
            }
        }
    }

    /// Open notes due at or before `tick`, in due order.
    pub fn due_by(&self, tick: u64) -> Vec<IouId> {
        self.due
            .range(..=tick)
            .flat_map(|(_, ids)| ids.iter().copied())
            .filter(|&id| self.ious[id as usize].status == IouStatus::Open)
            .collect()
    }

    fn clear_due(&mut self, tick: u64) {
        let later = self.due.split_off(&(tick + 1));
        self.due = later;
    }

    /// Writes `lender,borrower,principal,accrued,status` for every note.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            lender: AgentId,
            borrower: AgentId,
            principal: MoneyAmount,
            accrued: MoneyAmount,
            status: IouStatus,
        }
        // Headers by hand, so a book without notes still gets a header row.
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["lender", "borrower", "principal", "accrued", "status"])?;
        for i in &self.ious {
            w.serialize(Row {
                lender: i.lender,
                borrower: i.borrower,
                principal: i.principal,
                accrued: i.accrued,
                status: i.status,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Net worth `w̃_i = m_i + d_i` of every agent.
pub fn net_worth(ens: &Ensemble, book: &DebtBook) -> Vec<MoneyAmount> {
    ens.agents()
        .iter()
        .map(|a| a.money + book.net(a.id))
        .collect()
}

/// Lender hands `delta` to the borrower against a new IOU.
pub fn borrow(
    ens: &mut Ensemble,
    book: &mut DebtBook,
    lender: AgentId,
    borrower: AgentId,
    delta: MoneyAmount,
    due_tick: Option<u64>,
) -> Result<BorrowOutcome> {
    let n = ens.population();
    if lender >= n || borrower >= n || book.population() != n {
        return usage(format!("unknown agent in loan ({lender}, {borrower})"));
    }
    if lender == borrower {
        return usage("an agent cannot lend to itself");
    }
    if !delta.is_positive() {
        return usage(format!("loan amount must be positive, got {delta}"));
    }
    if ens.money(lender) < delta {
        return Ok(BorrowOutcome::Rejected(Rejection::InsufficientFunds));
    }
    if !book.within_limit(borrower, delta) {
        return Ok(BorrowOutcome::Rejected(Rejection::DebtLimit));
    }
    if let crate::ensemble::TransferOutcome::Rejected(r) = ens.transfer(lender, borrower, delta)? {
        return Ok(BorrowOutcome::Rejected(r));
    }
    Ok(BorrowOutcome::Created(book.push(ens, lender, borrower, delta, due_tick)))
}

/// Grows every open note by `round_half_even(rate (principal + accrued))`.
/// No money moves.
pub fn accrue_interest(book: &mut DebtBook, rate: Rate) {
    if rate.is_zero() {
        return;
    }
    for k in 0..book.ious.len() {
        let iou = &mut book.ious[k];
        if iou.status != IouStatus::Open {
            continue;
        }
        let inc = rate.apply_half_even(iou.outstanding());
        if inc == MoneyAmount::ZERO {
            continue;
        }
        iou.accrued += inc;
        let (l, b) = (iou.lender, iou.borrower);
        book.book(l, b, inc);
    }
}

/// Closes a note by repayment or default, or replaces it by a rollover due
/// `new_due`.
pub fn settle(
    ens: &mut Ensemble,
    book: &mut DebtBook,
    id: IouId,
    mode: SettleMode,
    new_due: Option<u64>,
) -> Result<SettleOutcome> {
    let iou = book.iou(id)?.clone();
    if iou.status != IouStatus::Open {
        return usage(format!("IOU {id} is already {:?}", iou.status));
    }
    match mode {
        SettleMode::Repay => {
            let owed = iou.outstanding();
            if ens.money(iou.borrower) < owed {
                return Ok(SettleOutcome::InsufficientFunds);
            }
            if !ens.transfer(iou.borrower, iou.lender, owed)?.is_applied() {
                return Ok(SettleOutcome::InsufficientFunds);
            }
            book.close(ens, id, IouStatus::Repaid);
            Ok(SettleOutcome::Repaid)
        }
        SettleMode::Default => {
            book.close(ens, id, IouStatus::Defaulted);
            Ok(SettleOutcome::Defaulted)
        }
        SettleMode::Rollover => {
            // The old note is discharged by the new one, so the pair's net
            // position is unchanged.
            book.close(ens, id, IouStatus::Repaid);
            let new = book.push(ens, iou.lender, iou.borrower, iou.outstanding(), new_due);
            Ok(SettleOutcome::RolledOver(new))
        }
    }
}

/// Settles every note due by `tick`: repay when the borrower can, otherwise
/// apply the default policy.
pub fn settle_due<R: Rng + ?Sized>(
    ens: &mut Ensemble,
    book: &mut DebtBook,
    tick: u64,
    policy: DefaultPolicy,
    term: u64,
    rng: &mut R,
) -> Result<()> {
    let due = book.due_by(tick);
    book.clear_due(tick);
    for id in due {
        if settle(ens, book, id, SettleMode::Repay, None)? == SettleOutcome::Repaid {
            continue;
        }
        let mode = match policy {
            DefaultPolicy::AlwaysDefault => SettleMode::Default,
            DefaultPolicy::AlwaysRollover => SettleMode::Rollover,
            DefaultPolicy::CoinFlip { p } => {
                if rng.random::<f64>() < p {
                    SettleMode::Default
                } else {
                    SettleMode::Rollover
                }
            }
        };
        settle(ens, book, id, mode, Some(tick + term))?;
    }
    Ok(())
}
