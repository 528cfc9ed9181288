//! Single aggregate bank with a reserve requirement.
//!
//! All agent money sits on deposit, so deposits `D` equal the money in
//! circulation and the bank's reserves are the base money `D - L`. One
//! lending round extends new loans until loans reach `floor((1 - R) D)`;
//! the loans are spent and redeposited, raising `D` for the next round.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{AgentId, Ensemble, TransferOutcome};
use crate::error::{config, Error, Result};
use crate::money::{MoneyAmount, Rate};

pub const BANK_CREDIT_TAG: &str = "bank-credit";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankPolicy {
    pub reserve_ratio: f64,
    /// Lending rounds to run, one per `every_sweeps` sweeps.
    pub rounds: u32,
    #[serde(default = "one")]
    pub every_sweeps: u64,
    /// Size of each individual loan; `None` lends a round's whole amount
    /// to a single agent.
    #[serde(default)]
    pub loan_size: Option<i64>,
}

fn one() -> u64 {
    1
}

impl BankPolicy {
    pub fn validate(&self) -> Result<()> {
        check_ratio(self.reserve_ratio)?;
        if self.every_sweeps == 0 {
            return config("bank rounds need a positive sweep interval");
        }
        if self.loan_size.is_some_and(|s| s < 1) {
            return config("bank loan size must be at least one unit");
        }
        Ok(())
    }
}

fn check_ratio(r: f64) -> Result<Rate> {
    if !(r > 0.0 && r <= 1.0) {
        return config(format!("reserve ratio must lie in (0, 1], got {r}"));
    }
    Rate::from_f64(r)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BankState {
    reserve_ratio: Rate,
    owed: Vec<MoneyAmount>,
    outstanding: MoneyAmount,
    loans_made: u64,
}

/// `{R, deposits, reserves, loans}` as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankReport {
    #[serde(rename = "R")]
    pub reserve_ratio: f64,
    pub deposits: MoneyAmount,
    pub reserves: MoneyAmount,
    pub loans: MoneyAmount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BankStep {
    Lent { amount: MoneyAmount, loans: u64 },
    /// The reserve requirement did not hold; nothing was lent.
    Rejected,
}

impl BankState {
    pub fn new(population: usize, reserve_ratio: f64) -> Result<Self> {
        Ok(BankState {
            reserve_ratio: check_ratio(reserve_ratio)?,
            owed: vec![MoneyAmount::ZERO; population],
            outstanding: MoneyAmount::ZERO,
            loans_made: 0,
        })
    }

    pub fn reserve_ratio(&self) -> Rate {
        self.reserve_ratio
    }

    pub fn deposits(&self, ens: &Ensemble) -> MoneyAmount {
        ens.total_money()
    }

    pub fn per_agent_deposits(&self, ens: &Ensemble) -> Vec<MoneyAmount> {
        ens.balances()
    }

    pub fn reserves(&self, ens: &Ensemble) -> MoneyAmount {
        ens.total_money() - self.outstanding
    }

    pub fn outstanding_loans(&self) -> MoneyAmount {
        self.outstanding
    }

    /// What `agent` owes the bank.
    pub fn owed(&self, agent: AgentId) -> MoneyAmount {
        self.owed[agent]
    }

    pub fn owed_all(&self) -> &[MoneyAmount] {
        &self.owed
    }

    pub fn loans_made(&self) -> u64 {
        self.loans_made
    }

    /// `reserves >= R · deposits`, checked exactly.
    pub fn constraint_holds(&self, ens: &Ensemble) -> bool {
        let lhs = self.reserves(ens).0 as i128 * Rate::ONE.ppb() as i128;
        let rhs = self.reserve_ratio.ppb() as i128 * self.deposits(ens).0 as i128;
        lhs >= rhs
    }

    pub fn report(&self, ens: &Ensemble) -> BankReport {
        BankReport {
            reserve_ratio: self.reserve_ratio.as_f64(),
            deposits: self.deposits(ens),
            reserves: self.reserves(ens),
            loans: self.outstanding,
        }
    }
}

/// One deposit-lend-redeposit round: the bank lends
/// `floor((1 - R) D) - L` to uniformly chosen agents.
pub fn bank_loop_step<R: Rng + ?Sized>(
    bank: &mut BankState,
    ens: &mut Ensemble,
    policy: &BankPolicy,
    rng: &mut R,
) -> Result<BankStep> {
    if bank.owed.len() != ens.population() {
        return Err(Error::Usage("bank and ensemble populations differ".into()));
    }
    if !bank.constraint_holds(ens) {
        return Ok(BankStep::Rejected);
    }
    let ceiling = bank.reserve_ratio.complement().apply_floor(bank.deposits(ens));
    let mut remaining = ceiling - bank.outstanding;
    let lent = remaining.max(MoneyAmount::ZERO);
    let mut loans = 0;
    let n = ens.population();
    while remaining.is_positive() {
        let chunk = match policy.loan_size {
            Some(s) => MoneyAmount(s.min(remaining.0)),
            None => remaining,
        };
        let who = rng.random_range(0..n);
        match ens.exogenous_inject(who, chunk, BANK_CREDIT_TAG)? {
            TransferOutcome::Applied => {}
            TransferOutcome::Rejected(r) => {
                return Err(Error::Invariant(format!("bank loan to {who} rejected: {r:?}")))
            }
        }
        bank.owed[who] += chunk;
        bank.outstanding += chunk;
        bank.loans_made += 1;
        loans += 1;
        remaining -= chunk;
    }
    if !bank.constraint_holds(ens) {
        return Err(Error::Invariant("reserve requirement broken by lending".into()));
    }
    Ok(BankStep::Lent { amount: lent, loans })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounds {
    Fixed(u32),
    ToConvergence,
}

/// Integer bookkeeping after each round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeRound {
    pub round: u32,
    pub new_deposit: MoneyAmount,
    pub total_deposits: MoneyAmount,
    pub total_loans: MoneyAmount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub reserve_ratio: f64,
    pub base: MoneyAmount,
    /// Round `k` deposits `(1-R)^k M0`, floored in integer units.
    pub schedule: Vec<CascadeRound>,
    pub total_deposits: f64,
    pub total_loans: f64,
    pub multiplier: f64,
}

const MAX_ROUNDS: u32 = 1_000_000;

/// Deposit-lend geometric cascade on base money `m0`.
///
/// The real-valued totals sum `(1-R)^k M0` term by term. The integer
/// schedule applies the same floor rule as [`bank_loop_step`]:
/// `L_{k+1} = floor((1-R)(M0 + L_k))`.
pub fn multiplier_cascade(m0: MoneyAmount, reserve_ratio: f64, rounds: Rounds) -> Result<Cascade> {
    let rate = check_ratio(reserve_ratio)?;
    if !m0.is_positive() {
        return config(format!("base money must be positive, got {m0}"));
    }
    let limit = match rounds {
        Rounds::Fixed(0) => return config("cascade needs at least one round"),
        Rounds::Fixed(k) => k,
        Rounds::ToConvergence => MAX_ROUNDS,
    };
    let keep = 1.0 - rate.as_f64();
    let base = m0.as_f64();
    let mut term = base;
    let mut total = 0.0;
    for _ in 0..limit {
        total += term;
        term *= keep;
        if rounds == Rounds::ToConvergence && term <= f64::EPSILON * total * 1e-3 {
            break;
        }
    }
    let mut schedule = Vec::new();
    let mut loans = MoneyAmount::ZERO;
    let complement = rate.complement();
    schedule.push(CascadeRound {
        round: 0,
        new_deposit: m0,
        total_deposits: m0,
        total_loans: loans,
    });
    for k in 1..limit {
        let next = complement.apply_floor(m0 + loans);
        let new_deposit = next - loans;
        if new_deposit <= MoneyAmount::ZERO {
            break;
        }
        loans = next;
        schedule.push(CascadeRound {
            round: k,
            new_deposit,
            total_deposits: m0 + loans,
            total_loans: loans,
        });
    }
    Ok(Cascade {
        reserve_ratio: rate.as_f64(),
        base: m0,
        schedule,
        total_deposits: total,
        total_loans: total - base,
        multiplier: total / base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn converged_multiplier() {
        let c = multiplier_cascade(MoneyAmount(100), 0.1, Rounds::ToConvergence).unwrap();
        assert!((c.multiplier - 10.0).abs() < 1e-9);
        assert!((c.total_deposits - 1000.0).abs() < 1e-7);
        assert!((c.total_loans - 900.0).abs() < 1e-7);
    }

    #[test]
    fn full_reserve_and_partial_sum() {
        let c = multiplier_cascade(MoneyAmount(100), 1.0, Rounds::ToConvergence).unwrap();
        assert_eq!(c.multiplier, 1.0);
        assert_eq!(c.total_loans, 0.0);
        assert_eq!(c.schedule.len(), 1);
        let p = multiplier_cascade(MoneyAmount(100), 0.2, Rounds::Fixed(3)).unwrap();
        assert!((p.total_deposits - 244.0).abs() < 1e-9);
        assert_eq!(p.schedule.last().unwrap().total_deposits, MoneyAmount(244));
        let news: Vec<i64> = p.schedule.iter().map(|r| r.new_deposit.0).collect();
        assert_eq!(news, vec![100, 80, 64]);
    }

    #[test]
    fn bad_ratio() {
        assert!(multiplier_cascade(MoneyAmount(100), 0.0, Rounds::ToConvergence).is_err());
        assert!(multiplier_cascade(MoneyAmount(100), 1.5, Rounds::ToConvergence).is_err());
        assert!(multiplier_cascade(MoneyAmount(0), 0.5, Rounds::ToConvergence).is_err());
    }

    #[test]
    fn first_round_lends_excess_reserves() {
        let mut e = Ensemble::init_equal(10, MoneyAmount(100)).unwrap();
        let mut bank = BankState::new(10, 0.1).unwrap();
        let pol = BankPolicy {
            reserve_ratio: 0.1,
            rounds: 1,
            every_sweeps: 1,
            loan_size: Some(7),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let step = bank_loop_step(&mut bank, &mut e, &pol, &mut rng).unwrap();
        assert_eq!(step, BankStep::Lent { amount: MoneyAmount(900), loans: 129 });
        assert_eq!(bank.owed_all().iter().sum::<MoneyAmount>(), MoneyAmount(900));
        assert!(e.audit().passed);
        assert!(bank.constraint_holds(&e));
        assert_eq!(bank.reserves(&e), MoneyAmount(1000));
    }

    #[test]
    fn saturated_bank_lends_nothing() {
        let mut e = Ensemble::init_equal(4, MoneyAmount(25)).unwrap();
        let mut bank = BankState::new(4, 0.5).unwrap();
        let pol = BankPolicy {
            reserve_ratio: 0.5,
            rounds: 100,
            every_sweeps: 1,
            loan_size: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut last = BankStep::Rejected;
        for _ in 0..60 {
            last = bank_loop_step(&mut bank, &mut e, &pol, &mut rng).unwrap();
        }
        assert_eq!(last, BankStep::Lent { amount: MoneyAmount(0), loans: 0 });
        assert_eq!(bank.outstanding_loans(), MoneyAmount(99));
    }

    #[test]
    fn agent_loop_tracks_integer_schedule() {
        let m0 = MoneyAmount(1_000_003);
        let c = multiplier_cascade(m0, 0.2, Rounds::Fixed(12)).unwrap();
        let mut e = Ensemble::from_balances(vec![MoneyAmount(333_334), MoneyAmount(333_334), MoneyAmount(333_335)], Default::default()).unwrap();
        let mut bank = BankState::new(3, 0.2).unwrap();
        let pol = BankPolicy {
            reserve_ratio: 0.2,
            rounds: 11,
            every_sweeps: 1,
            loan_size: Some(1000),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for r in &c.schedule[1..] {
            bank_loop_step(&mut bank, &mut e, &pol, &mut rng).unwrap();
            assert_eq!(e.total_money(), r.total_deposits);
            assert_eq!(bank.outstanding_loans(), r.total_loans);
        }
    }
}
