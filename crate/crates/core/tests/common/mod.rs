//! Randomized conservation checks shared by the property tests and the
//! acceptance run.
#![allow(dead_code)]

use moneykin::credit::{
    accrue_interest, borrow, net_worth, settle, BankPolicy, BorrowOutcome, CreditPolicy,
    DebtBook, DefaultPolicy, IouStatus, SettleMode, SettleOutcome,
};
use moneykin::engine::{run_replica, EconomyState, SimulationConfig};
use moneykin::ensemble::{Bounds, Ensemble, TransferOutcome};
use moneykin::kernel::{ExchangeKernel, KernelKind};
use moneykin::{MoneyAmount, Rate};
use proptest::prelude::*;

pub fn kernel() -> impl Strategy<Value = ExchangeKernel> {
    prop_oneof![
        (1i64..6).prop_map(|delta| KernelKind::AdditiveFixed { delta }),
        (1i64..6).prop_map(|max| KernelKind::AdditiveUniform { max }),
        (0.01f64..0.9).prop_map(|fraction| KernelKind::Multiplicative { fraction }),
        Just(KernelKind::RandomSplitPool),
    ]
    .prop_map(|k| ExchangeKernel::new(k).unwrap())
}

fn default_policy() -> impl Strategy<Value = DefaultPolicy> {
    prop_oneof![
        Just(DefaultPolicy::AlwaysDefault),
        Just(DefaultPolicy::AlwaysRollover),
        (0.0f64..=1.0).prop_map(|p| DefaultPolicy::CoinFlip { p }),
    ]
}

pub fn credit_policy() -> impl Strategy<Value = CreditPolicy> {
    (
        proptest::option::of(0i64..30),
        prop_oneof![Just(0.0), 0.0f64..0.1],
        proptest::option::of(1u64..6),
        default_policy(),
    )
        .prop_map(|(debt_limit, interest_rate, loan_term, default_policy)| CreditPolicy {
            debt_limit,
            interest_rate,
            loan_term,
            default_policy,
            bank: None,
        })
}

/// One randomized simulation run.
#[derive(Clone, Debug)]
pub enum RunCase {
    Plain { cfg: SimulationConfig },
    Credit { cfg: SimulationConfig },
    Bank { cfg: SimulationConfig },
    Lets { cfg: SimulationConfig },
}

fn base(n: usize, per: i64, kernel: ExchangeKernel, sweeps: u64, seed: u64) -> SimulationConfig {
    let steps = sweeps * n as u64;
    SimulationConfig::simple(n, per, kernel, steps, n as u64, seed)
}

fn shape() -> impl Strategy<Value = (usize, i64, ExchangeKernel, u64, u64)> {
    (2usize..12, 0i64..20, kernel(), 1u64..40, any::<u64>())
}

pub fn run_case() -> impl Strategy<Value = RunCase> {
    prop_oneof![
        (shape(), 0i64..=10, proptest::option::of(0i64..40)).prop_map(
            |((n, per, k, sweeps, seed), lo, extra)| {
                let mut cfg = base(n, per, k, sweeps, seed);
                let min = lo.min(per);
                cfg.bounds = Bounds::new(MoneyAmount(min), extra.map(|e| MoneyAmount(per + 1 + e))).unwrap();
                RunCase::Plain { cfg }
            }
        ),
        (shape(), credit_policy()).prop_map(|((n, per, k, sweeps, seed), policy)| {
            let mut cfg = base(n, per, k, sweeps, seed);
            cfg.credit = Some(policy);
            RunCase::Credit { cfg }
        }),
        (shape(), 0.05f64..=1.0, 1u32..8, proptest::option::of(1i64..10)).prop_map(
            |((n, per, k, sweeps, seed), r, rounds, loan_size)| {
                let mut cfg = base(n, per.max(1), k, sweeps, seed);
                cfg.credit = Some(CreditPolicy {
                    bank: Some(BankPolicy {
                        reserve_ratio: r,
                        rounds,
                        every_sweeps: 1,
                        loan_size,
                    }),
                    ..CreditPolicy::default()
                });
                RunCase::Bank { cfg }
            }
        ),
        (shape(), 1i64..10, proptest::option::of(1i64..10), 1i64..4).prop_map(
            |((n, _, _, sweeps, seed), lo, hi, delta)| {
                let k = ExchangeKernel::new(KernelKind::LetsService { delta }).unwrap();
                let mut cfg = base(n, 0, k, sweeps, seed);
                cfg.bounds = Bounds::new(MoneyAmount(-lo), hi.map(MoneyAmount)).unwrap();
                RunCase::Lets { cfg }
            }
        ),
    ]
}

fn sum(v: &[MoneyAmount]) -> MoneyAmount {
    v.iter().copied().sum()
}

pub fn check_run(case: &RunCase) -> Result<(), TestCaseError> {
    let cfg = match case {
        RunCase::Plain { cfg } | RunCase::Credit { cfg } | RunCase::Bank { cfg } | RunCase::Lets { cfg } => cfg,
    };
    let t = run_replica(cfg, 0).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(t.passed_audit(), "audit failed: {:?}", t.audit);
    let m0 = cfg.total_money();
    match (&t.final_state, case) {
        (EconomyState::Plain(e), RunCase::Plain { .. }) => {
            prop_assert_eq!(sum(&e.balances()), m0);
            prop_assert!(e.balances().iter().all(|&m| cfg.bounds.contains(m)));
        }
        (EconomyState::Credit(c), RunCase::Credit { .. }) => {
            prop_assert_eq!(sum(&c.ensemble.balances()), m0);
            prop_assert_eq!(sum(c.book.net_all()), MoneyAmount::ZERO);
            prop_assert_eq!(sum(&c.net_worth()), m0);
            // Defaults and interest move w̃ after the fact; only trades are
            // checked against the floor.
            if let Some(d) = c.policy().debt_limit {
                if c.policy().interest_rate == 0.0 && c.policy().loan_term.is_none() {
                    prop_assert!(c.net_worth().iter().all(|w| w.0 >= -d));
                }
            }
        }
        (EconomyState::Credit(c), RunCase::Bank { .. }) => {
            let e = &c.ensemble;
            let injected: MoneyAmount = e.flux_log().iter().skip(1).map(|f| f.amount).sum();
            let flux: MoneyAmount = e.flux_log().iter().map(|f| f.amount).sum();
            prop_assert_eq!(sum(&e.balances()) - flux, MoneyAmount::ZERO);
            prop_assert_eq!(sum(&e.balances()) - injected, m0);
            let bank = c.bank.as_ref().unwrap();
            prop_assert_eq!(bank.outstanding_loans(), injected);
            prop_assert!(bank.constraint_holds(e));
            prop_assert_eq!(sum(&c.net_worth()), m0);
        }
        (EconomyState::Lets(l), RunCase::Lets { .. }) => {
            prop_assert_eq!(l.ledger.sum(), MoneyAmount::ZERO);
        }
        _ => prop_assert!(false, "economy kind does not match the case"),
    }
    Ok(())
}

/// Primitive ledger operations on a money ensemble with a debt book.
#[derive(Clone, Debug)]
pub enum Op {
    Transfer { payer: usize, payee: usize, amount: i64 },
    Borrow { lender: usize, borrower: usize, amount: i64 },
    Inject { agent: usize, amount: i64 },
    Settle { pick: usize, mode: SettleMode },
    Accrue { ppm: u32 },
}

#[derive(Clone, Debug)]
pub struct OpCase {
    pub balances: Vec<i64>,
    pub max: Option<i64>,
    pub limit: Option<i64>,
    pub ops: Vec<Op>,
}

fn op(n: usize) -> impl Strategy<Value = Op> {
    let mode = prop_oneof![Just(SettleMode::Repay), Just(SettleMode::Default), Just(SettleMode::Rollover)];
    prop_oneof![
        (0..n, 0..n, 1i64..15).prop_map(|(payer, payee, amount)| Op::Transfer { payer, payee, amount }),
        (0..n, 0..n, 1i64..15).prop_map(|(lender, borrower, amount)| Op::Borrow { lender, borrower, amount }),
        (0..n, -15i64..15).prop_map(|(agent, amount)| Op::Inject { agent, amount }),
        (any::<usize>(), mode).prop_map(|(pick, mode)| Op::Settle { pick, mode }),
        (0u32..100_000).prop_map(|ppm| Op::Accrue { ppm }),
    ]
}

pub fn op_case() -> impl Strategy<Value = OpCase> {
    (2usize..8)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(0i64..20, n),
                proptest::option::of(20i64..60),
                proptest::option::of(0i64..20),
                proptest::collection::vec(op(n), 1..60),
            )
        })
        .prop_map(|(balances, max, limit, ops)| OpCase { balances, max, limit, ops })
}

pub fn check_ops(case: &OpCase) -> Result<(), TestCaseError> {
    let bounds = Bounds::new(MoneyAmount::ZERO, case.max.map(MoneyAmount)).unwrap();
    let mut ens = Ensemble::from_balances(case.balances.iter().map(|&m| MoneyAmount(m)).collect(), bounds).unwrap();
    let n = ens.population();
    let mut book = DebtBook::new(n, case.limit.map(MoneyAmount));
    let fail = |e: moneykin::Error| TestCaseError::fail(e.to_string());
    for op in &case.ops {
        let (ens0, book0) = (ens.clone(), book.clone());
        let w0 = net_worth(&ens, &book);
        let m0 = ens.total_money();
        match *op {
            Op::Transfer { payer, payee, amount } => {
                if payer == payee {
                    continue;
                }
                match ens.transfer(payer, payee, MoneyAmount(amount)).map_err(fail)? {
                    TransferOutcome::Applied => {
                        prop_assert_eq!(ens.total_money(), m0);
                        prop_assert_eq!(ens.money(payer), ens0.money(payer) - MoneyAmount(amount));
                    }
                    TransferOutcome::Rejected(_) => prop_assert_eq!(&ens, &ens0),
                }
            }
            Op::Borrow { lender, borrower, amount } => {
                if lender == borrower {
                    continue;
                }
                match borrow(&mut ens, &mut book, lender, borrower, MoneyAmount(amount), None).map_err(fail)? {
                    BorrowOutcome::Created(_) => {
                        prop_assert_eq!(net_worth(&ens, &book), w0);
                        prop_assert_eq!(ens.total_money(), m0);
                    }
                    BorrowOutcome::Rejected(_) => {
                        prop_assert_eq!(&ens, &ens0);
                        prop_assert_eq!(&book, &book0);
                    }
                }
            }
            Op::Inject { agent, amount } => {
                if amount == 0 {
                    continue;
                }
                match ens.exogenous_inject(agent, MoneyAmount(amount), "tax-or-grant").map_err(fail)? {
                    TransferOutcome::Applied => prop_assert_eq!(ens.total_money(), m0 + MoneyAmount(amount)),
                    TransferOutcome::Rejected(_) => prop_assert_eq!(&ens, &ens0),
                }
            }
            Op::Settle { pick, mode } => {
                let open: Vec<u64> = book.ious().iter().filter(|i| i.status == IouStatus::Open).map(|i| i.id).collect();
                if open.is_empty() {
                    continue;
                }
                let id = open[pick % open.len()];
                match settle(&mut ens, &mut book, id, mode, None).map_err(fail)? {
                    SettleOutcome::Repaid | SettleOutcome::RolledOver(_) => {
                        prop_assert_eq!(net_worth(&ens, &book), w0);
                    }
                    SettleOutcome::Defaulted => prop_assert_eq!(ens.total_money(), m0),
                    SettleOutcome::InsufficientFunds => {
                        prop_assert_eq!(&ens, &ens0);
                        prop_assert_eq!(&book, &book0);
                    }
                }
            }
            Op::Accrue { ppm } => {
                accrue_interest(&mut book, Rate::from_f64(ppm as f64 * 1e-6).unwrap());
                prop_assert_eq!(&ens, &ens0);
            }
        }
        // Invariants after every operation.
        prop_assert_eq!(sum(book.net_all()), MoneyAmount::ZERO);
        let balances = ens.balances();
        let flux: MoneyAmount = ens.flux_log().iter().map(|f| f.amount).sum();
        prop_assert_eq!(sum(&balances), ens.total_money());
        prop_assert_eq!(sum(&balances) - flux, MoneyAmount::ZERO);
        prop_assert!(balances.iter().all(|&m| bounds.contains(m)));
        prop_assert!(ens.audit().passed);
    }
    Ok(())
}
