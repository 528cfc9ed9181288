//! Monte Carlo realization of the kinetic exchange: uniform ordered pair
//! selection, kernel amount, boundary-checked transfer, scheduled snapshots.
//!
//! One event is one transaction attempt; a sweep is `N` events. Rejected
//! attempts still advance the clock.

mod analysis;
mod config;
mod economy;
mod run;

pub use analysis::{
    equilibration_detect, equilibration_detect_series, read_histogram_csv, read_trajectory_csv, relaxation_profile,
    window_means, write_histogram_csv, write_trajectory_csv, Equilibration, HistogramRow,
    RelaxationPoint, TrajectoryRow,
};
pub use config::{
    EconomyKind, MeasurementConfig, SimulationConfig, TestHooks, UnloggedMutation, SCHEMA_VERSION,
};
pub use economy::{CreditEconomy, Economy, LetsEconomy};
pub use run::{
    pooled_distribution, run, run_replica, run_replica_observed, run_with_threads, EconomyState,
    EventCounts, EventObserver, Snapshot, Trajectory,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credit::CreditPolicy;
    use crate::ensemble::Bounds;
    use crate::kernel::{ExchangeKernel, KernelKind};
    use crate::money::MoneyAmount;

    fn additive(n: usize, per: i64, steps: u64, every: u64) -> SimulationConfig {
        SimulationConfig::simple(n, per, ExchangeKernel::additive(1), steps, every, 42)
    }

    #[test]
    fn single_event_smoke_run() {
        let t = run_replica(&additive(2, 1, 1, 1), 0).unwrap();
        assert_eq!(t.counts.events, 1);
        assert_eq!(t.counts.applied + t.counts.rejected, 1);
        assert_eq!(t.snapshots.len(), 2);
        assert!(t.passed_audit());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let cfg = additive(50, 5, 20_000, 1000);
        let a = run_replica(&cfg, 3).unwrap();
        let b = run_replica(&cfg, 3).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.snapshots, b.snapshots);
        let c = run_replica(&cfg, 4).unwrap();
        assert_ne!(a.final_state, c.final_state);
    }

    #[test]
    fn config_errors_precede_events() {
        let mut cfg = additive(10, 5, 100, 7);
        assert!(run(&cfg).is_err());
        cfg.measure_every = 10;
        cfg.population = 1;
        assert!(run(&cfg).is_err());
        cfg.population = 10;
        cfg.schema_version = 9;
        assert!(run(&cfg).is_err());
        let bad = r#"{"schema_version":1,"population":10,"per_capita":5,
            "kernel":{"kind":"additive_fixed","delta":1},"steps":10,"seed":1,
            "measure_every":5,"colour":"red"}"#;
        assert!(SimulationConfig::from_json(bad).is_err());
        let err = SimulationConfig::from_json("{\n  \"population\": ,\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn conservation_and_initial_snapshot() {
        let t = run_replica(&additive(100, 10, 50_000, 5_000), 0).unwrap();
        let s0 = &t.snapshots[0];
        assert_eq!(s0.entropy, 0.0);
        assert_eq!(s0.temperature, 10.0);
        assert!(s0.ks_exp.unwrap() > 0.3);
        let e = t.final_state.ensemble().unwrap();
        assert_eq!(e.total_money(), MoneyAmount(1000));
        assert_eq!(e.balances().iter().sum::<MoneyAmount>(), MoneyAmount(1000));
        assert!(t.passed_audit());
        assert!(t.snapshots.windows(2).all(|w| w[0].tick < w[1].tick));
        assert!(t.snapshots.iter().all(|s| (0.0..=1.0).contains(&s.acceptance_rate)));
    }

    #[test]
    fn fault_hook_fails_audit() {
        let mut cfg = additive(20, 5, 1000, 100);
        cfg.test_hooks.unlogged_mutation = Some(UnloggedMutation {
            tick: 250,
            agent: 3,
            amount: 1,
        });
        let t = run_replica(&cfg, 0).unwrap();
        assert!(!t.passed_audit());
        assert_eq!(t.audit.first_violation, Some(300));
    }

    #[test]
    fn lets_run_stays_balanced() {
        let mut cfg = SimulationConfig::simple(
            200,
            0,
            ExchangeKernel::new(KernelKind::LetsService { delta: 1 }).unwrap(),
            100_000,
            10_000,
            5,
        );
        cfg.bounds = Bounds::new(MoneyAmount(-10), Some(MoneyAmount(10))).unwrap();
        let t = run_replica(&cfg, 0).unwrap();
        assert!(t.passed_audit());
        let v = t.final_state.measured();
        assert_eq!(v.iter().sum::<MoneyAmount>(), MoneyAmount(0));
        assert!(v.iter().all(|m| m.0 >= -10 && m.0 <= 10));
        cfg.per_capita = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn credit_run_keeps_net_worth_sum() {
        let mut cfg = additive(100, 5, 50_000, 5_000);
        cfg.credit = Some(CreditPolicy {
            debt_limit: Some(5),
            ..CreditPolicy::default()
        });
        let t = run_replica(&cfg, 0).unwrap();
        assert!(t.passed_audit());
        let w = t.final_state.measured();
        assert_eq!(w.iter().sum::<MoneyAmount>(), MoneyAmount(500));
        assert!(w.iter().all(|x| x.0 >= -5));
        assert!(t.final_state.debts().unwrap().open_count() > 0);
    }

    #[test]
    fn defaults_may_cross_the_debt_floor() {
        let mut cfg = additive(8, 5, 8_000, 8);
        cfg.kernel = ExchangeKernel::additive(4);
        cfg.credit = Some(CreditPolicy {
            debt_limit: Some(3),
            loan_term: Some(2),
            ..CreditPolicy::default()
        });
        assert_eq!(cfg.measured_floor(), None);
        let t = run_replica(&cfg, 0).unwrap();
        assert!(t.passed_audit());
        assert_eq!(t.final_state.measured().iter().sum::<MoneyAmount>(), MoneyAmount(40));
    }

    #[test]
    fn profile_and_equilibration() {
        let t = run_replica(&additive(500, 10, 500_000, 5_000), 0).unwrap();
        assert!(relaxation_profile(&t, 0).is_ok());
        let short = Trajectory {
            snapshots: t.snapshots[..2].to_vec(),
            ..t.clone()
        };
        assert!(relaxation_profile(&short, 0).is_err());
        assert!(equilibration_detect(&t.snapshots, 1, 0.1).is_err());
        let eq = equilibration_detect(&t.snapshots, 5, 0.05).unwrap();
        assert!(eq.tick().is_some());
    }

    #[test]
    fn csv_round_trip() {
        let t = run_replica(&additive(30, 4, 3_000, 1_000), 0).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &t.snapshots).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("tick,entropy,temperature,gini,ks_exp,acceptance_rate"));
        let rows = read_trajectory_csv(&buf[..]).unwrap();
        assert_eq!(rows.len(), t.snapshots.len());
        assert_eq!(rows[1], TrajectoryRow::from(&t.snapshots[1]));
        let mut h = Vec::new();
        write_histogram_csv(&mut h, &t.last().distribution).unwrap();
        let hr = read_histogram_csv(&h[..]).unwrap();
        assert_eq!(hr.iter().map(|r| r.count).sum::<u64>(), 30);
        assert_eq!(hr.last().unwrap().bin_hi, None);
    }
}
