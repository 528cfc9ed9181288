use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EconomyKind, SimulationConfig};
use super::economy::{CreditEconomy, Economy, LetsEconomy};
use crate::credit::{BankReport, DebtBook};
use crate::ensemble::{AgentId, AuditTrail, Ensemble, TransferOutcome};
use crate::error::{Error, Result};
use crate::kernel::ExchangeKernel;
use crate::lets::LetsLedger;
use crate::measures::{entropy, gini_sorted, Binning, DistributionEstimate};
use crate::money::MoneyAmount;
use crate::rng::{replica_rng, ReplicaRng};

/// Statistics of one measured state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    /// `tick / N`.
    pub sweep: f64,
    pub distribution: DistributionEstimate,
    pub entropy: f64,
    /// Mean measured balance above the support floor; `M/N` for a plain run.
    pub temperature: f64,
    /// Absent for signed supports.
    pub gini: Option<f64>,
    /// KS distance to the lattice exponential; absent without a floor.
    pub ks_exp: Option<f64>,
    /// Fraction of events since the previous snapshot that were not rejected.
    pub acceptance_rate: f64,
    pub variance: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub events: u64,
    pub applied: u64,
    pub rejected: u64,
    /// Events whose proposed amount was zero.
    pub noop: u64,
}

impl EventCounts {
    pub fn acceptance_rate(&self) -> f64 {
        if self.events == 0 {
            1.0
        } else {
            1.0 - self.rejected as f64 / self.events as f64
        }
    }
}

/// Final state of one replica.
#[derive(Clone, Debug, PartialEq)]
pub enum EconomyState {
    Plain(Ensemble),
    Lets(LetsEconomy),
    Credit(CreditEconomy),
}

impl EconomyState {
    pub fn build(cfg: &SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.economy_kind() {
            EconomyKind::Plain => {
                let e = Ensemble::from_balances(
                    vec![MoneyAmount(cfg.per_capita); cfg.population],
                    cfg.bounds,
                )?;
                EconomyState::Plain(e)
            }
            EconomyKind::Lets => EconomyState::Lets(LetsEconomy::new(LetsLedger::new(
                cfg.population,
                cfg.bounds.min,
                cfg.bounds.max,
            )?)),
            EconomyKind::Credit => {
                let e = Ensemble::init_equal(cfg.population, MoneyAmount(cfg.per_capita))?;
                EconomyState::Credit(CreditEconomy::new(e, cfg.credit.as_ref().unwrap())?)
            }
        })
    }

    pub fn measured(&self) -> Vec<MoneyAmount> {
        match self {
            EconomyState::Plain(e) => e.balances(),
            EconomyState::Lets(l) => l.measured_all(),
            EconomyState::Credit(c) => c.measured_all(),
        }
    }

    /// The money ensemble, when there is one (not for LETS).
    pub fn ensemble(&self) -> Option<&Ensemble> {
        match self {
            EconomyState::Plain(e) => Some(e),
            EconomyState::Credit(c) => Some(&c.ensemble),
            EconomyState::Lets(_) => None,
        }
    }

    pub fn debts(&self) -> Option<&DebtBook> {
        match self {
            EconomyState::Credit(c) => Some(&c.book),
            _ => None,
        }
    }

    pub fn debt_net(&self) -> Option<Vec<MoneyAmount>> {
        match self {
            EconomyState::Credit(c) => Some(c.debt_net()),
            _ => None,
        }
    }

    pub fn bank(&self) -> Option<BankReport> {
        match self {
            EconomyState::Credit(c) => c.bank_report(),
            _ => None,
        }
    }
}

/// Everything recorded for one replica.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub replica: u32,
    pub population: usize,
    pub snapshots: Vec<Snapshot>,
    pub counts: EventCounts,
    pub audit: AuditTrail,
    pub final_state: EconomyState,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("a trajectory has at least the initial snapshot")
    }

    pub fn passed_audit(&self) -> bool {
        self.audit.passed()
    }
}

/// Receives every balance change of a run. The engine reports measured
/// balances before and after.
pub trait EventObserver {
    fn on_change(&mut self, tick: u64, agent: AgentId, before: MoneyAmount, after: MoneyAmount);

    /// Called after each event, whether or not anything changed.
    fn on_event(&mut self, _tick: u64) {}
}

impl EventObserver for () {
    #[inline]
    fn on_change(&mut self, _: u64, _: AgentId, _: MoneyAmount, _: MoneyAmount) {}
}

struct Measurer<'a> {
    cfg: &'a SimulationConfig,
    floor: Option<i64>,
    binning: Binning,
}

impl<'a> Measurer<'a> {
    fn new(cfg: &'a SimulationConfig) -> Self {
        let floor = cfg.measured_floor();
        let m = &cfg.measurement;
        let binning = match floor {
            Some(lo) => {
                // Mean measured balance above the floor, `T_m` of the run.
                let t = (cfg.per_capita - lo) as f64;
                let span = m.cap.unwrap_or_else(|| (20.0 * t).ceil().max(1.0) as i64);
                Binning {
                    lo: Some(lo),
                    width: m.bin_width,
                    cap: Some(lo + span.max(m.bin_width)),
                }
            }
            None => Binning {
                lo: None,
                width: m.bin_width,
                cap: None,
            },
        };
        Measurer { cfg, floor, binning }
    }

    fn snapshot(&self, tick: u64, values: &[MoneyAmount], window: EventCounts) -> Result<Snapshot> {
        let raw: Vec<i64> = values.iter().map(|m| m.0).collect();
        let dist = DistributionEstimate::from_values(&raw, self.binning)?;
        let s = entropy(&dist, self.cfg.measurement.entropy)?;
        // Snapshots are frequent, so always take the O(N log N) path.
        let gini = if dist.min >= 0 {
            let v: Vec<f64> = raw.iter().map(|&x| x as f64).collect();
            Some(gini_sorted(&v))
        } else {
            None
        };
        let ks = self.floor.and_then(|lo| dist.ks_to_exponential(lo));
        Ok(Snapshot {
            tick,
            sweep: tick as f64 / self.cfg.population as f64,
            temperature: dist.mean - self.floor.unwrap_or(0) as f64,
            variance: dist.variance,
            distribution: dist,
            entropy: s,
            gini,
            ks_exp: ks,
            acceptance_rate: window.acceptance_rate(),
        })
    }
}

#[inline]
fn draw_pair(rng: &mut ReplicaRng, n: usize) -> (AgentId, AgentId) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

fn evolve<E: Economy, O: EventObserver>(
    cfg: &SimulationConfig,
    economy: &mut E,
    rng: &mut ReplicaRng,
    observer: &mut O,
) -> Result<(Vec<Snapshot>, EventCounts, AuditTrail)> {
    let n = economy.population();
    let kernel: ExchangeKernel = cfg.kernel;
    let measurer = Measurer::new(cfg);
    let fault = cfg.test_hooks.unlogged_mutation;
    let sweep_effects = economy.has_sweep_effects();
    let mut audit = AuditTrail::default();
    let mut counts = EventCounts::default();
    let mut window = EventCounts::default();
    let mut snapshots = Vec::with_capacity((cfg.steps / cfg.measure_every + 1) as usize);

    audit.record(economy.audit());
    snapshots.push(measurer.snapshot(0, &economy.measured_all(), window)?);

    for tick in 1..=cfg.steps {
        let (mut payer, mut payee) = draw_pair(rng, n);
        let mut delta = kernel.propose_delta(economy.money(payer), economy.money(payee), rng);
        if delta < MoneyAmount::ZERO {
            std::mem::swap(&mut payer, &mut payee);
            delta = -delta;
        }
        window.events += 1;
        if delta == MoneyAmount::ZERO {
            window.noop += 1;
        } else {
            let before = (economy.measured(payer), economy.measured(payee));
            match economy.exchange(payer, payee, delta, rng)? {
                TransferOutcome::Applied => {
                    window.applied += 1;
                    observer.on_change(tick, payer, before.0, economy.measured(payer));
                    observer.on_change(tick, payee, before.1, economy.measured(payee));
                }
                TransferOutcome::Rejected(_) => window.rejected += 1,
            }
        }
        observer.on_event(tick);

        if let Some(f) = fault {
            if f.tick == tick {
                economy.inject_fault(f.agent, MoneyAmount(f.amount))?;
            }
        }
        if tick % n as u64 == 0 {
            economy.set_tick(tick);
            if sweep_effects {
                let before = economy.measured_all();
                economy.end_of_sweep(tick, rng)?;
                for (i, b) in before.into_iter().enumerate() {
                    let a = economy.measured(i);
                    if a != b {
                        observer.on_change(tick, i, b, a);
                    }
                }
            } else {
                economy.end_of_sweep(tick, rng)?;
            }
        }
        if tick % cfg.measure_every == 0 {
            economy.set_tick(tick);
            audit.record(economy.audit());
            snapshots.push(measurer.snapshot(tick, &economy.measured_all(), window)?);
            counts.events += window.events;
            counts.applied += window.applied;
            counts.rejected += window.rejected;
            counts.noop += window.noop;
            window = EventCounts::default();
        }
    }
    Ok((snapshots, counts, audit))
}

/// Runs one replica, reporting every balance change to `observer`.
pub fn run_replica_observed<O: EventObserver>(
    cfg: &SimulationConfig,
    replica: u32,
    observer: &mut O,
) -> Result<Trajectory> {
    let mut state = EconomyState::build(cfg)?;
    let mut rng = replica_rng(cfg.seed, replica as u64);
    let (snapshots, counts, audit) = match &mut state {
        EconomyState::Plain(e) => evolve(cfg, e, &mut rng, observer)?,
        EconomyState::Lets(l) => evolve(cfg, l, &mut rng, observer)?,
        EconomyState::Credit(c) => evolve(cfg, c, &mut rng, observer)?,
    };
    Ok(Trajectory {
        replica,
        population: cfg.population,
        snapshots,
        counts,
        audit,
        final_state: state,
    })
}

pub fn run_replica(cfg: &SimulationConfig, replica: u32) -> Result<Trajectory> {
    run_replica_observed(cfg, replica, &mut ())
}

/// Runs every replica of the config in parallel on the current rayon pool.
/// Configuration errors surface before any event executes.
pub fn run(cfg: &SimulationConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    (0..cfg.replicas)
        .into_par_iter()
        .map(|r| run_replica(cfg, r))
        .collect()
}

/// As [`run`], with at most `threads` replicas executing at once.
pub fn run_with_threads(cfg: &SimulationConfig, threads: Option<usize>) -> Result<Vec<Trajectory>> {
    match threads {
        None => run(cfg),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(|| run(cfg))
        }
    }
}

/// Pools the histograms of all snapshots at or after `from_tick`.
pub fn pooled_distribution(trajectories: &[Trajectory], from_tick: u64) -> Result<DistributionEstimate> {
    let mut pooled: Option<DistributionEstimate> = None;
    for s in trajectories
        .iter()
        .flat_map(|t| t.snapshots.iter())
        .filter(|s| s.tick >= from_tick)
    {
        match pooled.as_mut() {
            None => pooled = Some(s.distribution.clone()),
            Some(p) => p.merge(&s.distribution)?,
        }
    }
    pooled.ok_or_else(|| Error::Usage(format!("no snapshots at or after tick {from_tick}")))
}
