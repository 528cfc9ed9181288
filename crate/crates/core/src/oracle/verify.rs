use serde::{Deserialize, Serialize};

use super::space::StateSpace;
use crate::engine::{run_replica_observed, EconomyState, EventObserver, SimulationConfig};
use crate::ensemble::AgentId;
use crate::error::{usage, Result};
use crate::money::MoneyAmount;

/// One agent's balance law under `pi`, as `(m, P(m))` over the full range
/// of the state space.
pub fn marginal_money(space: &StateSpace, pi: &[f64], agent: AgentId) -> Vec<(i64, f64)> {
    let (lo, hi) = space.money_range();
    let mut p = vec![0.0; (hi - lo + 1) as usize];
    for (s, &w) in pi.iter().enumerate() {
        p[(space.state(s)[agent] - lo) as usize] += w;
    }
    p.into_iter().enumerate().map(|(k, v)| (lo + k as i64, v)).collect()
}

/// Marginal averaged over all agents (equal to each agent's marginal when
/// agents are exchangeable).
pub fn pooled_marginal(space: &StateSpace, pi: &[f64]) -> Vec<(i64, f64)> {
    let n = space.population;
    let mut acc = marginal_money(space, pi, 0);
    for a in 1..n {
        for (slot, (_, v)) in acc.iter_mut().zip(marginal_money(space, pi, a)) {
            slot.1 += v;
        }
    }
    for slot in &mut acc {
        slot.1 /= n as f64;
    }
    acc
}

/// Shannon entropy of a marginal, in nats.
pub fn marginal_entropy(marginal: &[(i64, f64)]) -> f64 {
    -marginal
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|p| p.1 * p.1.ln())
        .sum::<f64>()
}

/// Time-averaged occupation of balances by all agents, one sample of every
/// agent per event.
struct OccupationObserver {
    lo: i64,
    money: Vec<MoneyAmount>,
    counts: Vec<u64>,
    from_tick: u64,
    samples: u64,
}

impl EventObserver for OccupationObserver {
    fn on_change(&mut self, _tick: u64, agent: AgentId, _before: MoneyAmount, after: MoneyAmount) {
        self.money[agent] = after;
    }

    fn on_event(&mut self, tick: u64) {
        if tick <= self.from_tick {
            return;
        }
        for m in &self.money {
            let k = (m.0 - self.lo) as usize;
            if k >= self.counts.len() {
                self.counts.resize(k + 1, 0);
            }
            self.counts[k] += 1;
        }
        self.samples += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub events: u64,
    pub l1: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub oracle: Vec<(i64, f64)>,
    pub simulated: Vec<(i64, f64)>,
    pub audit_passed: bool,
}

/// Runs the engine on `cfg` and compares the long-run, all-agent marginal
/// of the measured balance with `oracle` in L1. The first `warmup` events
/// are discarded.
pub fn verify_simulation(
    cfg: &SimulationConfig,
    oracle: &[(i64, f64)],
    tolerance: f64,
    warmup: u64,
) -> Result<VerificationReport> {
    cfg.validate()?;
    if oracle.is_empty() {
        return usage("oracle marginal is empty");
    }
    if warmup >= cfg.steps {
        return usage(format!("warm-up {warmup} leaves no events out of {}", cfg.steps));
    }
    let lo = oracle[0].0.min(cfg.measured_floor().unwrap_or(oracle[0].0));
    let mut obs = OccupationObserver {
        lo,
        money: EconomyState::build(cfg)?.measured(),
        counts: vec![0; (oracle[oracle.len() - 1].0 - lo + 1) as usize],
        from_tick: warmup,
        samples: 0,
    };
    let traj = run_replica_observed(cfg, 0, &mut obs)?;
    let total = (obs.samples * cfg.population as u64) as f64;
    let simulated: Vec<(i64, f64)> = obs
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (lo + k as i64, c as f64 / total))
        .collect();
    let mut l1 = 0.0;
    let mut seen = vec![false; simulated.len()];
    for &(m, p) in oracle {
        let k = (m - lo) as usize;
        let q = simulated.get(k).map_or(0.0, |s| s.1);
        if k < seen.len() {
            seen[k] = true;
        }
        l1 += (p - q).abs();
    }
    l1 += simulated
        .iter()
        .zip(&seen)
        .filter(|(_, s)| !**s)
        .map(|(p, _)| p.1)
        .sum::<f64>();
    Ok(VerificationReport {
        events: cfg.steps,
        l1,
        tolerance,
        passed: l1 < tolerance,
        oracle: oracle.to_vec(),
        simulated,
        audit_passed: traj.passed_audit(),
    })
}
