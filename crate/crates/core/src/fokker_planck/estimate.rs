use serde::{Deserialize, Serialize};

use super::problem::Coefficient;
use crate::engine::{run_replica_observed, EventObserver, SimulationConfig, Trajectory};
use crate::ensemble::AgentId;
use crate::error::{config, Result};
use crate::money::MoneyAmount;

/// Money bins for the conditional moments: `[lo + k w, lo + (k+1) w)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentBinning {
    pub lo: i64,
    pub width: i64,
    pub bins: usize,
}

impl MomentBinning {
    fn index(&self, m: MoneyAmount) -> Option<usize> {
        let k = (m.0 - self.lo).div_euclid(self.width);
        (k >= 0 && (k as usize) < self.bins).then_some(k as usize)
    }
}

/// Accumulates per-bin balance changes and occupancy time. Time is counted
/// lazily: an agent's stay in a bin is credited when it leaves (or at
/// [`finish`](DriftDiffusionObserver::finish)).
#[derive(Clone, Debug)]
pub struct DriftDiffusionObserver {
    binning: MomentBinning,
    population: usize,
    from_tick: u64,
    money: Vec<MoneyAmount>,
    since: Vec<u64>,
    occupancy: Vec<u64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    changes: Vec<u64>,
}

impl DriftDiffusionObserver {
    /// `initial` are the measured balances at tick 0; statistics start at
    /// `from_tick`.
    pub fn new(initial: &[MoneyAmount], binning: MomentBinning, from_tick: u64) -> Result<Self> {
        if binning.width < 1 || binning.bins == 0 {
            return config("moment binning needs width >= 1 and at least one bin");
        }
        let n = initial.len();
        Ok(DriftDiffusionObserver {
            binning,
            population: n,
            from_tick,
            money: initial.to_vec(),
            since: vec![0; n],
            occupancy: vec![0; binning.bins],
            sum: vec![0.0; binning.bins],
            sum_sq: vec![0.0; binning.bins],
            changes: vec![0; binning.bins],
        })
    }

    fn credit(&mut self, agent: AgentId, tick: u64) {
        let start = self.since[agent].max(self.from_tick);
        if tick > start {
            if let Some(k) = self.binning.index(self.money[agent]) {
                self.occupancy[k] += tick - start;
            }
        }
        self.since[agent] = tick;
    }

    /// Closes the occupancy of every agent at `end_tick` and returns the
    /// per-bin estimates, with time measured in sweeps.
    pub fn finish(mut self, end_tick: u64) -> DriftDiffusionTable {
        for a in 0..self.population {
            self.credit(a, end_tick);
        }
        let n = self.population as f64;
        let b = self.binning;
        let mut table = DriftDiffusionTable {
            binning: b,
            centers: Vec::with_capacity(b.bins),
            drift: Vec::with_capacity(b.bins),
            diffusion: Vec::with_capacity(b.bins),
            occupancy_sweeps: Vec::with_capacity(b.bins),
            changes: self.changes.clone(),
        };
        for k in 0..b.bins {
            // Integer balance m stands for the interval [m, m+1).
            let lo = b.lo + k as i64 * b.width;
            table.centers.push(lo as f64 + 0.5 * b.width as f64);
            let dt = self.occupancy[k] as f64 / n;
            table.occupancy_sweeps.push(dt);
            if dt > 0.0 {
                table.drift.push(Some(-self.sum[k] / dt));
                table.diffusion.push(Some(self.sum_sq[k] / (2.0 * dt)));
            } else {
                table.drift.push(None);
                table.diffusion.push(None);
            }
        }
        table
    }
}

impl EventObserver for DriftDiffusionObserver {
    fn on_change(&mut self, tick: u64, agent: AgentId, before: MoneyAmount, after: MoneyAmount) {
        if tick > self.from_tick {
            if let Some(k) = self.binning.index(before) {
                let d = (after - before).0 as f64;
                self.sum[k] += d;
                self.sum_sq[k] += d * d;
                self.changes[k] += 1;
            }
        }
        self.credit(agent, tick);
        self.money[agent] = after;
    }
}

/// Conditional drift `A(m) = -<Δ>/dt` and diffusion `B(m) = <Δ²>/(2 dt)` per
/// money bin, per sweep. Bins never visited are gaps (`None`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftDiffusionTable {
    pub binning: MomentBinning,
    pub centers: Vec<f64>,
    pub drift: Vec<Option<f64>>,
    pub diffusion: Vec<Option<f64>>,
    pub occupancy_sweeps: Vec<f64>,
    pub changes: Vec<u64>,
}

impl DriftDiffusionTable {
    /// Coefficient tables from the bins with at least `min_changes`
    /// recorded changes. The bin at `floor` is left out: there the
    /// reflecting wall, not the bulk dynamics, sets the moments.
    pub fn coefficients(&self, min_changes: u64, floor: Option<i64>) -> Result<(Coefficient, Coefficient)> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for k in 0..self.centers.len() {
            let lo = self.binning.lo + k as i64 * self.binning.width;
            if floor == Some(lo) || self.changes[k] < min_changes {
                continue;
            }
            if let (Some(da), Some(db)) = (self.drift[k], self.diffusion[k]) {
                if db > 0.0 {
                    a.push((self.centers[k], da));
                    b.push((self.centers[k], db));
                }
            }
        }
        if a.is_empty() {
            return config("no bin has enough recorded changes to estimate drift and diffusion");
        }
        Ok((Coefficient::table(a)?, Coefficient::table(b)?))
    }
}

/// Runs one replica and estimates drift and diffusion from its balance
/// changes after `warmup` events.
pub fn estimate_drift_diffusion(
    cfg: &SimulationConfig,
    replica: u32,
    binning: MomentBinning,
    warmup: u64,
) -> Result<(Trajectory, DriftDiffusionTable)> {
    cfg.validate()?;
    let initial = vec![MoneyAmount(cfg.per_capita); cfg.population];
    let mut obs = DriftDiffusionObserver::new(&initial, binning, warmup)?;
    let traj = run_replica_observed(cfg, replica, &mut obs)?;
    Ok((traj, obs.finish(cfg.steps)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::ExchangeKernel;

    fn binning() -> MomentBinning {
        MomentBinning {
            lo: 0,
            width: 1,
            bins: 200,
        }
    }

    #[test]
    fn additive_kernel_has_flat_coefficients() {
        let cfg = SimulationConfig::simple(1000, 10, ExchangeKernel::additive(1), 2_000_000, 100_000, 3);
        let (_, t) = estimate_drift_diffusion(&cfg, 0, binning(), 500_000).unwrap();
        // Interior: A = P(0) ≈ 1/11, B ≈ 1 - P(0)/2 per sweep.
        for m in [5usize, 10, 15] {
            let a = t.drift[m].unwrap();
            let b = t.diffusion[m].unwrap();
            assert!(a.abs() < 0.2, "A({m}) = {a}");
            assert!((b - 0.95).abs() < 0.05, "B({m}) = {b}");
        }
        let (_, b) = t.coefficients(100, Some(0)).unwrap();
        assert!(b.eval(10.5) > 0.0);
    }

    #[test]
    fn multiplicative_kernel_is_heteroscedastic() {
        // At <m> = 100 the step 0.05 m is resolved in integer units.
        let cfg = SimulationConfig::simple(1000, 100, ExchangeKernel::multiplicative(0.05), 2_000_000, 100_000, 4);
        let wide = MomentBinning {
            lo: 0,
            width: 10,
            bins: 100,
        };
        let (_, t) = estimate_drift_diffusion(&cfg, 0, wide, 500_000).unwrap();
        let (b1, b2) = (t.diffusion[10].unwrap(), t.diffusion[20].unwrap());
        assert!(b2 > 1.5 * b1, "B(m) = {b1}, B(2m) = {b2}");
    }

    #[test]
    fn no_changes_give_zero_coefficients() {
        let initial = vec![MoneyAmount(3); 4];
        let mut obs = DriftDiffusionObserver::new(&initial, binning(), 0).unwrap();
        for tick in 1..100 {
            obs.on_event(tick);
        }
        let t = obs.finish(100);
        assert_eq!(t.drift[3], Some(0.0));
        assert_eq!(t.diffusion[3], Some(0.0));
        assert_eq!(t.occupancy_sweeps[3], 100.0);
        assert!(t.drift[4].is_none());
    }

    #[test]
    fn occupancy_is_credited_on_departure() {
        let initial = vec![MoneyAmount(1), MoneyAmount(2)];
        let mut obs = DriftDiffusionObserver::new(&initial, binning(), 0).unwrap();
        obs.on_change(10, 0, MoneyAmount(1), MoneyAmount(2));
        obs.on_change(10, 1, MoneyAmount(2), MoneyAmount(1));
        let t = obs.finish(30);
        // Bin 1: agent 0 for 10 ticks, agent 1 for 20; bin 2: 20 + 10.
        assert_eq!(t.occupancy_sweeps[1], 15.0);
        assert_eq!(t.occupancy_sweeps[2], 15.0);
        assert_eq!(t.drift[1], Some(-1.0 / 15.0));
        assert_eq!(t.diffusion[2], Some(1.0 / 30.0));
    }
}
