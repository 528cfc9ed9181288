use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use super::run::{Snapshot, Trajectory};
use crate::error::{usage, Error, Result};
use crate::measures::DistributionEstimate;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationPoint {
    pub tick: u64,
    pub entropy: f64,
    pub ks_exp: Option<f64>,
    /// Log-likelihood of the best Gaussian minus that of the best
    /// exponential; positive while the spread is still Gaussian.
    pub gaussian_advantage: f64,
}

/// Entropy, distance to the exponential and Gaussian-vs-exponential
/// preference per snapshot.
pub fn relaxation_profile(trajectory: &Trajectory, floor: i64) -> Result<Vec<RelaxationPoint>> {
    if trajectory.snapshots.len() < 3 {
        return usage(format!(
            "relaxation profile needs at least 3 snapshots, got {}",
            trajectory.snapshots.len()
        ));
    }
    Ok(trajectory
        .snapshots
        .iter()
        .map(|s| RelaxationPoint {
            tick: s.tick,
            entropy: s.entropy,
            ks_exp: s.ks_exp,
            gaussian_advantage: s.distribution.gaussian_vs_exponential(floor),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Equilibration {
    At { tick: u64 },
    NotEquilibrated,
}

impl Equilibration {
    pub fn tick(self) -> Option<u64> {
        match self {
            Equilibration::At { tick } => Some(tick),
            Equilibration::NotEquilibrated => None,
        }
    }
}

/// Means of `series` over consecutive non-overlapping blocks of `window`.
pub fn window_means(series: &[f64], window: usize) -> Vec<f64> {
    series
        .chunks_exact(window.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

/// First tick after which the window-averaged entropy changes by less than
/// `tolerance` from one window to the next, through to the end of the run.
pub fn equilibration_detect(
    snapshots: &[Snapshot],
    window: usize,
    tolerance: f64,
) -> Result<Equilibration> {
    let ticks: Vec<u64> = snapshots.iter().map(|s| s.tick).collect();
    let s: Vec<f64> = snapshots.iter().map(|s| s.entropy).collect();
    equilibration_detect_series(&ticks, &s, window, tolerance)
}

/// As [`equilibration_detect`], on a bare `(tick, entropy)` series such as
/// one read back from a trajectory CSV.
pub fn equilibration_detect_series(
    ticks: &[u64],
    entropy: &[f64],
    window: usize,
    tolerance: f64,
) -> Result<Equilibration> {
    if window < 2 {
        return usage("equilibration window must span at least 2 snapshots");
    }
    if ticks.len() != entropy.len() {
        return usage(format!("{} ticks for {} entropy values", ticks.len(), entropy.len()));
    }
    let means = window_means(entropy, window);
    if means.len() < 2 {
        return Ok(Equilibration::NotEquilibrated);
    }
    let mut start = None;
    for k in 0..means.len() - 1 {
        if (means[k + 1] - means[k]).abs() < tolerance {
            start.get_or_insert(k);
        } else {
            start = None;
        }
    }
    Ok(match start {
        Some(k) => Equilibration::At { tick: ticks[k * window] },
        None => Equilibration::NotEquilibrated,
    })
}

/// One row of the trajectory CSV.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub tick: u64,
    pub entropy: f64,
    pub temperature: f64,
    pub gini: Option<f64>,
    pub ks_exp: Option<f64>,
    pub acceptance_rate: f64,
    pub sweep: f64,
    pub variance: f64,
}

impl From<&Snapshot> for TrajectoryRow {
    fn from(s: &Snapshot) -> Self {
        TrajectoryRow {
            tick: s.tick,
            entropy: s.entropy,
            temperature: s.temperature,
            gini: s.gini,
            ks_exp: s.ks_exp,
            acceptance_rate: s.acceptance_rate,
            sweep: s.sweep,
            variance: s.variance,
        }
    }
}

pub fn write_trajectory_csv<W: Write>(out: W, snapshots: &[Snapshot]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in snapshots {
        w.serialize(TrajectoryRow::from(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<TrajectoryRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_lo: i64,
    /// Empty for the overflow bin, which is open to the right.
    pub bin_hi: Option<i64>,
    pub count: u64,
}

/// Writes `bin_lo,bin_hi,count`; the overflow bin comes last with an empty
/// `bin_hi`.
pub fn write_histogram_csv<W: Write>(out: W, dist: &DistributionEstimate) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in dist.bins() {
        w.serialize(HistogramRow {
            bin_lo: b.lo,
            bin_hi: Some(b.hi),
            count: b.count,
        })?;
    }
    w.serialize(HistogramRow {
        bin_lo: dist.cap(),
        bin_hi: None,
        count: dist.overflow,
    })?;
    w.flush()?;
    Ok(())
}

pub fn read_histogram_csv<R: Read>(input: R) -> Result<Vec<HistogramRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}
