use serde::{Deserialize, Serialize};

use crate::credit::CreditPolicy;
use crate::ensemble::{AgentId, Bounds};
use crate::error::{config, Error, Result};
use crate::kernel::ExchangeKernel;
use crate::measures::EntropyMode;
use crate::money::MoneyAmount;

pub const SCHEMA_VERSION: u32 = 1;

/// A complete, reproducible description of a simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub schema_version: u32,
    pub population: usize,
    /// Initial money of every agent in minor units. Must be zero for LETS
    /// runs, whose balances start at zero by construction.
    pub per_capita: i64,
    pub kernel: ExchangeKernel,
    #[serde(default)]
    pub bounds: Bounds,
    #[serde(default)]
    pub credit: Option<CreditPolicy>,
    /// Number of events (transaction attempts).
    pub steps: u64,
    pub seed: u64,
    /// Events between snapshots; must divide `steps`.
    pub measure_every: u64,
    #[serde(default = "one")]
    pub replicas: u32,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub test_hooks: TestHooks,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Histogram bin width in minor units.
    #[serde(default = "unit_width")]
    pub bin_width: i64,
    /// Exclusive right edge of the regular bins, measured from the lower
    /// edge of the support; default `20 T_m`. Unbounded signed supports
    /// always cover the observed range.
    #[serde(default)]
    pub cap: Option<i64>,
    #[serde(default)]
    pub entropy: EntropyMode,
    /// Snapshots per equilibration window.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Entropy change per window (nats per agent) regarded as a plateau.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn unit_width() -> i64 {
    1
}

fn default_window() -> usize {
    10
}

fn default_tolerance() -> f64 {
    1e-3
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        MeasurementConfig {
            bin_width: 1,
            cap: None,
            entropy: EntropyMode::Shannon,
            window: default_window(),
            tolerance: default_tolerance(),
        }
    }
}

/// Deliberate faults, used to exercise the invariant checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestHooks {
    #[serde(default)]
    pub unlogged_mutation: Option<UnloggedMutation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnloggedMutation {
    pub tick: u64,
    pub agent: AgentId,
    pub amount: i64,
}

/// Which state representation a config runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EconomyKind {
    Plain,
    Lets,
    Credit,
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimulationConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Plain additive run with default bounds and measurement.
    pub fn simple(
        population: usize,
        per_capita: i64,
        kernel: ExchangeKernel,
        steps: u64,
        measure_every: u64,
        seed: u64,
    ) -> Self {
        SimulationConfig {
            schema_version: SCHEMA_VERSION,
            population,
            per_capita,
            kernel,
            bounds: Bounds::default(),
            credit: None,
            steps,
            seed,
            measure_every,
            replicas: 1,
            measurement: MeasurementConfig::default(),
            test_hooks: TestHooks::default(),
        }
    }

    pub fn economy_kind(&self) -> EconomyKind {
        if self.kernel.is_lets() {
            EconomyKind::Lets
        } else if self.credit.is_some() {
            EconomyKind::Credit
        } else {
            EconomyKind::Plain
        }
    }

    pub fn total_money(&self) -> MoneyAmount {
        MoneyAmount(self.per_capita * self.population as i64)
    }

    /// Lowest value the measured balance can take, if bounded: `m_min`,
    /// `m̃_min` for LETS, or `-m_d` under a debt limit. Interest and defaults
    /// move `w̃` outside trades, so with either the floor is not enforced.
    pub fn measured_floor(&self) -> Option<i64> {
        match self.economy_kind() {
            EconomyKind::Plain | EconomyKind::Lets => Some(self.bounds.min.0),
            EconomyKind::Credit => self
                .credit
                .as_ref()
                .filter(|c| c.interest_rate == 0.0 && c.loan_term.is_none())
                .and_then(|c| c.debt_limit)
                .map(|d| -d),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.population < 2 {
            return config("population must be at least 2 for pairwise exchange");
        }
        if self.steps == 0 {
            return config("steps must be at least 1");
        }
        if self.measure_every == 0 || !self.steps.is_multiple_of(self.measure_every) {
            return config(format!(
                "measure_every ({}) must be positive and divide steps ({})",
                self.measure_every, self.steps
            ));
        }
        if self.replicas == 0 {
            return config("replicas must be at least 1");
        }
        Bounds::new(self.bounds.min, self.bounds.max)?;
        let m = &self.measurement;
        if m.bin_width < 1 {
            return config("measurement.bin_width must be at least 1");
        }
        if m.cap.is_some_and(|c| c < 1) {
            return config("measurement.cap must be positive");
        }
        if m.window < 2 {
            return config("measurement.window must be at least 2 snapshots");
        }
        if !(m.tolerance > 0.0) {
            return config("measurement.tolerance must be positive");
        }
        match self.economy_kind() {
            EconomyKind::Lets => {
                if self.credit.is_some() {
                    return config("LETS runs cannot also enable the credit layer");
                }
                if self.per_capita != 0 {
                    return config("LETS balances start at zero; set per_capita to 0");
                }
                if self.bounds.min >= MoneyAmount::ZERO {
                    return config("LETS runs need a negative lower bound");
                }
                if self.bounds.max.is_some_and(|u| u <= MoneyAmount::ZERO) {
                    return config("LETS upper bound must be positive");
                }
            }
            EconomyKind::Credit => {
                let c = self.credit.as_ref().unwrap();
                c.validate()?;
                if self.bounds != Bounds::default() {
                    return config("credit runs keep money within the default bounds m >= 0");
                }
                if self.per_capita < 0 {
                    return config("per_capita must be nonnegative");
                }
            }
            EconomyKind::Plain => {
                if !self.bounds.contains(MoneyAmount(self.per_capita)) {
                    return config(format!(
                        "per_capita {} lies outside the configured bounds",
                        self.per_capita
                    ));
                }
            }
        }
        if let Some(h) = self.test_hooks.unlogged_mutation {
            if h.agent >= self.population {
                return config("test hook names an unknown agent");
            }
            if h.tick == 0 || h.tick > self.steps {
                return config("test hook tick must lie within the run");
            }
        }
        Ok(())
    }
}
