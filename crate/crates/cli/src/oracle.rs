use std::io::Write;
use std::path::Path;

use moneykin::engine::{EconomyKind, SimulationConfig};
use moneykin::ensemble::Bounds;
use moneykin::kernel::Symmetry;
use moneykin::oracle::{
    build_master, detailed_balance, pooled_marginal, stationary, verify_simulation, DetailedBalance,
    VerificationReport,
};
use moneykin::MoneyAmount;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::simulate::load_config;

/// Detailed balance must hold to this residual for time-reversible kernels.
pub const BALANCE_TOLERANCE: f64 = 1e-12;

pub struct OracleOutcome {
    pub states: usize,
    pub irreducible: bool,
    pub residual: f64,
    pub symmetry: Symmetry,
    pub balance: DetailedBalance,
    pub marginal: Vec<(i64, f64)>,
    pub verification: Option<VerificationReport>,
}

impl OracleOutcome {
    pub fn balance_ok(&self) -> bool {
        self.symmetry != Symmetry::TimeReversible || self.balance.holds(BALANCE_TOLERANCE)
    }
}

/// Support of a single balance the oracle should enumerate for `cfg`.
fn oracle_bounds(cfg: &SimulationConfig) -> CliResult<Bounds> {
    match cfg.economy_kind() {
        EconomyKind::Plain | EconomyKind::Lets => Ok(cfg.bounds),
        EconomyKind::Credit => {
            let c = cfg.credit.as_ref().expect("credit economy has a policy");
            match (c.debt_limit, c.interest_rate == 0.0, c.loan_term, &c.bank) {
                (Some(d), true, None, None) => Ok(Bounds::new(MoneyAmount(-d), None)?),
                _ => Err(CliError::config(
                    "the oracle covers credit runs only with a debt limit and no interest, loan term or bank",
                )),
            }
        }
    }
}

pub fn cmd_oracle(config: &Path, verify: Option<(u64, f64)>) -> CliResult<OracleOutcome> {
    let mut cfg = load_config(config)?;
    let bounds = oracle_bounds(&cfg)?;
    let total = cfg.total_money().0;
    let (space, q) = build_master(cfg.population, total, &cfg.kernel, bounds)?;
    let st = stationary(&q, None)?;
    let marginal = pooled_marginal(&space, &st.pi);
    let verification = match verify {
        None => None,
        Some((seed, tolerance)) => {
            cfg.seed = seed;
            Some(verify_simulation(&cfg, &marginal, tolerance, cfg.steps / 10)?)
        }
    };
    Ok(OracleOutcome {
        states: space.len(),
        irreducible: st.irreducible,
        residual: st.residual,
        symmetry: cfg.kernel.classify_symmetry(),
        balance: detailed_balance(&q, &st.pi),
        marginal,
        verification,
    })
}

#[derive(Serialize)]
struct Row {
    m: i64,
    #[serde(rename = "P")]
    p: f64,
}

pub fn write_marginal<W: Write>(out: W, marginal: &[(i64, f64)]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for &(m, p) in marginal {
        w.serialize(Row { m, p }).map_err(|e| CliError::Other(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))
}

pub fn summary(o: &OracleOutcome) -> Vec<String> {
    let mut lines = vec![
        format!("states: {}", o.states),
        format!("irreducible: {}", o.irreducible),
        format!("stationary residual: {:.3e}", o.residual),
        format!("kernel symmetry: {:?}", o.symmetry),
        format!(
            "detailed balance: max residual {:.3e} over {} edges ({})",
            o.balance.max_residual,
            o.balance.edges,
            match (o.symmetry, o.balance.holds(BALANCE_TOLERANCE)) {
                (Symmetry::TimeReversible, true) => "holds",
                (Symmetry::TimeReversible, false) => "VIOLATED",
                (_, true) => "holds, though not required",
                (_, false) => "not expected for this kernel",
            }
        ),
    ];
    if let Some(v) = &o.verification {
        lines.push(format!(
            "simulation: L1 {:.4e} after {} events (tolerance {}): {}",
            v.l1,
            v.events,
            v.tolerance,
            if v.passed { "matches" } else { "MISMATCH" }
        ));
    }
    lines
}
