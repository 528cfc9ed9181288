use std::io::Write;
use std::path::Path;

use moneykin::fokker_planck::{fp_stationary, fp_step, FpProblem, Scheme, StepOptions};
use serde::Serialize;

use crate::error::{read_input, CliError, CliResult};

/// Final profile after `steps` implicit steps of `dt`, or the stationary
/// profile when no time stepping is asked for.
pub fn cmd_fp_solve(config: &Path, transient: Option<(f64, usize)>) -> CliResult<(FpProblem, Vec<f64>)> {
    let problem: FpProblem = serde_json::from_str(&read_input(config)?)
        .map_err(|e| CliError::config(format!("{}: {e}", config.display())))?;
    problem.validate()?;
    let p = match transient {
        None => fp_stationary(&problem)?,
        Some((dt, steps)) => fp_step(
            &problem,
            &StepOptions {
                dt,
                steps,
                scheme: Scheme::Implicit,
                record_every: None,
            },
        )?
        .last()
        .to_vec(),
    };
    Ok((problem, p))
}

#[derive(Serialize)]
struct Row {
    m: f64,
    #[serde(rename = "P")]
    p: f64,
}

pub fn write_profile<W: Write>(out: W, problem: &FpProblem, p: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for (m, &p) in problem.centers().into_iter().zip(p) {
        w.serialize(Row { m, p }).map_err(|e| CliError::Other(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))
}
