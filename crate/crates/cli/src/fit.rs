use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use moneykin::fit::{ingest_income_table, two_class_decompose, CrossoverPolicy, TwoClassFit, TwoClassOptions};

use crate::error::{read_input, CliError, CliResult};

pub fn cmd_fit(data: &Path, options: Option<&Path>, ks_scan: bool) -> CliResult<TwoClassFit> {
    let mut opts = match options {
        Some(p) => serde_json::from_str::<TwoClassOptions>(&read_input(p)?)
            .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?,
        None => TwoClassOptions::default(),
    };
    if ks_scan {
        opts.crossover = CrossoverPolicy::KsScan;
    }
    let file = File::open(data).map_err(|e| CliError::config(format!("cannot read {}: {e}", data.display())))?;
    let sample = ingest_income_table(BufReader::new(file))
        .map_err(|e| CliError::from(e).in_file(data))?;
    Ok(two_class_decompose(&sample, &opts)?)
}
