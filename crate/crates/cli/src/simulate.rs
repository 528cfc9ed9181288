use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use moneykin::engine::{pooled_distribution, run_with_threads, write_histogram_csv, write_trajectory_csv};
use moneykin::engine::{SimulationConfig, Trajectory, SCHEMA_VERSION};
use moneykin::ensemble::SnapshotRow;
use moneykin::measures::{Binning, DistributionEstimate};
use moneykin::MoneyAmount;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{read_input, CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
/// Final-snapshot histogram, merged over replicas.
pub const HISTOGRAM: &str = "histogram.csv";
/// Histogram pooled over the second half of every replica, as JSON.
pub const DISTRIBUTION: &str = "distribution.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub moneykin: String,
    pub config_schema: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the resolved config as written to `config.json`.
    pub config_hash: String,
    pub seed: u64,
    pub replicas: u32,
    pub versions: Versions,
    /// Paths relative to the run directory.
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

pub struct SimulateArgs<'a> {
    pub config: &'a Path,
    pub out: &'a Path,
    pub seed: Option<u64>,
    pub replicas: Option<u32>,
    pub threads: Option<usize>,
    pub quiet: bool,
}

pub fn load_config(path: &Path) -> CliResult<SimulationConfig> {
    let text = read_input(path)?;
    SimulationConfig::from_json(&text).map_err(|e| CliError::from(e).in_file(path))
}

pub fn config_hash(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

struct Outputs<'a> {
    root: &'a Path,
    written: Vec<String>,
}

impl Outputs<'_> {
    fn create(&mut self, rel: &str) -> CliResult<BufWriter<fs::File>> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        self.written.push(rel.to_string());
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let mut w = self.create(rel)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Other(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&self.root.join(rel), e))
    }
}

fn write_replica(out: &mut Outputs, t: &Trajectory) -> CliResult<()> {
    let dir = format!("replica-{}", t.replica);
    write_trajectory_csv(out.create(&format!("{dir}/trajectory.csv"))?, &t.snapshots)?;

    let state = &t.final_state;
    let debt_net = state.debt_net();
    let money = match state.ensemble() {
        Some(e) => e.balances(),
        None => state.measured(),
    };
    let mut w = csv::Writer::from_writer(out.create(&format!("{dir}/ensemble.csv"))?);
    for (i, m) in money.iter().enumerate() {
        w.serialize(SnapshotRow {
            agent_id: i,
            money: *m,
            debt_net: debt_net.as_ref().map_or(MoneyAmount::ZERO, |d| d[i]),
        })
        .map_err(moneykin::Error::from)?;
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))?;

    if let Some(e) = state.ensemble() {
        out.json(&format!("{dir}/ensemble.json"), &e.sidecar())?;
    }
    if let Some(book) = state.debts() {
        book.write_csv(out.create(&format!("{dir}/debts.csv"))?)?;
    }
    if let Some(bank) = state.bank() {
        out.json(&format!("{dir}/bank.json"), &bank)?;
    }
    Ok(())
}

fn checks(runs: &[Trajectory]) -> Vec<Check> {
    let mut out = Vec::new();
    for t in runs {
        let a = &t.audit;
        let detail = match (a.first_violation, &a.last) {
            (None, _) => format!("{} audits passed", a.audits),
            (Some(tick), Some(last)) => format!(
                "first violation at tick {tick}; last audit: ledger {} vs balances {} (flux {}) {}",
                last.ledger_total,
                last.sum_of_balances,
                last.flux_total,
                last.violations.join("; ")
            ),
            (Some(tick), None) => format!("first violation at tick {tick}"),
        };
        out.push(Check {
            name: format!("replica {} money audit", t.replica),
            passed: a.passed(),
            detail,
        });
        if let Some(book) = t.final_state.debts() {
            let net: i64 = book.net_all().iter().map(|d| d.0).sum();
            out.push(Check {
                name: format!("replica {} debt book balanced", t.replica),
                passed: net == 0,
                detail: format!("sum of net debt positions = {net}"),
            });
        }
    }
    out
}

fn final_histogram(cfg: &SimulationConfig, runs: &[Trajectory]) -> CliResult<DistributionEstimate> {
    let mut merged = runs[0].last().distribution.clone();
    if runs[1..].iter().all(|t| merged.merge(&t.last().distribution).is_ok()) {
        return Ok(merged);
    }
    let all: Vec<MoneyAmount> = runs.iter().flat_map(|t| t.final_state.measured()).collect();
    let binning = Binning {
        lo: None,
        width: cfg.measurement.bin_width,
        cap: None,
    };
    Ok(DistributionEstimate::from_money(&all, binning)?)
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<RunManifest> {
    let started = Instant::now();
    let mut cfg = load_config(args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = r;
    }
    cfg.validate()?;
    fs::create_dir_all(args.out).map_err(|e| CliError::io(args.out, e))?;

    let runs = run_with_threads(&cfg, args.threads)?;

    let mut out = Outputs {
        root: args.out,
        written: Vec::new(),
    };
    let text = cfg.to_json();
    {
        let mut w = out.create(CONFIG)?;
        writeln!(w, "{text}")
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&args.out.join(CONFIG), e))?;
    }
    for t in &runs {
        write_replica(&mut out, t)?;
    }
    write_histogram_csv(out.create(HISTOGRAM)?, &final_histogram(&cfg, &runs)?)?;
    // Signed unbounded supports bin each snapshot over its own range, so
    // snapshots only pool when a floor fixes the binning.
    let half = cfg.steps / 2 / cfg.measure_every * cfg.measure_every;
    if let Ok(pooled) = pooled_distribution(&runs, half) {
        out.json(DISTRIBUTION, &pooled)?;
    }

    let checks = checks(&runs);
    let passed = checks.iter().all(|c| c.passed);
    let manifest = RunManifest {
        config_hash: config_hash(&text),
        seed: cfg.seed,
        replicas: cfg.replicas,
        versions: Versions {
            moneykin: env!("CARGO_PKG_VERSION").to_string(),
            config_schema: SCHEMA_VERSION,
        },
        outputs: out.written,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        checks,
        passed,
    };
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Other(e.to_string()))?;
    write_atomic(&args.out.join(MANIFEST), &bytes)?;

    if !args.quiet {
        for t in &runs {
            let s = t.last();
            eprintln!(
                "replica {}: {} events, acceptance {:.4}, final entropy {:.4}, T {:.4}",
                t.replica,
                t.counts.events,
                t.counts.acceptance_rate(),
                s.entropy,
                s.temperature
            );
        }
        eprintln!("wrote {} files to {}", manifest.outputs.len() + 1, args.out.display());
    }
    if !passed {
        let failed: Vec<&str> = manifest
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        return Err(CliError::Invariant(failed.join(", ")));
    }
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> CliResult<RunManifest> {
    let path: PathBuf = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(CliError::config(format!("{} is not a run directory (no {MANIFEST})", dir.display())));
    }
    let text = read_input(&path)?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}
