use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use moneykin::engine::{equilibration_detect_series, read_trajectory_csv, window_means, Equilibration};
use moneykin::engine::{SimulationConfig, TrajectoryRow};
use moneykin::fit::{exponential_ks_test, fit_exponential_histogram};
use moneykin::measures::DistributionEstimate;
use moneykin::stats::linear_fit;

use crate::error::{read_input, CliError, CliResult};
use crate::simulate::{read_manifest, CONFIG, DISTRIBUTION};

/// Variance growth this linear is read as diffusion without a restoring force.
const LINEAR_GROWTH_R2: f64 = 0.95;
/// Window means shown in the entropy table.
const ENTROPY_ROWS: usize = 12;

fn open(dir: &Path, rel: &str) -> CliResult<BufReader<File>> {
    let p = dir.join(rel);
    File::open(&p)
        .map(BufReader::new)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))
}

fn mean_series(runs: &[Vec<TrajectoryRow>], f: impl Fn(&TrajectoryRow) -> Option<f64>) -> Option<Vec<f64>> {
    let len = runs.iter().map(Vec::len).min()?;
    (0..len)
        .map(|i| {
            let mut acc = 0.0;
            for r in runs {
                acc += f(&r[i])?;
            }
            Some(acc / runs.len() as f64)
        })
        .collect()
}

/// Tolerance for successive window means: the configured value, or three
/// standard errors of a difference of two window means if sampling noise is
/// larger. The standard error comes from the median within-window scatter.
fn plateau_tolerance(entropy: &[f64], window: usize, configured: f64) -> f64 {
    let mut se: Vec<f64> = entropy
        .chunks_exact(window.max(2))
        .map(|c| {
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            let var = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    if se.is_empty() {
        return configured;
    }
    se.sort_by(f64::total_cmp);
    configured.max(3.0 * std::f64::consts::SQRT_2 * se[se.len() / 2])
}

pub fn cmd_report(dir: &Path) -> CliResult<String> {
    let manifest = read_manifest(dir)?;
    let cfg = SimulationConfig::from_json(&read_input(&dir.join(CONFIG))?)
        .map_err(|e| CliError::from(e).in_file(&dir.join(CONFIG)))?;
    let mut runs = Vec::new();
    for rel in manifest.outputs.iter().filter(|o| o.ends_with("trajectory.csv")) {
        runs.push(read_trajectory_csv(open(dir, rel)?)?);
    }
    if runs.is_empty() || runs.iter().any(Vec::is_empty) {
        return Err(CliError::config(format!("{} holds no trajectory", dir.display())));
    }
    let dist: Option<DistributionEstimate> = if manifest.outputs.iter().any(|o| o == DISTRIBUTION) {
        Some(serde_json::from_reader(open(dir, DISTRIBUTION)?)?)
    } else {
        None
    };

    let ticks: Vec<u64> = runs[0].iter().map(|r| r.tick).collect();
    let sweeps: Vec<f64> = runs[0].iter().map(|r| r.sweep).collect();
    let entropy = mean_series(&runs, |r| Some(r.entropy)).unwrap_or_default();
    let window = cfg.measurement.window;
    let tolerance = plateau_tolerance(&entropy, window, cfg.measurement.tolerance);
    let eq = equilibration_detect_series(&ticks, &entropy, window, tolerance)?;

    let variance = mean_series(&runs, |r| Some(r.variance)).unwrap_or_default();
    // Past the first window, so the relaxation from equal balances is left out.
    let growth = cfg.credit.as_ref().and_then(|_| {
        let from = window.min(sweeps.len().saturating_sub(2));
        linear_fit(&sweeps[from..], &variance[from..], None)
    });
    let linear_growth = growth.is_some_and(|g| g.slope > 0.0 && g.r_squared > LINEAR_GROWTH_R2);
    let stationary = matches!(eq, Equilibration::At { .. }) && !linear_growth;

    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "# moneykin run report\n");
    let _ = writeln!(
        w,
        "Status: **{}**\n",
        if stationary { "stationary" } else { "non-stationary" }
    );
    let _ = writeln!(w, "- config hash: `{}`", manifest.config_hash);
    let _ = writeln!(w, "- seed {}, {} replica(s)", manifest.seed, manifest.replicas);
    let _ = writeln!(
        w,
        "- N = {}, M/N = {}, kernel `{}`",
        cfg.population,
        cfg.per_capita,
        serde_json::to_string(&cfg.kernel)?
    );
    let _ = writeln!(
        w,
        "- {} events ({:.1} sweeps), snapshot every {} events",
        cfg.steps,
        cfg.steps as f64 / cfg.population as f64,
        cfg.measure_every
    );
    let failed: Vec<&str> = manifest.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        let _ = writeln!(w, "- invariant checks: all {} passed", manifest.checks.len());
    } else {
        let _ = writeln!(w, "- invariant checks FAILED: {}", failed.join(", "));
    }

    let _ = writeln!(w, "\n## Temperature\n");
    match (cfg.measured_floor(), &dist) {
        (Some(floor), Some(d)) => {
            let _ = writeln!(
                w,
                "Stationary histogram: {} balances pooled over the second half of the run.\n",
                d.population
            );
            let _ = writeln!(w, "- expected T = M/N - floor = {}", cfg.per_capita - floor);
            match fit_exponential_histogram(d, floor) {
                Ok(f) => {
                    let _ = writeln!(
                        w,
                        "- exponential fit: T = {:.4} (95% CI {:.4} to {:.4})",
                        f.temperature, f.ci_low, f.ci_high
                    );
                    if let Some(l) = f.log_linear {
                        let _ = writeln!(
                            w,
                            "- log-linear fit: T = {:.4}, lattice mean {:.4}, R^2 {:.4}",
                            l.temperature, l.lattice_mean, l.r_squared
                        );
                    }
                }
                Err(e) => {
                    let _ = writeln!(w, "- exponential fit unavailable: {e}");
                }
            }
            if let Some((ks, p)) = exponential_ks_test(d, floor) {
                let _ = writeln!(w, "- KS distance to the exponential: {ks:.4} (p = {p:.3e})");
            }
        }
        _ => {
            let _ = writeln!(w, "No fixed support floor, so no exponential fit is made.");
        }
    }

    let _ = writeln!(w, "\n## Entropy\n");
    let means = window_means(&entropy, window);
    let sweep_means = window_means(&sweeps, window);
    if means.is_empty() {
        let _ = writeln!(w, "Fewer than {window} snapshots; no windowed entropy.");
    } else {
        let _ = writeln!(w, "Entropy per agent, replica mean over windows of {window} snapshots:\n");
        let _ = writeln!(w, "| sweep | entropy |\n|---:|---:|");
        let stride = means.len().div_ceil(ENTROPY_ROWS);
        for (k, (t, e)) in sweep_means.iter().zip(&means).enumerate() {
            if k % stride == 0 || k + 1 == means.len() {
                let _ = writeln!(w, "| {t:.1} | {e:.5} |");
            }
        }
        let _ = writeln!(w);
    }
    let _ = writeln!(w, "Plateau tolerance between successive windows: {tolerance:.2e}.\n");
    match eq {
        Equilibration::At { tick } => {
            let _ = writeln!(w, "Entropy plateau from tick {tick} (sweep {:.1}).", tick as f64 / cfg.population as f64);
        }
        Equilibration::NotEquilibrated => {
            let _ = writeln!(w, "non-stationary: entropy shows no plateau.");
        }
    }

    if let Some(g) = mean_series(&runs, |r| r.gini) {
        let _ = writeln!(w, "\n## Inequality\n");
        let _ = writeln!(w, "- final Gini coefficient: {:.4}", g[g.len() - 1]);
    }

    if let Some(c) = &cfg.credit {
        let _ = writeln!(w, "\n## Credit\n");
        match c.debt_limit {
            Some(d) => {
                let _ = writeln!(w, "- debt limit {d}");
            }
            None => {
                let _ = writeln!(w, "- unlimited debt");
            }
        }
        let _ = writeln!(w, "- interest {} per sweep", c.interest_rate);
        match growth {
            Some(g) => {
                let _ = writeln!(
                    w,
                    "- variance of net worth against sweeps: slope {:.4}, intercept {:.4}, R^2 {:.4}",
                    g.slope, g.intercept, g.r_squared
                );
                if linear_growth {
                    let _ = writeln!(w, "- non-stationary: variance grows linearly without bound");
                }
            }
            None => {
                let _ = writeln!(w, "- too few snapshots for a variance-growth fit");
            }
        }
    }
    Ok(s)
}
