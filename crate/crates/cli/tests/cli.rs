use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use moneykin::credit::BankReport;
use moneykin::engine::{read_histogram_csv, read_trajectory_csv, SimulationConfig};
use moneykin::ensemble::{Ensemble, EnsembleSidecar};
use moneykin::fit::{synthetic_exponential, synthetic_mixture};
use moneykin::fokker_planck::{cell_averages, l1_distance, mass, Coefficient, FpProblem};
use serde_json::Value;
use tempfile::TempDir;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn moneykin(args: &[&str]) -> Output {
    moneykin_env(args, &[])
}

fn moneykin_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_moneykin"));
    cmd.args(args).env_remove("MONEYKIN_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--quiet", "simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    moneykin(&args)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &SimulationConfig) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, cfg.to_json()).unwrap();
    p
}

fn small_additive() -> SimulationConfig {
    let text = fs::read_to_string(example("additive.json")).unwrap();
    let mut cfg = SimulationConfig::from_json(&text).unwrap();
    cfg.population = 200;
    cfg.steps = 200_000;
    cfg.measure_every = 2_000;
    cfg
}

#[test]
fn bundled_additive_run_writes_every_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = simulate(&example("additive.json"), &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let m = manifest(&out);
    assert_eq!(m["passed"], true);
    assert_eq!(m["replicas"], 2);
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for f in ["config.json", "histogram.csv", "distribution.json", "replica-0/trajectory.csv", "replica-1/ensemble.csv"] {
        assert!(outputs.contains(&f), "{f} missing from {outputs:?}");
    }
    for f in &outputs {
        assert!(out.join(f).is_file(), "{f} not on disk");
    }
    assert!(!out.join("manifest.json.tmp").exists());

    let cfg = SimulationConfig::from_json(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    let traj = read_trajectory_csv(fs::File::open(out.join("replica-0/trajectory.csv")).unwrap()).unwrap();
    assert_eq!(traj.len() as u64, cfg.steps / cfg.measure_every + 1);
    let hist = read_histogram_csv(fs::File::open(out.join("histogram.csv")).unwrap()).unwrap();
    let counted: u64 = hist.iter().map(|r| r.count).sum();
    assert_eq!(counted, (cfg.population * cfg.replicas as usize) as u64);

    let sidecar: EnsembleSidecar =
        serde_json::from_str(&fs::read_to_string(out.join("replica-0/ensemble.json")).unwrap()).unwrap();
    let (ens, debts) = Ensemble::read_snapshot(fs::File::open(out.join("replica-0/ensemble.csv")).unwrap(), sidecar).unwrap();
    assert_eq!(ens.total_money(), cfg.total_money());
    assert!(ens.audit().passed);
    assert!(debts.iter().all(|d| d.0 == 0));
}

#[test]
fn identical_config_and_seed_give_identical_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &small_additive());
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(code(&simulate(&cfg, &a, &[])), 0);
    let serial = moneykin_env(
        &["--quiet", "simulate", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()],
        &[("MONEYKIN_THREADS", "1")],
    );
    assert_eq!(code(&serial), 0);
    assert_eq!(code(&simulate(&cfg, &c, &["--seed", "99"])), 0);

    let (ma, mb, mc) = (manifest(&a), manifest(&b), manifest(&c));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_ne!(ma["config_hash"], mc["config_hash"]);
    assert_eq!(mc["seed"], 99);
    for f in ma["outputs"].as_array().unwrap() {
        let f = f.as_str().unwrap();
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_ne!(
        fs::read(a.join("histogram.csv")).unwrap(),
        fs::read(c.join("histogram.csv")).unwrap()
    );
}

#[test]
fn replicas_flag_overrides_the_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &small_additive());
    let out = tmp.path().join("r");
    assert_eq!(code(&simulate(&cfg, &out, &["--replicas", "3"])), 0);
    assert_eq!(manifest(&out)["replicas"], 3);
    assert!(out.join("replica-2/trajectory.csv").is_file());
}

#[test]
fn malformed_json_exits_2_with_a_location() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\n  \"schema_version\": 1,\n  \"population\": ,\n}").unwrap();
    let o = simulate(&bad, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3 column"), "{}", stderr(&o));
}

#[test]
fn invalid_config_and_thread_cap_exit_2() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_additive();
    cfg.measure_every = 3_001;
    let p = write_config(tmp.path(), "c.json", &cfg);
    assert_eq!(code(&simulate(&p, &tmp.path().join("o"), &[])), 2);
    let good = write_config(tmp.path(), "g.json", &small_additive());
    let o = moneykin_env(
        &["simulate", "--config", good.to_str().unwrap(), "--out", tmp.path().join("t").to_str().unwrap()],
        &[("MONEYKIN_THREADS", "zero")],
    );
    assert_eq!(code(&o), 2);
    assert_eq!(code(&simulate(&tmp.path().join("missing.json"), &tmp.path().join("m"), &[])), 2);
}

#[test]
fn conservation_fault_exits_3_and_is_recorded() {
    let tmp = TempDir::new().unwrap();
    let mut text: Value = serde_json::from_str(&small_additive().to_json()).unwrap();
    text["test_hooks"] = serde_json::json!({ "unlogged_mutation": { "tick": 5000, "agent": 3, "amount": 7 } });
    let p = tmp.path().join("fault.json");
    fs::write(&p, text.to_string()).unwrap();
    let out = tmp.path().join("out");
    let o = simulate(&p, &out, &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["passed"], false);
    let failed: Vec<&Value> = m["checks"].as_array().unwrap().iter().filter(|c| c["passed"] == false).collect();
    assert_eq!(failed.len(), 2, "both replicas carry the fault: {failed:?}");
}

#[test]
fn credit_and_bank_runs_write_their_ledgers() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("bank");
    assert_eq!(code(&simulate(&example("bank.json"), &out, &[])), 0);
    let debts = fs::read_to_string(out.join("replica-0/debts.csv")).unwrap();
    assert!(debts.starts_with("lender,borrower,principal,accrued,status"));
    let bank: BankReport = serde_json::from_str(&fs::read_to_string(out.join("replica-0/bank.json")).unwrap()).unwrap();
    assert_eq!(bank.deposits.0, bank.reserves.0 + bank.loans.0);
    assert!(bank.loans.0 > 0);
    assert!(bank.reserves.0 as f64 >= bank.reserve_ratio * bank.deposits.0 as f64);
}

fn write_incomes(path: &Path, values: &[f64]) {
    let mut s = String::from("income\n");
    for v in values {
        s.push_str(&format!("{v}\n"));
    }
    fs::write(path, s).unwrap();
}

fn fit(data: &Path) -> (i32, Value) {
    let o = moneykin(&["fit", data.to_str().unwrap()]);
    let v = serde_json::from_slice(&o.stdout).unwrap_or(Value::Null);
    (code(&o), v)
}

#[test]
fn fit_of_exponential_data_finds_no_upper_class() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("exp.csv");
    write_incomes(&p, &synthetic_exponential(100_000, 30.0, 21));
    let (c, v) = fit(&p);
    assert_eq!(c, 0);
    assert!(v["f"].as_f64().unwrap().abs() < 0.02, "{v}");
    assert!((v["G_empirical"].as_f64().unwrap() - 0.5).abs() < 0.01, "{v}");
}

#[test]
fn fit_of_a_mixture_populates_every_field() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("mix.csv");
    write_incomes(&p, &synthetic_mixture(100_000, 30.0, 0.03, 150.0, 2.0, 22));
    let out = tmp.path().join("fit.json");
    let o = moneykin(&["fit", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for k in ["T", "alpha", "r_star", "f", "G_pred", "G_empirical"] {
        assert!(v[k].as_f64().is_some_and(f64::is_finite), "{k} in {v}");
    }
    assert!(v["diagnostics"].is_object());
    let f = v["f"].as_f64().unwrap();
    assert_eq!(v["G_pred"].as_f64().unwrap(), (1.0 + f) / 2.0);
}

#[test]
fn fit_input_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(fit(&tmp.path().join("absent.csv")).0, 2);
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(fit(&empty).0, 2);
    let neg = tmp.path().join("neg.csv");
    fs::write(&neg, "income\n10\n-3\n").unwrap();
    let o = moneykin(&["fit", neg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn fp_solve_matches_the_exponential_profile() {
    let o = moneykin(&["fp-solve", "--config", example("fp_constant.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    assert_eq!(rdr.headers().unwrap(), vec!["m", "P"]);
    let rows: Vec<(f64, f64)> = rdr.deserialize().map(Result::unwrap).collect();
    let problem = FpProblem::new(0.0, 200.0, 2000, Coefficient::constant(1.0), Coefficient::constant(10.0));
    assert_eq!(rows.len(), problem.cells);
    let p: Vec<f64> = rows.iter().map(|r| r.1).collect();
    // Normalized e^{-x/10} on [0, 200], cell-averaged through its antiderivative.
    let z = 10.0 * (1.0 - (-20.0f64).exp());
    let exact = cell_averages(&problem, |x| -10.0 * (-x / 10.0).exp() / z);
    assert!(l1_distance(&p, &exact, problem.width()) < 1e-3);
    assert!((mass(&p, problem.width()) - 1.0).abs() < 1e-9);
}

#[test]
fn fp_solve_rejects_a_bad_problem() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("fp.json");
    fs::write(
        &p,
        r#"{"grid_min": 5, "grid_max": 1, "cells": 10,
            "drift": {"kind": "constant", "value": 1}, "diffusion": {"kind": "constant", "value": 1}}"#,
    )
    .unwrap();
    assert_eq!(code(&moneykin(&["fp-solve", "--config", p.to_str().unwrap()])), 2);
}

#[test]
fn oracle_prints_the_exact_marginal() {
    let o = moneykin(&["oracle", "--config", example("oracle_small.json").to_str().unwrap(), "--verify"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("states: 10"), "{err}");
    assert!(err.contains("(holds)"), "{err}");
    assert!(err.contains("matches"), "{err}");
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let rows: Vec<(i64, f64)> = rdr.deserialize().map(Result::unwrap).collect();
    let expected = [(0, 0.4), (1, 0.3), (2, 0.2), (3, 0.1)];
    assert_eq!(rows.len(), expected.len());
    for ((m, p), (em, ep)) in rows.iter().zip(expected) {
        assert_eq!(*m, em);
        assert!((p - ep).abs() < 1e-12);
    }
}

#[test]
fn oracle_refuses_large_systems() {
    let o = moneykin(&["oracle", "--config", example("additive.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("guard"), "{}", stderr(&o));
}

fn report(dir: &Path) -> (i32, String) {
    let o = moneykin(&["report", dir.to_str().unwrap()]);
    (code(&o), String::from_utf8_lossy(&o.stdout).into_owned())
}

#[test]
fn report_of_an_additive_run_states_the_exponential_fit() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(code(&simulate(&example("additive.json"), &out, &[])), 0);
    let (c, text) = report(&out);
    assert_eq!(c, 0);
    assert!(text.contains("Status: **stationary**"), "{text}");
    // On the lattice the exponential temperature is the mean excess over
    // the floor of the pooled histogram.
    let d: Value = serde_json::from_str(&fs::read_to_string(out.join("distribution.json")).unwrap()).unwrap();
    let t = d["mean"].as_f64().unwrap() - d["lo"].as_f64().unwrap();
    assert!(text.contains(&format!("exponential fit: T = {t:.4}")), "{text}");
    assert!(text.contains("KS distance to the exponential"));
}

#[test]
fn report_flags_unlimited_debt_as_non_stationary() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(code(&simulate(&example("credit_unlimited.json"), &out, &[])), 0);
    let (c, text) = report(&out);
    assert_eq!(c, 0);
    assert!(text.contains("Status: **non-stationary**"), "{text}");
    assert!(text.contains("variance grows linearly"), "{text}");
}

#[test]
fn report_of_an_empty_directory_exits_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(report(tmp.path()).0, 2);
}
