use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const A_FIRM: &str = r#"
[model]
horizon = 10.0
shocks = [0.1]

[[model.firms]]
name = "A"
sigma = 0.09
jumps = [{ mean = -0.2, std = 0.5 }]

[engine]
method = "munif"
delta = 0.05
runs = 5000
seed = 3
"#;

const TWO_FIRM: &str = r#"
[model]
horizon = 10.0
shocks = [0.1]
diffusion_correlation = 0.4

[[model.firms]]
name = "A"
sigma = 0.09
jumps = [{ mean = -0.2, std = 0.5 }]

[[model.firms]]
name = "Ba"
sigma = 0.1587
jumps = [{ mean = -0.5515, std = 1.6412 }]

[engine]
method = "munif"
runs = 20000
seed = 3
"#;

fn fptmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fptmc")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run(args: &[&str]) -> Output {
    let o = fptmc(args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn simulate_writes_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", A_FIRM);
    let out = dir.path().join("out");
    let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("h_opt") && stdout.contains("cpu per run"), "{stdout}");
    let density = fs::read_to_string(out.join("density.csv")).unwrap();
    assert_eq!(density.lines().next(), Some("firm,t,density"));
    assert_eq!(density.lines().count(), 201);
    let rates = fs::read_to_string(out.join("default_rates.csv")).unwrap();
    assert_eq!(rates.lines().next(), Some("firm,t,cumulative_rate"));
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert!(samples.starts_with("firm,run,time,weight,kind,crossing_time\n"));
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "two.toml", TWO_FIRM);
    let one = dir.path().join("one");
    let eight = dir.path().join("eight");
    run(&["simulate", "--config", &cfg, "--workers", "1", "--out", one.to_str().unwrap()]);
    run(&["simulate", "--config", &cfg, "--workers", "8", "--out", eight.to_str().unwrap()]);
    for f in ["density.csv", "default_rates.csv", "samples.csv"] {
        assert_eq!(fs::read(one.join(f)).unwrap(), fs::read(eight.join(f)).unwrap(), "{f}");
    }
    let other = dir.path().join("other");
    run(&["simulate", "--config", &cfg, "--seed", "4", "--out", other.to_str().unwrap()]);
    assert_ne!(fs::read(one.join("samples.csv")).unwrap(), fs::read(other.join("samples.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.toml", &A_FIRM.replace("runs = 5000", "runs = 0"));
    let o = fptmc(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("engine.runs"));

    let cfg = write_config(dir.path(), "typo.toml", &A_FIRM.replace("seed = 3", "sead = 3"));
    let o = fptmc(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sead"));

    let cfg = write_config(dir.path(), "a.toml", A_FIRM);
    let o = fptmc(&["correlate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.firms"));
}

#[test]
fn io_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", A_FIRM);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = fptmc(&["simulate", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = fptmc(&["simulate", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn correlate_writes_every_year() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "two.toml", TWO_FIRM);
    run(&["correlate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    let text = fs::read_to_string(dir.path().join("correlations.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("firm_a,firm_b,t,rho_aggregate,rho_percycle"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    assert!(rows[9].starts_with("A,Ba,10,"));
}

#[test]
fn bench_reports_both_engines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", &A_FIRM.replace("runs = 5000", "runs = 2000"));
    run(&["bench", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    let text = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "engine,per_run_cpu_seconds,ratio");
    assert!(lines[1].starts_with("conventional,"));
    assert!(lines[2].starts_with("munif,"));

    // a tiny horizon leaves both timings under the floor
    let tiny = A_FIRM.replace("horizon = 10.0", "horizon = 0.001").replace("delta = 0.05", "delta = 0.0005");
    let cfg = write_config(dir.path(), "tiny.toml", &tiny.replace("runs = 5000", "runs = 100"));
    run(&["bench", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    let text = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(',')), "{text}");
}

#[test]
fn calibrate_writes_params_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = format!("{A_FIRM}\n[calibration]\nruns = 2000\nmax_evaluations = 15\n");
    let cfg = write_config(dir.path(), "a.toml", &cfg_text);
    let hist = dir.path().join("hist.csv");
    fs::write(&hist, "rating,t_years,cumulative_default_rate\nA,1,0.0005\nA,5,0.004\nA,10,0.012\n").unwrap();
    let out = dir.path().join("out");
    run(&["calibrate", "--config", &cfg, "--historical", hist.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let fitted = fs::read_to_string(out.join("fitted_params.csv")).unwrap();
    assert_eq!(fitted.lines().next(), Some("rating,sigma,lambda,mu_z,sigma_z"));
    assert!(fitted.lines().nth(1).unwrap().starts_with("A,"));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    // the budget is checked once per simplex step, so a step may finish past it
    let evals: Vec<usize> = trace.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!((15..=19).contains(&evals.len()), "{}", evals.len());
    assert!(evals.iter().enumerate().all(|(k, &e)| k == e));

    fs::write(&hist, "rating,t_years,cumulative_default_rate\nBa,1,0.01\n").unwrap();
    let o = fptmc(&["calibrate", "--config", &cfg, "--historical", hist.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rating A"));

    fs::write(&hist, "rating,t_years,cumulative_default_rate\nA,1,1.2\n").unwrap();
    let o = fptmc(&["calibrate", "--config", &cfg, "--historical", hist.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn sou_table_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    run(&["sou-table", "--points", "11", "--samples", "20000", "--out", path.to_str().unwrap()]);
    let table = fptmc_core::stochastic::SouTable::parse(&fs::read_to_string(&path).unwrap()).unwrap();
    assert!((table.correlation_at(0.25) - 0.375).abs() < 0.03);
}
