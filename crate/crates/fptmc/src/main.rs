use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fptmc::commands::{self, AppError};
use fptmc::config::{load_config, LoadError, RunConfig};

#[derive(Parser)]
#[command(name = "fptmc", version, about = "First-passage-time Monte-Carlo for correlated jump-diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Override engine.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override engine.workers
    #[arg(long)]
    workers: Option<usize>,
    /// Override output.dir
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Densities, default rates and raw samples
    Simulate(Common),
    /// Default correlations of every firm pair
    Correlate(Common),
    /// Fit firm parameters to historical default rates
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Historical CSV; overrides calibration.historical
        #[arg(long)]
        historical: Option<PathBuf>,
    },
    /// CPU time per run of both engines
    Bench(Common),
    /// Regenerate the sum-of-uniforms correlation table
    SouTable {
        #[arg(long, default_value_t = 51)]
        points: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), AppError> {
    let mut config = load_config(&common.config).map_err(|e| match e {
        LoadError::Io(msg) => AppError::Io(msg),
        LoadError::Config(e) => AppError::Config(e),
    })?;
    if let Some(seed) = common.seed {
        config.engine.seed = seed;
    }
    if let Some(workers) = common.workers {
        config.engine.workers = workers;
    }
    config.validate()?;
    let out = common.out.clone().unwrap_or_else(|| config.output.dir.clone());
    Ok((config, out))
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Simulate(common) => {
            let (config, out) = load(&common)?;
            let report = commands::simulate(&config, &out)?;
            println!("runs {}  cpu per run {:.6e} s", report.runs, report.per_run_cpu_seconds);
            for f in &report.firms {
                match &f.bandwidth {
                    Some(bw) => {
                        print!("{}: {} samples, h_opt {:.6}", f.name, f.samples, bw.h);
                        if let Some(t) = bw.truncated_at {
                            print!(" (curvature integral started at {t:.3e}: gamma shape too small)");
                        }
                        println!();
                    }
                    None => println!("{}: {} samples, h_opt undefined", f.name, f.samples),
                }
            }
            report_out(&out);
        }
        Command::Correlate(common) => {
            let (config, out) = load(&common)?;
            let rows = commands::correlate(&config, &out)?;
            for r in &rows {
                println!("{} {} t={} aggregate {} per-cycle {}", r.firm_a, r.firm_b, r.t, fmt_opt(r.aggregate), fmt_opt(r.percycle));
            }
            report_out(&out);
        }
        Command::Calibrate { common, historical } => {
            let (config, out) = load(&common)?;
            let fit = commands::calibrate(&config, historical.as_deref(), &out)?;
            for f in &fit.firms {
                let p = &f.params;
                println!(
                    "{}: sigma {:.6} lambda {:.6} mu_z {:.6} sigma_z {:.6}  objective {:.6e}  {} evaluations{}",
                    f.rating,
                    p.sigma,
                    p.intensity,
                    p.jump_mean,
                    p.jump_std,
                    f.objective,
                    f.evaluations,
                    if f.converged { "" } else { "  (not converged)" }
                );
            }
            report_out(&out);
        }
        Command::Bench(common) => {
            let (config, out) = load(&common)?;
            let b = commands::bench(&config, &out)?;
            println!("conventional {:.6e} s/run", b.conventional_per_run);
            println!("munif        {:.6e} s/run", b.munif_per_run);
            match b.ratio {
                Some(r) => println!("ratio        {r:.1}"),
                None => println!("ratio        not reported: measurement below timer floor"),
            }
            report_out(&out);
        }
        Command::SouTable { points, samples, seed, out } => {
            commands::sou_table(points, samples, seed, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.5}"))
}

fn report_out(out: &Path) {
    println!("output in {}", out.display());
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fptmc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
