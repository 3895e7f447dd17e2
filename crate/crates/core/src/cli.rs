use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use coopnav::config::ScenarioConfig;
use coopnav::evaluation::{
    interruption_sweep, run_scenario, write_epoch_csv, write_summary_json, write_sweep_csv, MethodMode,
};
use coopnav::simulator::Scenario;

pub const EPOCHS_FILE: &str = "epochs.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_RUNS_FILE: &str = "sweep_runs.csv";
pub const SWEEP_AGGREGATE_FILE: &str = "sweep_aggregate.csv";
pub const MEASUREMENTS_FILE: &str = "measurements.jsonl";

/// Plane-constraint-aided cooperative positioning experiments.
#[derive(Debug, Parser)]
#[command(name = "coopnav", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write per-epoch errors and a summary.
    Run(Common),
    /// Run the interruption-rate sweep described by the config.
    Sweep(Common),
    /// Parse and validate a config without running anything.
    ValidateConfig(Common),
    /// Write the simulated measurement stream as JSON lines.
    DumpMeasurements(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Estimation method; for sweeps, restricts the sweep to this method.
    #[arg(long)]
    mode: Option<MethodMode>,
    /// Overrides the range drop rate; for sweeps, replaces the rate list.
    #[arg(long)]
    interruption_rate: Option<f64>,
    /// Replaces the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "output")]
    output: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0:#}")]
    Invalid(anyhow::Error),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Invalid(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = ScenarioConfig::load(&self.config).map_err(invalid)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(rate) = self.interruption_rate {
            cfg.interruption_rate = rate;
            if let Some(s) = cfg.sweep.as_mut() {
                s.rates = vec![rate];
            }
        }
        if let (Some(mode), Some(s)) = (self.mode, cfg.sweep.as_mut()) {
            s.modes = vec![mode];
        }
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }

    fn output_file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        fs::create_dir_all(&self.output)
            .with_context(|| format!("cannot create output directory {}", self.output.display()))
            .map_err(runtime)?;
        let path = self.output.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .with_context(|| format!("cannot create {}", path.display()))
            .map_err(runtime)
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run(&args),
        Command::Sweep(args) => sweep(&args),
        Command::ValidateConfig(args) => {
            args.load()?;
            println!("ok: {}", args.config.display());
            Ok(())
        }
        Command::DumpMeasurements(args) => {
            let cfg = args.load()?;
            let mut out = args.output_file(MEASUREMENTS_FILE)?;
            Scenario::new(&cfg).dump_jsonl(&mut out).map_err(runtime)?;
            finish(out, &args.output, MEASUREMENTS_FILE)
        }
    }
}

fn finish(mut out: BufWriter<File>, dir: &Path, name: &str) -> Result<(), CliError> {
    out.flush()
        .with_context(|| format!("cannot write {}", dir.join(name).display()))
        .map_err(runtime)
}

fn run(args: &Common) -> Result<(), CliError> {
    let cfg = args.load()?;
    let mode = args.mode.or(cfg.mode).unwrap_or(MethodMode::PcAided);
    let report = run_scenario(&cfg, mode).map_err(runtime)?;

    let mut epochs = args.output_file(EPOCHS_FILE)?;
    write_epoch_csv(&mut epochs, &report.records).map_err(runtime)?;
    finish(epochs, &args.output, EPOCHS_FILE)?;
    let mut summary = args.output_file(SUMMARY_FILE)?;
    write_summary_json(&mut summary, &report).map_err(runtime)?;
    finish(summary, &args.output, SUMMARY_FILE)?;

    let s = &report.summary;
    println!(
        "{mode} vehicle {}: h_rmse {:.3} m, v_rmse {:.3} m, cep95 {:.3} m over {} epochs",
        report.target_vehicle, s.h_rmse, s.v_rmse, s.cep95, s.samples
    );
    Ok(())
}

fn sweep(args: &Common) -> Result<(), CliError> {
    let cfg = args.load()?;
    let Some(plan) = cfg.sweep.clone() else {
        return Err(invalid(anyhow::anyhow!(
            "config {} has no [sweep] section",
            args.config.display()
        )));
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(invalid(anyhow::anyhow!("--jobs must be at least 1")));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(runtime)?;
    let report = pool.install(|| interruption_sweep(&cfg, &plan)).map_err(runtime)?;

    let mut runs = args.output_file(SWEEP_RUNS_FILE)?;
    let mut aggregate = args.output_file(SWEEP_AGGREGATE_FILE)?;
    write_sweep_csv(&mut runs, &mut aggregate, &report).map_err(runtime)?;
    finish(runs, &args.output, SWEEP_RUNS_FILE)?;
    finish(aggregate, &args.output, SWEEP_AGGREGATE_FILE)?;

    for row in &report.aggregate {
        println!(
            "rate {:.2} {}: median h_rmse {:.3} m, v_rmse {:.3} m over {} runs",
            row.rate, row.mode, row.h_rmse, row.v_rmse, row.runs
        );
    }
    Ok(())
}
