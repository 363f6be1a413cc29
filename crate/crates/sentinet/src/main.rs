//! Command-line front end. Exit codes: 0 = ran with no H1 verdicts,
//! 2 = ran and at least one H1 fired, 1 = error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use sentinet::gainsynth::save_gain;
use sentinet::harness::{
    cmd_check, cmd_detect_offline, cmd_far_calibrate, paper_fig2_config, prepare_instance,
    run_algorithm1, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "sentinet", version, about = "Distributed estimation and chi-square attack detection over sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOverrides {
    /// Override the run seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the replication count.
    #[arg(long)]
    replications: Option<usize>,
}

impl RunOverrides {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.run.out_dir = Some(dir.clone());
        }
        if let Some(reps) = self.replications {
            cfg.run.replications = reps;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Structural and numeric observability checks for a scenario.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Design the block-diagonal gain and write it to a file.
    SynthGain {
        #[arg(long)]
        config: PathBuf,
        /// Output path for the gain file.
        #[arg(long, default_value = "gain.json")]
        out: PathBuf,
    },
    /// Run the full pipeline and persist traces.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Empirical FAR on synthetic residuals over non-overlapping windows.
    FarCalibrate {
        /// Residual variance level the distances are normalized by.
        #[arg(long)]
        lambda: f64,
        /// Window length.
        #[arg(long)]
        t: usize,
        /// Comma-separated FAR list.
        #[arg(long, value_delimiter = ',')]
        fars: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        windows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional JSON output path; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply the detector to a persisted residual trace.
    Detect {
        /// Residual trace CSV (step,sensor,value).
        #[arg(long)]
        residuals: PathBuf,
        /// Comma-separated variance levels, one per sensor or a single
        /// shared level.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long)]
        t: usize,
        #[arg(long, value_delimiter = ',')]
        fars: Vec<f64>,
        /// Verdict CSV output path.
        #[arg(long, default_value = "verdicts.csv")]
        out: PathBuf,
    },
    /// Run a named built-in scenario.
    Reproduce {
        /// Scenario name; currently only "paper-fig2".
        scenario: String,
        #[command(flatten)]
        overrides: RunOverrides,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Check { config } => {
            let cfg = ScenarioConfig::from_file(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let report = cmd_check(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(false)
        }
        Command::SynthGain { config, out } => {
            let cfg = ScenarioConfig::from_file(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let inst = prepare_instance(&cfg)?;
            save_gain(&out, &inst.gains, cfg.gain.seed)?;
            println!(
                "gain written to {} (rho = {:.4}, margins = {:?})",
                out.display(),
                inst.gains.achieved_rho(),
                inst.gains.achieved_margins()
            );
            Ok(false)
        }
        Command::Simulate { config, overrides } => {
            let mut cfg = ScenarioConfig::from_file(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            overrides.apply(&mut cfg);
            let artifacts = run_algorithm1(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&artifacts)?);
            Ok(artifacts.any_h1)
        }
        Command::FarCalibrate {
            lambda,
            t,
            fars,
            windows,
            seed,
            out,
        } => {
            let rows = cmd_far_calibrate(lambda, t, &fars, windows, seed)?;
            let json = serde_json::to_string_pretty(&rows)?;
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            Ok(false)
        }
        Command::Detect {
            residuals,
            lambda,
            t,
            fars,
            out,
        } => {
            let any_h1 = cmd_detect_offline(&residuals, &lambda, t, &fars, &out)?;
            println!("verdicts written to {}", out.display());
            Ok(any_h1)
        }
        Command::Reproduce {
            scenario,
            overrides,
        } => {
            if scenario != "paper-fig2" {
                anyhow::bail!("unknown scenario \"{scenario}\"; available: paper-fig2");
            }
            let mut cfg = paper_fig2_config();
            overrides.apply(&mut cfg);
            let artifacts = run_algorithm1(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&artifacts)?);
            Ok(artifacts.any_h1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
