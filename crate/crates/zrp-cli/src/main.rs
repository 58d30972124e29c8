use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use zrp::Exec;
use zrp_cli::{run, ExperimentConfig, Job};

#[derive(Parser, Debug)]
#[command(name = "zrp", version, about = "Zero-range process condensation experiments")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 keeps the default).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Critical constants, resolved N and regime report.
    Compute,
    /// Exact law of S_L, conditional law of M_L and the site marginal.
    Oracle,
    /// Exact draws from the canonical measure.
    SampleExact,
    /// Metropolis draws from the canonical measure.
    SampleMcmc,
    /// Kinetic Monte Carlo of the ring dynamics.
    Dynamics,
    /// Acceptance suite; exits nonzero if any criterion fails.
    Verify {
        /// Criteria to run (repeatable); default all.
        #[arg(long = "criterion")]
        criteria: Vec<u8>,
    },
    /// Run whichever job the config names.
    Run,
}

impl Command {
    fn job(&self) -> Option<Job> {
        match self {
            Command::Compute => Some(Job::Compute),
            Command::Oracle => Some(Job::Oracle),
            Command::SampleExact => Some(Job::SampleExact),
            Command::SampleMcmc => Some(Job::SampleMcmc),
            Command::Dynamics => Some(Job::Dynamics),
            Command::Verify { .. } => Some(Job::Verify),
            Command::Run => None,
        }
    }
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, cli.command.job()) {
        (Some(p), job) => {
            let cfg = ExperimentConfig::load(p)?;
            if let Some(j) = job {
                if j != cfg.job {
                    bail!("job: config names {} but the subcommand is {j}", cfg.job);
                }
            }
            cfg
        }
        (None, Some(Job::Verify)) => ExperimentConfig::minimal(Job::Verify),
        (None, _) => bail!("--config is required for this subcommand"),
    };
    if let Command::Verify { criteria } = &cli.command {
        if !criteria.is_empty() {
            cfg.verify.criteria = criteria.clone();
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    zrp::par::set_workers(cli.jobs);
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let result = effective_config(&cli).and_then(|cfg| run(&cfg, exec));
    match result {
        Ok(out) => {
            if out.summary.get("criteria").is_none() {
                println!("{}", serde_json::to_string_pretty(&out.summary).unwrap_or_default());
            }
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            if out.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
