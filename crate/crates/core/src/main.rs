use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cvqkd::report::{self, exit, RunConfig};
use cvqkd::Result;

#[derive(Parser)]
#[command(name = "cvqkd", version, about = "Gaussian-modulated CV-QKD rates, simulation, reconciliation and key extraction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form information rates and secret rate for one configuration
    Rates(Common),
    /// Effective secret rate against line noise for several modulations
    Fig1(Common),
    /// Monte Carlo frame with a self-test against the closed forms
    Simulate(Common),
    /// Sliced reconciliation of a simulated or synthetic frame
    Reconcile(Common),
    /// Full pipeline: simulate, reconcile, privacy amplification
    Keygen(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// CSV output; key and transcript files are written next to it
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Override any config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| cvqkd::Error::InvalidParameter {
                    name: "set",
                    reason: format!("expected KEY=VALUE, got `{kv}`"),
                })?;
            cfg.set(k, v)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.samples {
            cfg.samples = n;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        Ok(cfg)
    }
}

fn run(command: &Command) -> Result<u8> {
    Ok(match command {
        Command::Rates(c) => {
            print!("{}", report::cmd_rates(&c.resolve()?)?.summary());
            exit::OK
        }
        Command::Fig1(c) => {
            print!("{}", report::cmd_fig1(&c.resolve()?)?.summary());
            exit::OK
        }
        Command::Simulate(c) => {
            let out = report::cmd_simulate(&c.resolve()?)?;
            print!("{}", out.summary());
            if out.passed() {
                exit::OK
            } else {
                exit::SELF_TEST
            }
        }
        Command::Reconcile(c) => {
            let out = report::cmd_reconcile(&c.resolve()?)?;
            print!("{}", out.summary());
            if out.result.keys_agree() {
                exit::OK
            } else {
                exit::RECONCILIATION
            }
        }
        Command::Keygen(c) => {
            let out = report::cmd_keygen(&c.resolve()?)?;
            print!("{}", out.summary());
            if out.final_bits == 0 {
                exit::NO_KEY
            } else if !out.keys_identical() {
                exit::RECONCILIATION
            } else {
                exit::OK
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(report::exit_code(&e))
        }
    }
}
