use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ram_dpm::config::parse_config;
use ram_dpm::pipeline::{exit_code, run, Command};

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Parser)]
#[command(
    name = "ram-dpm",
    version,
    about = "Dirichlet process mixtures for repeated-attempt designs"
)]
struct Invocation {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Generate a simulated dataset and its true treatment effect.
    Simulate(Common),
    /// Run the Gibbs sampler and write the retained draws.
    Fit(Common),
    /// Treatment effect and goodness-of-fit table from a draws file.
    Estimate(Common),
    /// Goodness-of-fit table from a draws file.
    Gof(Common),
    /// Replicated simulation study.
    Bench(Common),
}

fn report(kind: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let inv = match Invocation::try_parse() {
        Ok(i) => i,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let (command, common) = match inv.command {
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::Fit(c) => (Command::Fit, c),
        Sub::Estimate(c) => (Command::Estimate, c),
        Sub::Gof(c) => (Command::Gof, c),
        Sub::Bench(c) => (Command::Bench, c),
    };
    let result = parse_config(&common.config).and_then(|mut cfg| {
        if let Some(seed) = common.seed {
            cfg.model.seed = seed;
            cfg.bench.base_seed = seed;
        }
        run(command, &cfg, &common.out)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind(), &e.to_string());
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
