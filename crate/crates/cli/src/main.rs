use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use market_selection::commands::{cmd_region, cmd_simulate, cmd_survival, cmd_verify_limits, exit_code};
use market_selection::config::RunConfig;
use market_selection::Result;

#[derive(Parser)]
#[command(name = "market-selection", version, about = "Market selection with learning and relative-consumption habits")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of simulated paths.
    #[arg(long, global = true)]
    paths: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate equilibrium paths and report survival.
    Simulate,
    /// Tabulate survival indices.
    Survival {
        /// Habit strengths to sweep every agent over, e.g. 0,0.5,1.
        #[arg(long, value_delimiter = ',')]
        beta_sweep: Option<Vec<f64>>,
    },
    /// Classify a grid of two-agent correlation beliefs.
    Region,
    /// Estimate the ergodic limits and filter decay rates.
    VerifyLimits,
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.paths {
        cfg.n_paths = n;
    }
    if let Some(dir) = &common.out {
        cfg.outputs.dir = dir.clone();
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    cfg.validate_common()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load(&cli.common)?;
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match cli.command {
        Command::Simulate => {
            let out = cmd_simulate(&cfg)?;
            println!("{}", out.report);
            for p in &out.paths {
                let slopes: Vec<String> = p
                    .extinction
                    .iter()
                    .map(|s| format!("agent {} slope {:.6} (theory {:.6})", s.agent, s.empirical, s.theoretical))
                    .collect();
                println!("path {}: final shares {:?} {}", p.path_index, p.final_shares, slopes.join(", "));
            }
        }
        Command::Survival { beta_sweep } => {
            if let Some(b) = beta_sweep {
                cfg.survival.beta_sweep = b;
                cfg.validate_common()?;
            }
            let out = cmd_survival(&cfg)?;
            println!("{}", out.report);
            if !out.sweep.is_empty() {
                println!("agent,beta,effective_gamma,kappa");
                for r in &out.sweep {
                    println!("{},{},{},{}", r.agent, r.beta, r.effective_gamma, r.kappa);
                }
            }
        }
        Command::Region => {
            let table = cmd_region(&cfg)?;
            println!(
                "{} cells, {} mismatches, {} excluded near the boundary",
                table.cells.len(),
                table.mismatches,
                table.excluded
            );
        }
        Command::VerifyLimits => {
            let out = cmd_verify_limits(&cfg)?;
            for (e, ok) in out.estimates.iter().zip(&out.pass) {
                let flag = if e.short_horizon || !ok { "warn" } else { "pass" };
                println!(
                    "{:<6} {:<18} closed form {:>10.6}  estimate {:>10.6} +- {:.6}  {flag}",
                    e.id.kind.label(),
                    e.id.params_label(),
                    e.closed_form,
                    e.estimate,
                    e.stderr
                );
            }
            println!("{} of {} entries flagged", out.warnings(), out.estimates.len());
        }
    }
    log::info!("outputs written to {}", cfg.outputs.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
