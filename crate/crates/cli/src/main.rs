use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sagin_core::distributed::Mode;
use sagin_core::harness::{self, ExperimentConfig, RouteRequest};
use sagin_core::Error;

/// Multi-objective routing experiments for integrated airplane / satellite / ship networks.
#[derive(Parser)]
#[command(name = "sagin", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; replaces every named seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write time-shifted train and test scenarios.
    GenScenario {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        force: bool,
    },
    /// Compute exact routing labels on the train scenario.
    BuildLabels {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the network on the label file.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Route one packet hop by hop with the trained model.
    Route {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        src: String,
        /// Defaults to the scenario's destination.
        #[arg(long)]
        dst: Option<String>,
        /// Seconds since the scenario epoch.
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 0.0)]
        eps_c_mbps: f64,
        #[arg(long, default_value_t = 0.0)]
        eps_l_min: f64,
        #[arg(long, default_value = "mo")]
        mode: Mode,
    },
    /// Pareto front for one pair, swept over the evaluation threshold grid.
    Pareto {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        src: String,
        #[arg(long)]
        dst: Option<String>,
        #[arg(long)]
        t: f64,
        /// Every Pareto-optimal path instead of the grid-reachable ones.
        #[arg(long)]
        full: bool,
    },
    /// Coverage, fronts and learned-route comparison on the test scenario.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(v)?)
}

fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenScenario { common, force } => print_json(&harness::cmd_gen_scenario(&load(&common)?, force)?),
        Cmd::BuildLabels { common } => print_json(&harness::cmd_build_labels(&load(&common)?)?),
        Cmd::Train { common } => {
            let report = harness::cmd_train(&load(&common)?)?;
            emit(&format!(
                "trained on {} samples ({} held out); final train loss {:.5}, val loss {:.5}",
                report.train_samples,
                report.val_samples,
                report.train_loss.last().copied().unwrap_or(f64::NAN),
                report.val_loss.last().copied().unwrap_or(f64::NAN)
            ))
        }
        Cmd::Route {
            common,
            src,
            dst,
            t,
            eps_c_mbps,
            eps_l_min,
            mode,
        } => {
            let req = RouteRequest {
                src,
                dst,
                t,
                eps_c_mbps,
                eps_l_min,
                mode,
            };
            let res = harness::cmd_route(&load(&common)?, &req)?;
            print_json(&res.outcome)
        }
        Cmd::Pareto { common, src, dst, t, full } => {
            let front = harness::cmd_pareto(&load(&common)?, &src, dst.as_deref(), t, full)?;
            let mut text = String::from("delay_s,throughput_bps,lifetime_s,hops");
            for p in front {
                text += &format!("\n{},{},{},{}", p.delay_s, p.throughput_bps, p.lifetime_s, p.hops());
            }
            emit(&text)
        }
        Cmd::Evaluate { common } => print_json(&harness::cmd_evaluate(&load(&common)?)?.summary),
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config(_))))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { 1 } else { 2 })
        }
    }
}
