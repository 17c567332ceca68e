//! `unifed` — deterministic federated-learning simulator over heterogeneous
//! classification tasks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use unifed_cli::{
    cmd_alpha_sweep, cmd_bench, cmd_run, load_config, parse_avg, parse_order, resolve_out_root,
    AlgorithmName, Overrides, RunConfig, ScenarioName,
};
use unifed_core::Error;

#[derive(Parser)]
#[command(
    name = "unifed",
    about = "Simulate federated learning over a mixture of heterogeneous classification tasks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mixing weight in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long = "local-epochs")]
    local_epochs: Option<usize>,
    /// Non-IID scenario: strong | moderate (bench also accepts both).
    #[arg(long)]
    scenario: Option<String>,
    /// Curriculum direction: asc | desc.
    #[arg(long)]
    order: Option<String>,
    /// Relay hospital-to-hospital instead of through the server.
    #[arg(long = "direct-relay")]
    direct_relay: bool,
    /// Metric averaging: macro | micro.
    #[arg(long)]
    avg: Option<String>,
    /// Output root (defaults to config out_dir, then $UNIFED_OUT, then ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one algorithm and write a run directory.
    Run {
        #[command(flatten)]
        common: CommonFlags,
        /// unifed | fedavg | fedprox | fedseq | nofed.
        #[arg(long)]
        algorithm: Option<String>,
    },
    /// Compare all five methods on identical partitions and seeds.
    Bench {
        #[command(flatten)]
        common: CommonFlags,
        /// Repetitions averaged per method (seeds seed, seed+1, ...).
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
    /// Run the dynamic federation across a list of mixing weights.
    AlphaSweep {
        #[command(flatten)]
        common: CommonFlags,
        /// Comma-separated mixing weights.
        #[arg(long, default_value = "0.1,0.3,0.5,0.7,0.9")]
        alphas: String,
    },
}

fn overrides_from(
    common: &CommonFlags,
    algorithm: Option<&str>,
    allow_both_scenarios: bool,
) -> Result<Overrides, Error> {
    let scenario = match common.scenario.as_deref() {
        Some(s) if s.eq_ignore_ascii_case("both") => {
            if !allow_both_scenarios {
                return Err(Error::config(
                    "scenario",
                    "`both` is only valid for the bench command (expected strong|moderate)",
                ));
            }
            None // bench expands it via scenarios_from
        }
        Some(s) => Some(ScenarioName::from_str(s)?),
        None => None,
    };
    Ok(Overrides {
        algorithm: algorithm.map(AlgorithmName::from_str).transpose()?,
        seed: common.seed,
        alpha: common.alpha,
        rounds: common.rounds,
        local_epochs: common.local_epochs,
        scenario,
        order: common.order.as_deref().map(parse_order).transpose()?,
        direct_relay: common.direct_relay,
        avg: common.avg.as_deref().map(parse_avg).transpose()?,
        out: common.out.clone(),
    })
}

fn build_config(
    common: &CommonFlags,
    base: RunConfig,
    algorithm: Option<&str>,
    allow_both_scenarios: bool,
) -> Result<RunConfig, Error> {
    let cfg = load_config(common.config.as_deref(), base)?;
    let over = overrides_from(common, algorithm, allow_both_scenarios)?;
    let cfg = over.apply(cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn scenarios_from(common: &CommonFlags) -> Result<Vec<ScenarioName>, Error> {
    match common.scenario.as_deref() {
        None => Ok(vec![ScenarioName::Strong]),
        Some(s) if s.eq_ignore_ascii_case("both") => {
            Ok(vec![ScenarioName::Strong, ScenarioName::Moderate])
        }
        Some(s) => Ok(vec![ScenarioName::from_str(s)?]),
    }
}

fn parse_alphas(raw: &str) -> Result<Vec<f64>, Error> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::config("alphas", format!("`{s}` is not a number")))
        })
        .collect()
}

fn run() -> Result<(), (u8, Error)> {
    let cli = Cli::parse();
    let config_phase = |e: Error| (2u8, e);
    let run_phase = |e: Error| (if e.is_config_error() { 2u8 } else { 3u8 }, e);
    match cli.command {
        Command::Run { common, algorithm } => {
            let cfg = build_config(&common, RunConfig::default(), algorithm.as_deref(), false)
                .map_err(config_phase)?;
            let out_root = resolve_out_root(common.out.as_deref(), &cfg);
            cmd_run(&cfg, &out_root).map_err(run_phase)?;
        }
        Command::Bench { common, reps } => {
            let cfg =
                build_config(&common, RunConfig::desk_bench(), None, true).map_err(config_phase)?;
            let scenarios = scenarios_from(&common).map_err(config_phase)?;
            let out_root = resolve_out_root(common.out.as_deref(), &cfg);
            cmd_bench(&cfg, &scenarios, reps, &out_root).map_err(run_phase)?;
        }
        Command::AlphaSweep { common, alphas } => {
            let cfg = build_config(&common, RunConfig::desk_bench(), None, false)
                .map_err(config_phase)?;
            let alphas = parse_alphas(&alphas).map_err(config_phase)?;
            let out_root = resolve_out_root(common.out.as_deref(), &cfg);
            cmd_alpha_sweep(&cfg, &alphas, &out_root).map_err(run_phase)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, err)) => {
            eprintln!("error: {err}");
            ExitCode::from(code)
        }
    }
}
