//! `ncmc`: pilot runs, nested estimates and the benchmark studies from the
//! command line. Every subcommand reads an optional `key=value` config file,
//! prints a short summary and, with `--out`, writes `<command>.csv`,
//! `<command>.json` and `manifest.json`.

mod commands;
mod config;
mod output;
mod setup;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use config::{Config, ConfigError};
use output::{columns_help, write_file, Manifest};

#[derive(Debug, Parser)]
#[command(name = "ncmc", version, about = "Nested conditional Monte Carlo for comparing stopping rules")]
struct Cli {
    /// Config file of `key=value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "NCCMC_THREADS")]
    threads: Option<usize>,
    /// Directory for the CSV, JSON and manifest outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate v1, v2 and the per-trunk and per-replication costs, then
    /// calibrate the replication count.
    #[command(after_long_help = columns_help(output::PILOT_COLUMNS))]
    Pilot,
    /// Nested estimates of the value difference for one or more
    /// replication counts.
    #[command(after_long_help = columns_help(output::ESTIMATE_COLUMNS))]
    Estimate,
    /// Volatility misspecification study on the max-call option.
    #[command(after_long_help = columns_help(output::PARAM_STUDY_COLUMNS))]
    ParamStudy,
    /// Quasi-control-variate pricing with and without nesting.
    #[command(after_long_help = columns_help(output::QCV_COLUMNS))]
    Qcv,
    /// Multilevel pricing over a ladder of rules with and without nesting.
    #[command(after_long_help = columns_help(output::MULTILEVEL_COLUMNS))]
    Multilevel,
    /// Compare nested estimates on a finite tree with exact values.
    #[command(after_long_help = columns_help(output::ORACLE_COLUMNS))]
    OracleCheck,
    /// Variance-cost product as a function of the replication count.
    #[command(after_long_help = columns_help(output::VPROFILE_COLUMNS))]
    Vprofile,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Pilot => "pilot",
            Command::Estimate => "estimate",
            Command::ParamStudy => "param-study",
            Command::Qcv => "qcv",
            Command::Multilevel => "multilevel",
            Command::OracleCheck => "oracle-check",
            Command::Vprofile => "vprofile",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(anyhow::Error),
    Check(String),
}

impl Failure {
    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Failure::Runtime(e.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Check(_) => 4,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Runtime(e) => write!(f, "error: {e:#}"),
            Failure::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    for item in &cli.set {
        let overlay = Config::parse(item)?;
        if overlay.canonical().is_empty() {
            return Err(ConfigError(format!("`--set {item}` is not a key=value pair")).into());
        }
        for line in overlay.canonical().lines() {
            let (k, v) = line.split_once('=').expect("canonical lines are key=value");
            cfg.set(k, v);
        }
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed);
    }
    Ok(cfg)
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let seed = cfg.get_or("seed", 1u64)?;
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(Failure::runtime)?;
    }
    let started = unix_now();
    let name = cli.command.name();
    let outcome = match cli.command {
        Command::Pilot => commands::pilot_cmd(&cfg, seed),
        Command::Estimate => commands::estimate_cmd(&cfg, seed),
        Command::ParamStudy => commands::param_study_cmd(&cfg, seed),
        Command::Qcv => commands::qcv_cmd(&cfg, seed),
        Command::Multilevel => commands::multilevel_cmd(&cfg, seed),
        Command::OracleCheck => commands::oracle_check_cmd(&cfg, seed),
        Command::Vprofile => commands::vprofile_cmd(&cfg, seed),
    }?;
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).map_err(Failure::runtime)?;
        let csv_path = dir.join(format!("{name}.csv"));
        let json_path = dir.join(format!("{name}.json"));
        write_file(&csv_path, &outcome.table.to_csv().map_err(Failure::Runtime)?).map_err(Failure::Runtime)?;
        let json = serde_json::to_string_pretty(&outcome.result).map_err(Failure::runtime)?;
        write_file(&json_path, &json).map_err(Failure::Runtime)?;
        let manifest = Manifest {
            command: name,
            config_digest: cfg.digest(),
            seed,
            version: env!("CARGO_PKG_VERSION"),
            started_at_unix: started,
            finished_at_unix: unix_now(),
            outputs: vec![csv_path, json_path],
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(Failure::runtime)?;
        write_file(&dir.join("manifest.json"), &text).map_err(Failure::Runtime)?;
    }
    match outcome.check_failure {
        Some(m) => Err(Failure::Check(m)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
