//! Sweep driver for the Dicke-Stark solver: parameter grids, CSV figure data
//! and an on-disk eigendecomposition cache.
//!
//! The binary `dicke-stark` wraps [`run`]. The parsers ([`config`], [`grid`])
//! and the cache codec ([`cache::decode_blob`]) are public so they can be fuzzed.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod output;

use clap::{Parser, Subcommand};
use commands::Context;
use config::{ConfigFile, GlobalArgs, KeyArgs, Settings, CACHE_ENV};
use error::{CliError, CliResult};
use output::Table;

#[derive(Debug, Parser)]
#[command(name = "dicke-stark", version, about = "Finite-size Dicke-Stark sweeps and figure data")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lowest energy levels over (N, U, λ)
    Spectrum(KeyArgs),
    /// Ground-state photon number per atom over λ
    PhotonSweep(KeyArgs),
    /// Photon number per atom over the (U, λ) plane
    PhaseDiagram(KeyArgs),
    /// Closed evolution of the photon number from the spin-down vacuum
    Dynamics(KeyArgs),
    /// Thermal zero-delay two-photon correlation G2(0)
    G2Sweep(KeyArgs),
    /// Thermal negativity, spin squeezing and spin entropy
    StatsSweep(KeyArgs),
    /// Dressed master-equation trajectories
    Relax(KeyArgs),
    /// Mean-field critical couplings and order parameters
    Meanfield(KeyArgs),
}

impl Command {
    fn keys(&self) -> &KeyArgs {
        match self {
            Command::Spectrum(k)
            | Command::PhotonSweep(k)
            | Command::PhaseDiagram(k)
            | Command::Dynamics(k)
            | Command::G2Sweep(k)
            | Command::StatsSweep(k)
            | Command::Relax(k)
            | Command::Meanfield(k) => k,
        }
    }
}

/// Outcome of a run: the exit status, with the table already written.
#[derive(Debug)]
pub struct RunSummary {
    pub failed_rows: usize,
    pub first_error: Option<CliError>,
}

/// Resolves configuration, runs the subcommand and writes its CSV.
pub fn run(cli: &Cli) -> CliResult<RunSummary> {
    let file = match &cli.global.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let cache_env = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(Into::into);
    let settings = Settings::resolve(&cli.global, cli.command.keys(), &file, cache_env)?;
    let cache = cache::CacheStore::open(settings.cache.as_deref(), settings.strict_cache);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} threads: {e}", settings.threads)))?;
    let ctx = Context { settings, cache };
    let table: Table = pool.install(|| match &cli.command {
        Command::Spectrum(_) => commands::spectrum(&ctx),
        Command::PhotonSweep(_) => commands::photon_sweep(&ctx),
        Command::PhaseDiagram(_) => commands::phase_diagram(&ctx),
        Command::Dynamics(_) => commands::dynamics(&ctx),
        Command::G2Sweep(_) => commands::g2_sweep(&ctx),
        Command::StatsSweep(_) => commands::stats_sweep(&ctx),
        Command::Relax(_) => commands::relax(&ctx),
        Command::Meanfield(_) => commands::meanfield(&ctx),
    })?;
    table.emit(ctx.settings.out.as_deref())?;
    Ok(RunSummary {
        failed_rows: table.failed_rows(),
        first_error: table.first_error().map(CliError::duplicate),
    })
}
