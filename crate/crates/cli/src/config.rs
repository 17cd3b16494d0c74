//! Run configuration: a TOML file overlaid by command-line flags.
//!
//! Every key of the file has a flag of the same name (underscores become
//! dashes). Flags win over the file. Documented defaults: `omega = 1`,
//! `delta = 1`, `k_trunc = 50`, `bath_coupling = 0.001`, `bath_cutoff = 10`,
//! `weight_cut = 1e-12`.

use crate::error::{CliError, CliResult};
use crate::grid::{Grid, GridSource};
use clap::Args;
use serde::Deserialize;
use std::path::{Path, PathBuf};

pub const DEFAULT_OMEGA: f64 = 1.0;
pub const DEFAULT_DELTA: f64 = 1.0;
pub const DEFAULT_K_TRUNC: usize = 50;
pub const DEFAULT_WEIGHT_CUT: f64 = 1e-12;
/// Environment variable that overrides the cache directory from the config file.
pub const CACHE_ENV: &str = "DICKE_STARK_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BasisChoice {
    /// Displaced coherent states.
    Dcs,
    /// Plain Fock states.
    Dfs,
}

/// Contents of a config file; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub omega: Option<f64>,
    pub delta: Option<f64>,
    pub k_trunc: Option<usize>,
    pub n_trunc: Option<usize>,
    pub basis: Option<BasisChoice>,
    pub bath_coupling: Option<f64>,
    pub bath_cutoff: Option<f64>,
    pub weight_cut: Option<f64>,
    pub n_atoms: Option<GridSource>,
    pub lambda: Option<GridSource>,
    pub stark_u: Option<GridSource>,
    pub temperature: Option<GridSource>,
    pub times: Option<GridSource>,
    pub levels: Option<usize>,
    pub rel_tol: Option<f64>,
    pub allow_large: Option<bool>,
    pub observables: Option<Vec<String>>,
    pub threads: Option<usize>,
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

/// Flags mirroring the config keys; shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct KeyArgs {
    /// Cavity frequency ω [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    /// Atomic splitting Δ [default: 1]
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    /// Coherent-state truncation K_tr [default: 50]
    #[arg(long)]
    pub k_trunc: Option<usize>,
    /// Fock truncation for the Fock basis [default: 2·K_tr]
    #[arg(long)]
    pub n_trunc: Option<usize>,
    #[arg(long, value_enum)]
    pub basis: Option<BasisChoice>,
    /// Bath coupling α in units of ω [default: 0.001]
    #[arg(long)]
    pub bath_coupling: Option<f64>,
    /// Bath cutoff ω_c in units of ω [default: 10]
    #[arg(long)]
    pub bath_cutoff: Option<f64>,
    /// Boltzmann weight below which levels are dropped [default: 1e-12]
    #[arg(long)]
    pub weight_cut: Option<f64>,
    /// Atom-number grid
    #[arg(long, allow_hyphen_values = true)]
    pub n_atoms: Option<String>,
    /// Coupling grid, e.g. `0:1:11` or `0.2,0.4`
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
    /// Stark-coupling grid
    #[arg(long, allow_hyphen_values = true)]
    pub stark_u: Option<String>,
    /// Temperature grid
    #[arg(long, allow_hyphen_values = true)]
    pub temperature: Option<String>,
    /// Time grid
    #[arg(long, allow_hyphen_values = true)]
    pub times: Option<String>,
    /// Number of levels (spectrum rows or master-equation levels)
    #[arg(long)]
    pub levels: Option<usize>,
    /// Escalate the truncation until observables change by less than this
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Permit atom numbers above the desk-scale limit
    #[arg(long)]
    pub allow_large: bool,
    /// Comma-separated observable selection
    #[arg(long, value_delimiter = ',')]
    pub observables: Option<Vec<String>>,
}

/// Flags that apply to every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output CSV path (stdout when absent)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Eigendecomposition cache directory
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Disable the cache even if a directory is configured
    #[arg(long, global = true)]
    pub no_cache: bool,
    /// Treat a corrupted cache entry as an error instead of recomputing it
    #[arg(long, global = true)]
    pub strict_cache: bool,
    /// Worker threads (0 picks the number of cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Resolved configuration after overlaying flags on the file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub omega: f64,
    pub delta: f64,
    pub k_trunc: usize,
    pub n_trunc: Option<usize>,
    pub basis: BasisChoice,
    pub bath_coupling: f64,
    pub bath_cutoff: f64,
    pub weight_cut: f64,
    pub n_atoms: Option<Grid>,
    pub lambda: Option<Grid>,
    pub stark_u: Option<Grid>,
    pub temperature: Option<Grid>,
    pub times: Option<Grid>,
    pub levels: Option<usize>,
    pub rel_tol: Option<f64>,
    pub allow_large: bool,
    pub observables: Option<Vec<String>>,
    pub threads: usize,
    pub cache: Option<PathBuf>,
    pub strict_cache: bool,
    pub out: Option<PathBuf>,
}

fn grid(flag: &Option<String>, file: &Option<GridSource>, key: &str) -> CliResult<Option<Grid>> {
    let resolved = match (flag, file) {
        (Some(text), _) => Some(Grid::parse(text)),
        (None, Some(src)) => Some(src.resolve()),
        (None, None) => None,
    };
    resolved
        .transpose()
        .map_err(|e| CliError::Grid(format!("{key}: {}", e.to_string().trim_start_matches("invalid grid: "))))
}

impl Settings {
    /// `cache_env` is the value of [`CACHE_ENV`], passed in so that resolution stays pure.
    pub fn resolve(global: &GlobalArgs, keys: &KeyArgs, file: &ConfigFile, cache_env: Option<PathBuf>) -> CliResult<Self> {
        let cache = if global.no_cache {
            None
        } else {
            global.cache.clone().or(cache_env).or_else(|| file.cache.clone())
        };
        let settings = Self {
            omega: keys.omega.or(file.omega).unwrap_or(DEFAULT_OMEGA),
            delta: keys.delta.or(file.delta).unwrap_or(DEFAULT_DELTA),
            k_trunc: keys.k_trunc.or(file.k_trunc).unwrap_or(DEFAULT_K_TRUNC),
            n_trunc: keys.n_trunc.or(file.n_trunc),
            basis: keys.basis.or(file.basis).unwrap_or(BasisChoice::Dcs),
            bath_coupling: keys
                .bath_coupling
                .or(file.bath_coupling)
                .unwrap_or(dicke_stark::dynamics::DEFAULT_BATH_COUPLING),
            bath_cutoff: keys
                .bath_cutoff
                .or(file.bath_cutoff)
                .unwrap_or(dicke_stark::dynamics::DEFAULT_BATH_CUTOFF),
            weight_cut: keys.weight_cut.or(file.weight_cut).unwrap_or(DEFAULT_WEIGHT_CUT),
            n_atoms: grid(&keys.n_atoms, &file.n_atoms, "n_atoms")?,
            lambda: grid(&keys.lambda, &file.lambda, "lambda")?,
            stark_u: grid(&keys.stark_u, &file.stark_u, "stark_u")?,
            temperature: grid(&keys.temperature, &file.temperature, "temperature")?,
            times: grid(&keys.times, &file.times, "times")?,
            levels: keys.levels.or(file.levels),
            rel_tol: keys.rel_tol.or(file.rel_tol),
            allow_large: keys.allow_large || file.allow_large.unwrap_or(false),
            observables: keys.observables.clone().or_else(|| file.observables.clone()),
            threads: global.threads.or(file.threads).unwrap_or(0),
            cache,
            strict_cache: global.strict_cache,
            out: global.out.clone().or_else(|| file.out.clone()),
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> CliResult<()> {
        let positive = [
            ("omega", self.omega),
            ("bath_cutoff", self.bath_cutoff),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!("{key} must be positive and finite, got {v}")));
            }
        }
        if !self.delta.is_finite() {
            return Err(CliError::Config(format!("delta must be finite, got {}", self.delta)));
        }
        if !(self.bath_coupling.is_finite() && self.bath_coupling >= 0.0) {
            return Err(CliError::Config(format!("bath_coupling must be non-negative, got {}", self.bath_coupling)));
        }
        if !(self.weight_cut.is_finite() && (0.0..1.0).contains(&self.weight_cut)) {
            return Err(CliError::Config(format!("weight_cut must lie in [0, 1), got {}", self.weight_cut)));
        }
        if let Some(tol) = self.rel_tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(CliError::Config(format!("rel_tol must be positive, got {tol}")));
            }
        }
        if let Some(t) = &self.temperature {
            if t.values().iter().any(|&x| x < 0.0) {
                return Err(CliError::Grid("temperature: values must be non-negative".into()));
            }
        }
        if let Some(t) = &self.times {
            if t.values().iter().any(|&x| x < 0.0) {
                return Err(CliError::Grid("times: values must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Axis value or the command's default, as a grid.
    pub fn axis(&self, value: &Option<Grid>, default: &str) -> Grid {
        value.clone().unwrap_or_else(|| Grid::parse(default).expect("default grids parse"))
    }

    /// Atom numbers, with the desk-scale limit applied unless explicitly lifted.
    pub fn atoms(&self, default: &str, limit: usize) -> CliResult<Vec<usize>> {
        let n = self.axis(&self.n_atoms, default).counts()?;
        if let Some(&bad) = n.iter().find(|&&n| n == 0) {
            return Err(CliError::Grid(format!("n_atoms: {bad} is not a positive atom number")));
        }
        if !self.allow_large {
            if let Some(&big) = n.iter().find(|&&n| n > limit) {
                return Err(CliError::Grid(format!(
                    "n_atoms: {big} exceeds the desk-scale limit {limit}; pass --allow-large to proceed"
                )));
            }
        }
        Ok(n)
    }

    pub fn fock_trunc(&self) -> usize {
        self.n_trunc.unwrap_or(2 * self.k_trunc)
    }
}
