use std::path::{Path, PathBuf};

use clap::Args;
use mesoperm::montecarlo::Standardization;
use serde::{Deserialize, Serialize};

/// A single `n` or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NList {
    One(u64),
    Many(Vec<u64>),
}

impl NList {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            NList::One(n) => vec![*n],
            NList::Many(v) => v.clone(),
        }
    }
}

/// Flat key-value experiment description. Every key is optional; flags
/// override file values and unset keys fall back to per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(rename = "fn")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fn_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<NList>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_exp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cf_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_band: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_band_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardization>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregate_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s3_n: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s3_band: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gnuplot: Option<bool>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat TOML file with experiment settings
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory for CSV and JSON files
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Built-in test function
    #[arg(long = "fn", global = true, value_name = "NAME")]
    pub fn_name: Option<String>,
    /// Ewens parameter
    #[arg(long, global = true, value_name = "F")]
    pub theta: Option<f64>,
    /// Permutation size(s), comma separated
    #[arg(long, global = true, value_name = "N[,N...]", value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    /// Scale exponent: δ = n^(−ε)
    #[arg(long, global = true, value_name = "F")]
    pub delta_exp: Option<f64>,
    /// Literal scale δ (overrides --delta-exp)
    #[arg(long, global = true, value_name = "F")]
    pub delta: Option<f64>,
    /// Replicates per ensemble
    #[arg(long, global = true, value_name = "N")]
    pub replicates: Option<u64>,
    /// Also write a gnuplot script for the CSV files
    #[arg(long, global = true)]
    pub gnuplot: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("config file is for experiment `{file}`, not `{command}`")]
    WrongExperiment { file: String, command: String },
}

pub fn load_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source: Box::new(source) })
}

/// File values overridden by any flag that was given.
pub fn merge(flags: &Flags, command: &str) -> Result<FileConfig, ConfigError> {
    let mut cfg = match &flags.config {
        Some(p) => load_file(p)?,
        None => FileConfig::default(),
    };
    if let Some(file) = &cfg.experiment {
        if file != command {
            return Err(ConfigError::WrongExperiment { file: file.clone(), command: command.to_string() });
        }
    }
    cfg.experiment = Some(command.to_string());
    macro_rules! take {
        ($($field:ident),*) => { $( if flags.$field.is_some() { cfg.$field = flags.$field.clone(); } )* };
    }
    take!(seed, threads, out, fn_name, theta, delta_exp, delta, replicates);
    if let Some(n) = &flags.n {
        cfg.n = Some(NList::Many(n.clone()));
    }
    if flags.gnuplot {
        cfg.gnuplot = Some(true);
    }
    Ok(cfg)
}
