//! Run and guest configuration: TOML files plus flag overrides.
//!
//! Resolution order for every setting: command-line flag, then config
//! file, then built-in default. The grammar is documented in the
//! repository README; unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use clap::Args;
use fedshap_core::schema::FeatureSchema;
use serde::Deserialize;

use crate::Failure;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SAMPLE: usize = 100;
pub const DEFAULT_KEY: &str = "fedshap-demo-key";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    Federated3,
    Federated5,
    Custom,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Mode, Failure> {
        match s {
            "full" => Ok(Mode::Full),
            "federated3" => Ok(Mode::Federated3),
            "federated5" => Ok(Mode::Federated5),
            "custom" => Ok(Mode::Custom),
            other => Err(Failure::Usage(format!(
                "unknown mode {other:?}; expected full, federated3, federated5, or custom"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Federated3 => "federated3",
            Mode::Federated5 => "federated5",
            Mode::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Inproc,
    Tcp(String),
}

impl Transport {
    pub fn parse(s: &str) -> Result<Transport, Failure> {
        if s == "inproc" {
            return Ok(Transport::Inproc);
        }
        if let Some(addr) = s.strip_prefix("tcp:") {
            if addr.is_empty() {
                return Err(Failure::Usage(
                    "transport tcp: needs an address, e.g. tcp:127.0.0.1:7878".into(),
                ));
            }
            return Ok(Transport::Tcp(addr.to_string()));
        }
        Err(Failure::Usage(format!(
            "unknown transport {s:?}; expected inproc or tcp:HOST:PORT"
        )))
    }
}

/// Flags shared by train, explain, and batch. Every one of them can also
/// come from the `--config` TOML file.
#[derive(Debug, Args)]
pub struct CommonFlags {
    /// Dataset CSV path
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML run configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Explanation mode: full, federated3, federated5, or custom
    #[arg(long)]
    pub mode: Option<String>,
    /// Split seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Batch sample size
    #[arg(long)]
    pub sample: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Guest transport: inproc or tcp:HOST:PORT
    #[arg(long)]
    pub transport: Option<String>,
}

/// The run-config file grammar. All keys optional; flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub guest_features: Option<Vec<String>>,
    pub k: Option<usize>,
    pub train_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub sample: Option<usize>,
    pub out: Option<PathBuf>,
    pub transport: Option<String>,
    pub key: Option<String>,
}

pub fn load_file_config(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))
}

/// Fully resolved settings for one command invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub data: PathBuf,
    pub guest_features: Vec<String>,
    pub k: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub mode: Mode,
    pub sample: usize,
    pub out: PathBuf,
    pub transport: Transport,
    pub key: String,
}

impl Settings {
    pub fn resolve(flags: &CommonFlags) -> Result<Settings, Failure> {
        let file = match &flags.config {
            Some(path) => load_file_config(path)?,
            None => FileConfig::default(),
        };
        let data = flags.data.clone().or(file.data).ok_or_else(|| {
            Failure::Usage("no dataset: pass --data or set data in --config".into())
        })?;
        let mode_str = flags
            .mode
            .clone()
            .or(file.mode)
            .unwrap_or_else(|| "full".to_string());
        let mode = Mode::parse(&mode_str)?;
        let transport_str = flags
            .transport
            .clone()
            .or(file.transport)
            .unwrap_or_else(|| "inproc".to_string());
        let transport = Transport::parse(&transport_str)?;
        let sample = flags.sample.or(file.sample).unwrap_or(DEFAULT_SAMPLE);
        if sample == 0 {
            return Err(Failure::Usage("sample size must be at least 1".into()));
        }
        let guest_features = file.guest_features.unwrap_or_default();
        if mode == Mode::Custom && guest_features.is_empty() {
            return Err(Failure::Usage(
                "mode custom needs guest_features in the config file".into(),
            ));
        }
        Ok(Settings {
            data,
            guest_features,
            k: file.k.unwrap_or(DEFAULT_K),
            train_fraction: file.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION),
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            mode,
            sample,
            out: flags
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from(".")),
            transport,
            key: file.key.unwrap_or_else(|| DEFAULT_KEY.to_string()),
        })
    }

    /// Guest feature names for the resolved mode; empty in full mode.
    pub fn guest_names(&self, schema: &FeatureSchema) -> Result<Vec<String>, Failure> {
        let names: Vec<String> = match self.mode {
            Mode::Full => Vec::new(),
            Mode::Federated3 => FeatureSchema::GUEST3
                .iter()
                .map(|s| s.to_string())
                .collect(),
            Mode::Federated5 => FeatureSchema::GUEST5
                .iter()
                .map(|s| s.to_string())
                .collect(),
            Mode::Custom => self.guest_features.clone(),
        };
        for n in &names {
            if schema.feature_index(n).is_none() {
                return Err(Failure::Usage(format!("unknown guest feature {n:?}")));
            }
        }
        Ok(names)
    }
}

/// The guest-config file grammar (for `fedshap guest`). The guest must
/// agree with the host on data, split, and key, or every request for a
/// pseudonymized instance will fail.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuestFileConfig {
    pub data: PathBuf,
    pub bind: String,
    pub mode: Option<String>,
    pub guest_features: Option<Vec<String>>,
    pub train_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub key: Option<String>,
}

pub struct GuestSettings {
    pub data: PathBuf,
    pub bind: String,
    pub guest_features: Vec<String>,
    pub train_fraction: f64,
    pub seed: u64,
    pub key: String,
}

impl GuestSettings {
    pub fn resolve(path: &Path) -> Result<GuestSettings, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let file: GuestFileConfig = toml::from_str(&text)
            .map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))?;
        let guest_features = match file.mode.as_deref() {
            None | Some("custom") => file.guest_features.clone().unwrap_or_default(),
            Some("federated3") => FeatureSchema::GUEST3
                .iter()
                .map(|s| s.to_string())
                .collect(),
            Some("federated5") => FeatureSchema::GUEST5
                .iter()
                .map(|s| s.to_string())
                .collect(),
            Some(other) => {
                return Err(Failure::Usage(format!(
                    "guest mode {other:?} not usable; expected federated3, federated5, or custom"
                )))
            }
        };
        if guest_features.is_empty() {
            return Err(Failure::Usage(
                "guest config needs mode=federated3|federated5 or a guest_features list".into(),
            ));
        }
        Ok(GuestSettings {
            data: file.data,
            bind: file.bind,
            guest_features,
            train_fraction: file.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION),
            seed: file.seed.unwrap_or(DEFAULT_SEED),
            key: file.key.unwrap_or_else(|| DEFAULT_KEY.to_string()),
        })
    }
}
