//! Scenario documents: one versioned TOML file describing a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::errormodel::{ChannelCondition, ErrorModelError, ErrorStatTable, TableKey, DEFAULT_GUARD_GAP_BITS};
use crate::modem::ModemParams;
use crate::s5066::{LinkConfig, RateAdaptMode};
use crate::transport::{PepConfig, SaturationConfig, TcpConfig, TrafficMode, TransferSpec};

pub const SCENARIO_VERSION: u32 = 1;

/// Error tables by data rate.
pub type TableSet = BTreeMap<u32, Arc<ErrorStatTable>>;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario version {found} is not supported (expected {expected})")]
    Version { found: i64, expected: u32 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("error table {path}: {source}")]
    Table { path: PathBuf, source: ErrorModelError },
    #[error("error table {path} holds key {found}, expected {expected}")]
    TableMismatch { path: PathBuf, found: String, expected: String },
    #[error("{0}")]
    Unimplemented(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub snr_db: f64,
    #[serde(default)]
    pub doppler_hz: f64,
    #[serde(default)]
    pub multipath_ms: f64,
    /// Directory of error tables, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_dir: Option<PathBuf>,
    /// Error-free channel; no tables are read.
    #[serde(default)]
    pub ideal: bool,
}

fn default_lan_delay() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub master_seed: u64,
    pub duration_s: f64,
    pub mode: TrafficMode,
    /// One-way delay between each end host and its radio node.
    #[serde(default = "default_lan_delay")]
    pub lan_delay_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub modem: ModemParams,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub tcp: TcpConfig,
    #[serde(default)]
    pub pep: PepConfig,
    #[serde(default)]
    pub saturation: SaturationConfig,
    #[serde(default)]
    pub traffic: Vec<TransferSpec>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioConfig {
    /// A scenario with every block at its default.
    pub fn new(mode: TrafficMode, snr_db: f64, master_seed: u64, duration_s: f64) -> Self {
        ScenarioConfig {
            version: SCENARIO_VERSION,
            master_seed,
            duration_s,
            mode,
            lan_delay_s: default_lan_delay(),
            output: None,
            channel: ChannelConfig {
                snr_db,
                doppler_hz: 0.0,
                multipath_ms: 0.0,
                table_dir: None,
                ideal: false,
            },
            modem: ModemParams::default(),
            link: LinkConfig::default(),
            tcp: TcpConfig::default(),
            pep: PepConfig::default(),
            saturation: SaturationConfig::default(),
            traffic: Vec::new(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        match raw.get("version").and_then(|v| v.as_integer()) {
            Some(v) if v == SCENARIO_VERSION as i64 => {}
            Some(v) => {
                return Err(ScenarioError::Version {
                    found: v,
                    expected: SCENARIO_VERSION,
                })
            }
            None => return Err(ScenarioError::Parse("missing integer field 'version'".into())),
        }
        let sc: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut sc = Self::from_toml_str(&text)?;
        sc.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be positive".into());
        }
        if !(self.lan_delay_s >= 0.0 && self.lan_delay_s.is_finite()) {
            return bad("lan_delay_s must be non-negative".into());
        }
        if self.master_seed > i64::MAX as u64 {
            return bad("master_seed must fit in a signed 64-bit integer".into());
        }
        if let Err(e) = self.condition() {
            return bad(e.to_string());
        }
        if let Err(e) = self.modem.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.link.validate(&self.modem) {
            return bad(e);
        }
        if let Err(e) = self.tcp.validate() {
            return bad(e);
        }
        if let Err(e) = self.pep.validate() {
            return bad(e);
        }
        if self.saturation.packet_bytes < 1 {
            return bad("saturation.packet_bytes must be at least 1".into());
        }
        for t in &self.traffic {
            if let Err(e) = t.validate() {
                return bad(e);
            }
        }
        if !self.channel.ideal && self.channel.table_dir.is_none() {
            return bad("channel.table_dir is required unless channel.ideal = true".into());
        }
        if matches!(self.mode, TrafficMode::Plain | TrafficMode::Accelerate) && self.traffic.is_empty() {
            return bad(format!("mode '{}' needs at least one [[traffic]] entry", self.mode.as_str()));
        }
        Ok(())
    }

    pub fn condition(&self) -> Result<ChannelCondition, ErrorModelError> {
        ChannelCondition::new(self.channel.snr_db, self.channel.doppler_hz, self.channel.multipath_ms)
    }

    /// The document with defaults filled in, as hashed into output headers.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn sha256_hex(&self) -> String {
        Sha256::digest(self.canonical_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Rates the link may use during the run.
    pub fn required_rates(&self) -> Vec<u32> {
        match self.link.rate_adapt {
            RateAdaptMode::Off => vec![self.modem.data_rate_bps],
            RateAdaptMode::Simple => self.modem.supported_rates.clone(),
        }
    }

    pub fn table_key(&self, rate: u32) -> TableKey {
        TableKey {
            condition: self.condition().expect("validated"),
            data_rate_bps: rate,
            interleaver: self.modem.interleaver,
        }
    }

    pub fn table_path(&self, rate: u32) -> Option<PathBuf> {
        let dir = self.channel.table_dir.as_ref()?;
        Some(self.base_dir.join(dir).join(self.table_key(rate).file_name()))
    }

    /// Loads the table for every rate the run may use.
    pub fn load_tables(&self) -> Result<TableSet, ScenarioError> {
        let mut set = TableSet::new();
        for rate in self.required_rates() {
            let key = self.table_key(rate);
            let table = if self.channel.ideal {
                ErrorStatTable::error_free(key, 1 << 20, DEFAULT_GUARD_GAP_BITS)
            } else {
                let path = self.table_path(rate).expect("validated");
                let t = ErrorStatTable::load(&path).map_err(|source| ScenarioError::Table {
                    path: path.clone(),
                    source,
                })?;
                if t.key != key {
                    return Err(ScenarioError::TableMismatch {
                        path,
                        found: t.key.file_name(),
                        expected: key.file_name(),
                    });
                }
                t
            };
            set.insert(rate, Arc::new(table));
        }
        Ok(set)
    }
}
