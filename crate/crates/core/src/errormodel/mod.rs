//! Burst-error statistics: trace analysis into run-length tables, the
//! table-driven error generator, and a two-state synthetic trace source.

mod analysis;
mod erracle;
mod synth;
mod table;
mod trace;

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analysis::{analyze_trace, DEFAULT_GUARD_GAP_BITS};
pub use erracle::{Erracle, NO_MORE_ERRORS};
pub use synth::{burst_synthesize, BurstSynthParams};
pub use table::{ErrorStatTable, MixedRunSample, RunLengthCdf, TableKey, TABLE_SCHEMA, TABLE_VERSION};
pub use trace::BitErrorTrace;

#[derive(Debug, Error)]
pub enum ErrorModelError {
    #[error("trace is empty (length 0)")]
    EmptyTrace,
    #[error("guard gap must be at least 1 bit")]
    InvalidGuardGap,
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("table document version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed table document: {0}")]
    Malformed(String),
    #[error("table invariant violated: {0}")]
    Invariant(String),
    #[error("invalid burst parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Modem interleaver setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interleaver {
    Short,
    Long,
}

impl Interleaver {
    pub fn as_str(self) -> &'static str {
        match self {
            Interleaver::Short => "short",
            Interleaver::Long => "long",
        }
    }
}

impl std::str::FromStr for Interleaver {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "short" => Ok(Interleaver::Short),
            "long" => Ok(Interleaver::Long),
            other => Err(format!("unknown interleaver '{other}' (expected short|long)")),
        }
    }
}

/// Channel state selecting an error table: SNR, Doppler spread and
/// multipath delay spread. Equality and hashing use the values rounded to
/// one decimal place.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelCondition {
    pub snr_db: f64,
    pub doppler_hz: f64,
    pub multipath_ms: f64,
}

impl ChannelCondition {
    pub fn new(snr_db: f64, doppler_hz: f64, multipath_ms: f64) -> Result<Self, ErrorModelError> {
        let c = ChannelCondition {
            snr_db,
            doppler_hz,
            multipath_ms,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ErrorModelError> {
        if !self.snr_db.is_finite() || !self.doppler_hz.is_finite() || !self.multipath_ms.is_finite() {
            return Err(ErrorModelError::Invariant("channel condition fields must be finite".into()));
        }
        if self.doppler_hz < 0.0 || self.multipath_ms < 0.0 {
            return Err(ErrorModelError::Invariant(
                "doppler_hz and multipath_ms must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Values in tenths, the resolution at which conditions are compared.
    pub fn rounded_key(&self) -> (i64, i64, i64) {
        let r = |x: f64| (x * 10.0).round() as i64;
        (r(self.snr_db), r(self.doppler_hz), r(self.multipath_ms))
    }
}

impl PartialEq for ChannelCondition {
    fn eq(&self, other: &Self) -> bool {
        self.rounded_key() == other.rounded_key()
    }
}

impl Eq for ChannelCondition {}

impl Hash for ChannelCondition {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rounded_key().hash(state)
    }
}
