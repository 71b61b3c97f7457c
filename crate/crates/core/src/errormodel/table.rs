use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChannelCondition, ErrorModelError, Interleaver};

pub const TABLE_SCHEMA: &str = "hfsim-error-table";
pub const TABLE_VERSION: u32 = 1;

/// Identifies the conditions a table was measured under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableKey {
    pub condition: ChannelCondition,
    pub data_rate_bps: u32,
    pub interleaver: Interleaver,
}

impl TableKey {
    /// Canonical file name used when tables are looked up in a directory.
    pub fn file_name(&self) -> String {
        let (snr, dop, mp) = self.condition.rounded_key();
        format!(
            "snr{}_dop{}_mp{}_{}bps_{}.json",
            tenths(snr),
            tenths(dop),
            tenths(mp),
            self.data_rate_bps,
            self.interleaver.as_str()
        )
    }
}

fn tenths(v: i64) -> String {
    let sign = if v < 0 { "m" } else { "" };
    let a = v.unsigned_abs();
    format!("{sign}{}.{}", a / 10, a % 10)
}

/// Empirical CDF over integer run lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunLengthCdf {
    pub support: Vec<u64>,
    pub cum_prob: Vec<f64>,
}

impl RunLengthCdf {
    /// Builds the CDF from `(length, count)` pairs sorted by length.
    pub fn from_counts(counts: &[(u64, u64)]) -> Self {
        let total: u64 = counts.iter().map(|&(_, c)| c).sum();
        let mut support = Vec::with_capacity(counts.len());
        let mut cum_prob = Vec::with_capacity(counts.len());
        let mut acc = 0u64;
        for &(len, c) in counts {
            acc += c;
            support.push(len);
            cum_prob.push(acc as f64 / total as f64);
        }
        if let Some(last) = cum_prob.last_mut() {
            *last = 1.0;
        }
        RunLengthCdf { support, cum_prob }
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Inverse-transform lookup: smallest support value whose cumulative
    /// probability reaches `u`.
    pub fn sample(&self, u: f64) -> u64 {
        let idx = self.cum_prob.partition_point(|&p| p < u);
        self.support[idx.min(self.support.len() - 1)]
    }

    pub fn cdf_at(&self, x: u64) -> f64 {
        let idx = self.support.partition_point(|&s| s <= x);
        if idx == 0 {
            0.0
        } else {
            self.cum_prob[idx - 1]
        }
    }

    fn validate(&self) -> Result<(), ErrorModelError> {
        if self.support.len() != self.cum_prob.len() {
            return Err(ErrorModelError::Invariant("gap_cdf support/cum_prob length mismatch".into()));
        }
        if self.support.is_empty() {
            return Ok(());
        }
        if self.support[0] < 1 {
            return Err(ErrorModelError::Invariant("gap lengths must be at least 1".into()));
        }
        if self.support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ErrorModelError::Invariant("gap_cdf support must be strictly increasing".into()));
        }
        if self.cum_prob.windows(2).any(|w| w[0] >= w[1]) || self.cum_prob[0] <= 0.0 {
            return Err(ErrorModelError::Invariant("gap_cdf probabilities must be strictly increasing".into()));
        }
        if *self.cum_prob.last().unwrap() != 1.0 {
            return Err(ErrorModelError::Invariant("gap_cdf must end at exactly 1.0".into()));
        }
        Ok(())
    }
}

/// One observed mixed run: first-to-last error span and error count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixedRunSample {
    pub span_bits: u64,
    pub error_count: u64,
}

impl MixedRunSample {
    fn validate(&self, guard_gap_bits: u64) -> Result<(), ErrorModelError> {
        let MixedRunSample { span_bits, error_count } = *self;
        let ok = error_count >= 1
            && error_count <= span_bits
            && (error_count != 1 || span_bits == 1)
            // Errors separated by fewer than `guard` zeros bound the span.
            && (error_count < 2 || span_bits - 1 <= (error_count - 1) * guard_gap_bits);
        if ok {
            Ok(())
        } else {
            Err(ErrorModelError::Invariant(format!(
                "mixed sample (span {span_bits}, count {error_count}) inconsistent with guard gap {guard_gap_bits}"
            )))
        }
    }
}

/// Run-length statistics of one trace, keyed by the conditions it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorStatTable {
    pub key: TableKey,
    pub gap_cdf: RunLengthCdf,
    pub mixed_samples: Vec<MixedRunSample>,
    pub guard_gap_bits: u64,
    pub source_length_bits: u64,
    pub source_errors: u64,
    pub source_ber: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDocument {
    schema: String,
    version: u32,
    key: TableKey,
    guard_gap_bits: u64,
    source_length_bits: u64,
    source_errors: u64,
    source_ber: f64,
    gap_cdf: RunLengthCdf,
    /// `[span_bits, error_count]` pairs.
    mixed_samples: Vec<[u64; 2]>,
}

impl ErrorStatTable {
    /// Table of a channel that never produced an error over `length_bits`.
    pub fn error_free(key: TableKey, length_bits: u64, guard_gap_bits: u64) -> Self {
        ErrorStatTable {
            key,
            gap_cdf: RunLengthCdf::from_counts(&[(length_bits, 1)]),
            mixed_samples: Vec::new(),
            guard_gap_bits,
            source_length_bits: length_bits,
            source_errors: 0,
            source_ber: 0.0,
        }
    }

    pub fn is_error_free(&self) -> bool {
        self.mixed_samples.is_empty()
    }

    pub fn validate(&self) -> Result<(), ErrorModelError> {
        self.key.condition.validate()?;
        if self.guard_gap_bits < 1 {
            return Err(ErrorModelError::InvalidGuardGap);
        }
        self.gap_cdf.validate()?;
        if !(0.0..=1.0).contains(&self.source_ber) {
            return Err(ErrorModelError::Invariant("source_ber outside [0, 1]".into()));
        }
        if self.source_length_bits == 0 {
            return Err(ErrorModelError::Invariant("source trace length must be positive".into()));
        }
        if self.source_errors > self.source_length_bits {
            return Err(ErrorModelError::Invariant("more errors than bits in source trace".into()));
        }
        if (self.source_errors == 0) != self.mixed_samples.is_empty() {
            return Err(ErrorModelError::Invariant(
                "mixed_samples must be non-empty exactly when the source trace had errors".into(),
            ));
        }
        let counted: u64 = self.mixed_samples.iter().map(|m| m.error_count).sum();
        if counted != self.source_errors {
            return Err(ErrorModelError::Invariant(format!(
                "mixed samples hold {counted} errors but source_errors is {}",
                self.source_errors
            )));
        }
        let expected_ber = self.source_errors as f64 / self.source_length_bits as f64;
        if (expected_ber - self.source_ber).abs() > 1e-12 * expected_ber.max(1e-300) {
            return Err(ErrorModelError::Invariant("source_ber disagrees with error count".into()));
        }
        if self.gap_cdf.is_empty() && self.mixed_samples.is_empty() {
            return Err(ErrorModelError::Invariant("table has neither gaps nor mixed runs".into()));
        }
        for m in &self.mixed_samples {
            m.validate(self.guard_gap_bits)?;
        }
        Ok(())
    }

    pub fn to_document(&self) -> String {
        let doc = TableDocument {
            schema: TABLE_SCHEMA.to_string(),
            version: TABLE_VERSION,
            key: self.key,
            guard_gap_bits: self.guard_gap_bits,
            source_length_bits: self.source_length_bits,
            source_errors: self.source_errors,
            source_ber: self.source_ber,
            gap_cdf: self.gap_cdf.clone(),
            mixed_samples: self
                .mixed_samples
                .iter()
                .map(|m| [m.span_bits, m.error_count])
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn from_document(text: &str) -> Result<Self, ErrorModelError> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ErrorModelError::Malformed(e.to_string()))?;
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ErrorModelError::Malformed("missing version field".into()))?;
        if version != TABLE_VERSION as u64 {
            return Err(ErrorModelError::VersionMismatch {
                found: version as u32,
                expected: TABLE_VERSION,
            });
        }
        let doc: TableDocument =
            serde_json::from_value(raw).map_err(|e| ErrorModelError::Malformed(e.to_string()))?;
        if doc.schema != TABLE_SCHEMA {
            return Err(ErrorModelError::Malformed(format!(
                "schema '{}' is not '{TABLE_SCHEMA}'",
                doc.schema
            )));
        }
        let table = ErrorStatTable {
            key: doc.key,
            gap_cdf: doc.gap_cdf,
            mixed_samples: doc
                .mixed_samples
                .into_iter()
                .map(|[span_bits, error_count]| MixedRunSample { span_bits, error_count })
                .collect(),
            guard_gap_bits: doc.guard_gap_bits,
            source_length_bits: doc.source_length_bits,
            source_errors: doc.source_errors,
            source_ber: doc.source_ber,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), ErrorModelError> {
        fs::write(path, self.to_document())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ErrorModelError> {
        Self::from_document(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> TableKey {
        TableKey {
            condition: ChannelCondition::new(12.0, 1.0, 2.0).unwrap(),
            data_rate_bps: 2400,
            interleaver: Interleaver::Short,
        }
    }

    fn sample_table() -> ErrorStatTable {
        ErrorStatTable {
            key: key(),
            gap_cdf: RunLengthCdf::from_counts(&[(130, 1), (400, 2), (1000, 3)]),
            mixed_samples: vec![
                MixedRunSample { span_bits: 1, error_count: 1 },
                MixedRunSample { span_bits: 40, error_count: 5 },
            ],
            guard_gap_bits: 128,
            source_length_bits: 10_000,
            source_errors: 6,
            source_ber: 6.0 / 10_000.0,
        }
    }

    #[test]
    fn cdf_inverse_transform() {
        let cdf = RunLengthCdf::from_counts(&[(10, 1), (20, 1), (30, 2)]);
        assert_eq!(cdf.cum_prob, vec![0.25, 0.5, 1.0]);
        assert_eq!(cdf.sample(0.0), 10);
        assert_eq!(cdf.sample(0.25), 10);
        assert_eq!(cdf.sample(0.2500001), 20);
        assert_eq!(cdf.sample(0.99), 30);
        assert_eq!(cdf.cdf_at(9), 0.0);
        assert_eq!(cdf.cdf_at(25), 0.5);
        assert_eq!(cdf.cdf_at(1000), 1.0);
    }

    #[test]
    fn document_round_trip() {
        let t = sample_table();
        t.validate().unwrap();
        let back = ErrorStatTable::from_document(&t.to_document()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn probabilities_survive_the_round_trip_bit_for_bit() {
        let mut t = sample_table();
        let counts: Vec<(u64, u64)> = (1..=500).map(|i| (128 + i, 1 + (i * 7919) % 13)).collect();
        t.gap_cdf = RunLengthCdf::from_counts(&counts);
        let back = ErrorStatTable::from_document(&t.to_document()).unwrap();
        for (a, b) in t.gap_cdf.cum_prob.iter().zip(&back.gap_cdf.cum_prob) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_document_is_rejected() {
        let doc = sample_table().to_document();
        let cut = &doc[..doc.len() / 2];
        assert!(matches!(
            ErrorStatTable::from_document(cut),
            Err(ErrorModelError::Malformed(_))
        ));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let doc = sample_table().to_document().replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(
            ErrorStatTable::from_document(&doc),
            Err(ErrorModelError::VersionMismatch { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let doc = sample_table()
            .to_document()
            .replacen('{', "{\n  \"extra\": 1,", 1);
        assert!(ErrorStatTable::from_document(&doc).is_err());
    }

    #[test]
    fn invariant_violations_are_rejected_on_load() {
        let mut t = sample_table();
        t.mixed_samples[1] = MixedRunSample { span_bits: 4000, error_count: 5 };
        assert!(matches!(
            ErrorStatTable::from_document(&t.to_document()),
            Err(ErrorModelError::Invariant(_))
        ));

        let mut t = sample_table();
        t.gap_cdf.cum_prob[2] = 0.999;
        assert!(ErrorStatTable::from_document(&t.to_document()).is_err());

        let mut t = sample_table();
        t.mixed_samples.clear();
        assert!(ErrorStatTable::from_document(&t.to_document()).is_err());
    }

    #[test]
    fn file_names_encode_the_key() {
        assert_eq!(key().file_name(), "snr12.0_dop1.0_mp2.0_2400bps_short.json");
        let mut k = key();
        k.condition.snr_db = -3.25;
        assert_eq!(k.file_name(), "snrm3.3_dop1.0_mp2.0_2400bps_short.json");
    }
}
