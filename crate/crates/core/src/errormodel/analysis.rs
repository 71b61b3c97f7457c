use std::collections::BTreeMap;

use super::{BitErrorTrace, ErrorModelError, ErrorStatTable, MixedRunSample, RunLengthCdf, TableKey};

/// Separation (in error-free bits) at which two errors fall into different
/// mixed runs.
pub const DEFAULT_GUARD_GAP_BITS: u64 = 128;

/// Partitions `trace` into error-free gaps and mixed runs.
///
/// Two consecutive errors belong to the same mixed run iff fewer than
/// `guard_gap_bits` zeros separate them. Leading and trailing zero runs are
/// counted as gaps; zero-length gaps are not recorded.
pub fn analyze_trace(
    trace: &BitErrorTrace,
    guard_gap_bits: u64,
    key: TableKey,
) -> Result<ErrorStatTable, ErrorModelError> {
    if guard_gap_bits < 1 {
        return Err(ErrorModelError::InvalidGuardGap);
    }
    if trace.length_bits() == 0 {
        return Err(ErrorModelError::EmptyTrace);
    }
    key.condition.validate()?;

    let errors = trace.error_positions();
    let Some((&first, rest)) = errors.split_first() else {
        return Ok(ErrorStatTable::error_free(key, trace.length_bits(), guard_gap_bits));
    };

    let mut gaps: BTreeMap<u64, u64> = BTreeMap::new();
    let mut add_gap = |len: u64| {
        if len > 0 {
            *gaps.entry(len).or_default() += 1;
        }
    };
    let mut mixed = Vec::new();

    add_gap(first);
    let mut run_start = first;
    let mut run_count = 1u64;
    let mut prev = first;
    for &e in rest {
        let zeros = e - prev - 1;
        if zeros < guard_gap_bits {
            run_count += 1;
        } else {
            mixed.push(MixedRunSample {
                span_bits: prev - run_start + 1,
                error_count: run_count,
            });
            add_gap(zeros);
            run_start = e;
            run_count = 1;
        }
        prev = e;
    }
    mixed.push(MixedRunSample {
        span_bits: prev - run_start + 1,
        error_count: run_count,
    });
    add_gap(trace.length_bits() - prev - 1);

    let counts: Vec<(u64, u64)> = gaps.into_iter().collect();
    Ok(ErrorStatTable {
        key,
        gap_cdf: RunLengthCdf::from_counts(&counts),
        mixed_samples: mixed,
        guard_gap_bits,
        source_length_bits: trace.length_bits(),
        source_errors: trace.error_count(),
        source_ber: trace.ber(),
    })
}
