//! Helpers shared by the integration tests. Statistical references here are
//! written independently of the library code they check.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use hfsim::errormodel::{
    analyze_trace, burst_synthesize, BitErrorTrace, BurstSynthParams, ChannelCondition, ErrorStatTable, Interleaver,
    TableKey, DEFAULT_GUARD_GAP_BITS,
};
use hfsim::kernel::RngStream;
use hfsim::scenario::{ScenarioConfig, TableSet};
use hfsim::transport::{TrafficMode, TransferSpec};

pub mod arq;

pub fn key(snr_db: f64, doppler_hz: f64, multipath_ms: f64, rate: u32) -> TableKey {
    TableKey {
        condition: ChannelCondition::new(snr_db, doppler_hz, multipath_ms).unwrap(),
        data_rate_bps: rate,
        interleaver: Interleaver::Short,
    }
}

/// A table analysed from a trace of the two-state chain.
pub fn chain_table(params: &BurstSynthParams, bits: u64, seed: u64, key: TableKey) -> Arc<ErrorStatTable> {
    let trace = burst_synthesize(params, bits, &mut RngStream::new(seed, "synth")).unwrap();
    Arc::new(analyze_trace(&trace, DEFAULT_GUARD_GAP_BITS, key).unwrap())
}

/// The stand-in table for the condition the transfer tests use.
pub fn stand_in_table(snr_db: f64, rate: u32, bits: u64) -> Arc<ErrorStatTable> {
    let k = key(snr_db, 1.0, 2.0, rate);
    let params = BurstSynthParams::stand_in(&k.condition, rate, Interleaver::Short);
    chain_table(&params, bits, 99, k)
}

pub fn table_set(rate: u32, table: Arc<ErrorStatTable>) -> TableSet {
    let mut t = TableSet::new();
    t.insert(rate, table);
    t
}

pub fn clean_tables(rate: u32) -> TableSet {
    table_set(rate, Arc::new(ErrorStatTable::error_free(key(30.0, 0.0, 0.0, rate), 1 << 20, 128)))
}

/// A 100 kB transfer scenario on the 1 Hz / 2 ms channel at 2400 bps. The
/// channel is marked ideal only so validation does not ask for a table
/// directory; the tables actually used are passed to the simulation.
pub fn transfer_scenario(mode: TrafficMode, snr_db: f64, seed: u64) -> ScenarioConfig {
    let mut sc = ScenarioConfig::new(mode, snr_db, seed, 20_000.0);
    sc.channel.doppler_hz = 1.0;
    sc.channel.multipath_ms = 2.0;
    sc.channel.ideal = true;
    sc.traffic.push(TransferSpec {
        size_bytes: 100_000,
        start_s: 0.0,
        deadline_s: 7200.0,
    });
    sc
}

/// Independent two-state chain: sojourn lengths are drawn geometrically
/// rather than stepping a transition per bit.
pub fn oracle_chain(params: &BurstSynthParams, n_bits: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let geometric = |p: f64, rng: &mut ChaCha20Rng| -> u64 {
        if p <= 0.0 {
            return u64::MAX;
        }
        if p >= 1.0 {
            return 1;
        }
        let u: f64 = 1.0 - rng.random::<f64>();
        (u.ln() / (1.0 - p).ln()).floor() as u64 + 1
    };
    let mut errors = Vec::new();
    let mut pos = 0u64;
    let mut bad = false;
    while pos < n_bits {
        let stay = geometric(if bad { params.p_b2g } else { params.p_g2b }, &mut rng);
        let end = pos.saturating_add(stay).min(n_bits);
        let ber = if bad { params.ber_bad } else { params.ber_good };
        if ber > 0.0 {
            for b in pos..end {
                if rng.random::<f64>() < ber {
                    errors.push(b);
                }
            }
        }
        pos = end;
        bad = !bad;
    }
    errors
}

/// Error-free run lengths of a trace: every zero run of at least `guard`
/// bits between errors, plus the leading and trailing runs.
pub fn gap_lengths(errors: &[u64], n_bits: u64, guard: u64) -> Vec<u64> {
    let Some(&first) = errors.first() else {
        return vec![n_bits];
    };
    let mut gaps = Vec::new();
    if first > 0 {
        gaps.push(first);
    }
    for w in errors.windows(2) {
        let zeros = w[1] - w[0] - 1;
        if zeros >= guard {
            gaps.push(zeros);
        }
    }
    let last = *errors.last().unwrap();
    if last + 1 < n_bits {
        gaps.push(n_bits - last - 1);
    }
    gaps
}

/// Two-sample Kolmogorov-Smirnov statistic by sorting both samples and
/// merging.
pub fn ks_distance(a: &[u64], b: &[u64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

pub fn trace_of(errors: Vec<u64>, n_bits: u64) -> BitErrorTrace {
    BitErrorTrace::new(n_bits, errors).unwrap()
}
