use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use super::ErrorStatTable;
use crate::kernel::RngStream;

/// Returned once a table can never produce another error.
pub const NO_MORE_ERRORS: u64 = u64::MAX;

const MAX_PLACEMENT_ATTEMPTS: usize = 100;

/// Streaming error generator driven by an [`ErrorStatTable`].
///
/// Alternates an error-free gap drawn from the gap CDF with a mixed run
/// drawn uniformly from the recorded samples, so the cost is proportional
/// to the number of errors and not to the number of bits covered.
pub struct Erracle {
    table: Arc<ErrorStatTable>,
    rng: RngStream,
    /// First bit after the most recently generated mixed run.
    cursor: u64,
    generated_runs: u64,
    pending: VecDeque<u64>,
    /// Span queries must not start before this bit.
    floor: u64,
}

impl Erracle {
    pub fn new(table: Arc<ErrorStatTable>, rng: RngStream) -> Self {
        Erracle {
            table,
            rng,
            cursor: 0,
            generated_runs: 0,
            pending: VecDeque::new(),
            floor: 0,
        }
    }

    pub fn table(&self) -> &ErrorStatTable {
        &self.table
    }

    /// Bit position at which the next span query may start.
    pub fn position(&self) -> u64 {
        self.floor
    }

    /// Absolute position of the next error, consuming it.
    pub fn next_error(&mut self) -> u64 {
        let p = self.peek_error();
        if p != NO_MORE_ERRORS {
            self.pending.pop_front();
        }
        p
    }

    pub fn peek_error(&mut self) -> u64 {
        if self.pending.is_empty() {
            if self.table.mixed_samples.is_empty() {
                return NO_MORE_ERRORS;
            }
            self.generate_run();
        }
        self.pending[0]
    }

    /// Error positions `p` with `from <= p < to`.
    ///
    /// Spans must be queried in non-decreasing order; errors that fall in
    /// bits skipped between two queries are discarded. Panics on a query
    /// that starts before the end of the previous one.
    pub fn errors_in_span(&mut self, from: u64, to: u64) -> Vec<u64> {
        let mut out = Vec::new();
        self.scan_span(from, to, |p| out.push(p));
        out
    }

    pub fn count_in_span(&mut self, from: u64, to: u64) -> u64 {
        let mut n = 0;
        self.scan_span(from, to, |_| n += 1);
        n
    }

    fn scan_span(&mut self, from: u64, to: u64, mut hit: impl FnMut(u64)) {
        assert!(from <= to, "span query with from={from} > to={to}");
        assert!(
            from >= self.floor,
            "out-of-order span query: [{from}, {to}) starts before already consumed bit {}",
            self.floor
        );
        self.floor = to;
        loop {
            let p = self.peek_error();
            if p >= to {
                break;
            }
            self.pending.pop_front();
            if p >= from {
                hit(p);
            }
        }
    }

    fn generate_run(&mut self) {
        let table = Arc::clone(&self.table);
        let guard = table.guard_gap_bits;
        let mut gap = if table.gap_cdf.is_empty() {
            0
        } else {
            table.gap_cdf.sample(self.rng.uniform())
        };
        // Keep consecutive runs from merging when re-analysed.
        if self.generated_runs > 0 {
            gap = gap.max(guard);
        }
        let start = self.cursor + gap;
        let sample = table.mixed_samples[self.rng.random_range(0..table.mixed_samples.len())];
        let span = sample.span_bits;
        let count = sample.error_count;

        match count {
            1 => self.pending.push_back(start),
            2 => {
                self.pending.push_back(start);
                self.pending.push_back(start + span - 1);
            }
            _ if count == span => self.pending.extend(start..start + span),
            _ => {
                let offsets = self.place_interior(span, count, guard);
                self.pending.extend(offsets.into_iter().map(|o| start + o));
            }
        }
        self.cursor = start + span;
        self.generated_runs += 1;
    }

    /// Offsets of `count` errors within `span` bits, first and last bits
    /// included, with every separation below `guard` zeros.
    fn place_interior(&mut self, span: u64, count: u64, guard: u64) -> Vec<u64> {
        let interior = (span - 2) as usize;
        let k = (count - 2) as usize;
        let mut offsets = Vec::with_capacity(count as usize);
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            offsets.clear();
            offsets.push(0);
            offsets.extend(index::sample(&mut self.rng, interior, k).into_iter().map(|i| i as u64 + 1));
            offsets.push(span - 1);
            offsets[1..=k].sort_unstable();
            if offsets.windows(2).all(|w| w[1] - w[0] - 1 < guard) {
                return offsets;
            }
        }
        even_spacing(span, count)
    }
}

fn even_spacing(span: u64, count: u64) -> Vec<u64> {
    let steps = count - 1;
    (0..count).map(|i| (i * (span - 1) + steps / 2) / steps).collect()
}
