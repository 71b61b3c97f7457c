//! Deterministic discrete-event engine.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is a per-scheduler
//! insertion counter, so two events scheduled for the same instant fire in
//! the order they were scheduled. Time is kept in integer microseconds.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Simulated time in microseconds since the start of the run.
///
/// Conversions from seconds round to the nearest microsecond, with ties
/// rounded away from zero (`f64::round`). A bit at 75 bps therefore lasts
/// 13333 µs when converted on its own; the modem converts whole
/// transmissions at once so the error does not accumulate per bit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "simulated time must be finite and non-negative, got {secs}"
        );
        SimTime((secs * 1e6).round() as u64)
    }

    pub const fn from_secs(secs: u64) -> Self {
        SimTime(secs * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_add(rhs.0).expect("simulated time overflow"))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("negative simulated duration"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// Identifies the module an event is addressed to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EndpointId(pub u32);

/// Returned by [`Scheduler::schedule`]; lets the caller cancel the event
/// until it fires.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug)]
pub struct Event<M> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: EndpointId,
    pub payload: M,
}

struct Queued<M>(Event<M>);

impl<M> PartialEq for Queued<M> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.seq == other.0.seq
    }
}

impl<M> Eq for Queued<M> {}

impl<M> PartialOrd for Queued<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Queued<M> {
    // BinaryHeap is a max-heap; invert so the earliest (fire_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

/// One dispatched event as recorded by the audit log.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: EndpointId,
}

pub struct Scheduler<M> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<M>>,
    cancelled: HashSet<u64>,
    dispatched: u64,
    log: Option<Vec<LogEntry>>,
}

impl<M> Default for Scheduler<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M> Scheduler<M> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            dispatched: 0,
            log: None,
        }
    }

    /// Records every dispatched event from now on.
    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn log(&self) -> &[LogEntry] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    /// Queues `payload` for `target` at absolute time `fire_at`.
    ///
    /// Panics if `fire_at` lies in the past: that is always a bug in the
    /// calling model and continuing would corrupt causality.
    pub fn schedule(&mut self, fire_at: SimTime, target: EndpointId, payload: M) -> EventHandle {
        if fire_at < self.now {
            panic!(
                "event for {:?} scheduled in the past: fire_at={} now={}",
                target, fire_at, self.now
            );
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event {
            fire_at,
            seq,
            target,
            payload,
        }));
        EventHandle(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, target: EndpointId, payload: M) -> EventHandle {
        self.schedule(self.now + delay, target, payload)
    }

    /// Cancels a pending event. Cancelling an event that already fired is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        if self.queue.iter().any(|q| q.0.seq == handle.0) {
            self.cancelled.insert(handle.0);
        }
    }

    /// Pops the next live event with `fire_at <= t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<M>> {
        loop {
            let head = self.queue.peek()?;
            if head.0.fire_at > t_end {
                return None;
            }
            let Queued(ev) = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            self.dispatched += 1;
            if let Some(log) = self.log.as_mut() {
                log.push(LogEntry {
                    fire_at: ev.fire_at,
                    seq: ev.seq,
                    target: ev.target,
                });
            }
            return Some(ev);
        }
    }

    /// Moves the clock forward to `t` once no earlier events remain.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Dispatches every event with `fire_at <= t_end` to `handler`, then
    /// leaves the clock at `t_end`. Returns the number of events dispatched.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Scheduler<M>, Event<M>),
    {
        let start = self.dispatched;
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
        }
        self.advance_to(t_end);
        self.dispatched - start
    }
}

/// A labelled pseudo-random stream derived from a master seed.
///
/// The generator state is seeded with SHA-256 over the master seed and the
/// label, so streams with different labels are independent and the same
/// `(seed, label)` pair always replays the same draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    stream_id: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(master_seed.to_le_bytes());
        hasher.update(stream_id.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        RngStream {
            stream_id: stream_id.to_string(),
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
