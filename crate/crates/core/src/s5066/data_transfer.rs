//! Selective-repeat ARQ over frame descriptors.
//!
//! Sequence numbers are kept as unbounded integers; the window is enforced
//! as `seq < base + window` where `base` is the lowest unacknowledged frame,
//! so a wrapped on-air representation would never be ambiguous.

use std::collections::{BTreeMap, BTreeSet};

use super::{AckReport, DPduDescriptor, PacketId};

/// Frames chosen for one transmission.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TxSelection {
    pub frames: Vec<DPduDescriptor>,
    pub retransmissions: u32,
    /// New frames were waiting but lay beyond the window.
    pub window_bound: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AckOutcome {
    pub acked: u32,
    pub lost: u32,
    /// Packets whose every frame is now acknowledged.
    pub retired_packets: Vec<PacketId>,
}

impl AckOutcome {
    pub fn loss_ratio(&self) -> Option<f64> {
        let n = self.acked + self.lost;
        (n > 0).then(|| self.lost as f64 / n as f64)
    }
}

/// Sending half of a data-transfer session.
#[derive(Debug)]
pub struct TxWindow {
    window: u64,
    next_seq: u64,
    next_new: u64,
    frames: BTreeMap<u64, DPduDescriptor>,
    retransmit: BTreeSet<u64>,
    in_flight: Vec<u64>,
    remaining: BTreeMap<PacketId, u32>,
}

impl TxWindow {
    pub fn new(window: u64) -> Self {
        assert!(window >= 1);
        TxWindow {
            window,
            next_seq: 0,
            next_new: 0,
            frames: BTreeMap::new(),
            retransmit: BTreeSet::new(),
            in_flight: Vec::new(),
            remaining: BTreeMap::new(),
        }
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Lowest sequence number not yet acknowledged.
    pub fn base(&self) -> u64 {
        self.frames.keys().next().copied().unwrap_or(self.next_seq)
    }

    pub fn unacked_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn pending_retransmissions(&self) -> usize {
        self.retransmit.len()
    }

    pub fn in_flight(&self) -> &[u64] {
        &self.in_flight
    }

    pub(crate) fn enqueue(&mut self, packet_id: PacketId, frames: Vec<DPduDescriptor>) {
        assert_eq!(frames.first().map(|f| f.seq), Some(self.next_seq));
        self.remaining.insert(packet_id, frames.len() as u32);
        for f in frames {
            self.next_seq = f.seq + 1;
            self.frames.insert(f.seq, f);
        }
    }

    /// Whether a transmission from this side would carry any frame.
    pub fn has_work(&self) -> bool {
        !self.retransmit.is_empty()
            || !self.in_flight.is_empty()
            || (self.next_new < self.next_seq && self.next_new < self.base() + self.window)
    }

    /// Picks frames for the next transmission: retransmissions first,
    /// lowest sequence first, then new frames in order, until the window
    /// or the `max_bits` air-time budget runs out. Selected frames are
    /// marked in flight.
    pub fn build_transmission(&mut self, max_bits: u64, frame_overhead_bytes: u64) -> TxSelection {
        if !self.in_flight.is_empty() {
            // No acknowledgement came back for the previous transmission.
            self.on_ack_lost();
        }
        let frame_bits = |f: &DPduDescriptor| 8 * (f.length_bytes + frame_overhead_bytes);
        let mut sel = TxSelection::default();
        let mut used = 0u64;

        let mut budget_left = true;
        for &seq in &self.retransmit {
            let f = self.frames[&seq];
            if used + frame_bits(&f) > max_bits {
                budget_left = false;
                break;
            }
            used += frame_bits(&f);
            sel.frames.push(f);
            sel.retransmissions += 1;
        }
        if budget_left {
            let limit = self.base() + self.window;
            while self.next_new < self.next_seq {
                if self.next_new >= limit {
                    sel.window_bound = true;
                    break;
                }
                let f = self.frames[&self.next_new];
                if used + frame_bits(&f) > max_bits {
                    break;
                }
                used += frame_bits(&f);
                sel.frames.push(f);
                self.next_new += 1;
            }
        }

        for f in &mut sel.frames {
            self.retransmit.remove(&f.seq);
            let stored = self.frames.get_mut(&f.seq).expect("selected frame is unacked");
            stored.tx_count += 1;
            f.tx_count = stored.tx_count;
        }
        self.in_flight = sel.frames.iter().map(|f| f.seq).collect();
        sel
    }

    /// Applies an acknowledgement for the most recent transmission.
    pub fn on_ack_received(&mut self, report: &AckReport) -> AckOutcome {
        let mut out = AckOutcome::default();
        let in_flight = std::mem::take(&mut self.in_flight);
        for &seq in &in_flight {
            if report.acks(seq) {
                out.acked += 1;
            } else {
                out.lost += 1;
                self.retransmit.insert(seq);
            }
        }
        // The report may also cover frames awaiting retransmission whose
        // earlier acknowledgement was lost.
        let covered: Vec<u64> = self
            .frames
            .keys()
            .copied()
            .take_while(|&s| s < self.next_new)
            .filter(|&s| report.acks(s))
            .collect();
        for seq in covered {
            self.retransmit.remove(&seq);
            let f = self.frames.remove(&seq).expect("present");
            let left = self.remaining.get_mut(&f.packet_id).expect("packet tracked");
            *left -= 1;
            if *left == 0 {
                self.remaining.remove(&f.packet_id);
                out.retired_packets.push(f.packet_id);
            }
        }
        out
    }

    /// The acknowledgement was corrupted: everything in flight goes again.
    pub fn on_ack_lost(&mut self) -> u32 {
        let n = self.in_flight.len() as u32;
        self.retransmit.extend(self.in_flight.drain(..));
        n
    }
}

/// Receiving half of a data-transfer session.
#[derive(Debug)]
pub struct RxWindow {
    window: u64,
    next_expected: u64,
    held: BTreeMap<u64, DPduDescriptor>,
    duplicates: u64,
    accepted_bytes: u64,
}

impl RxWindow {
    pub fn new(window: u64) -> Self {
        RxWindow {
            window,
            next_expected: 0,
            held: BTreeMap::new(),
            duplicates: 0,
            accepted_bytes: 0,
        }
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    /// Payload of every frame received intact for the first time, whether
    /// or not it has been released yet.
    pub fn accepted_bytes(&self) -> u64 {
        self.accepted_bytes
    }

    pub fn next_expected(&self) -> u64 {
        self.next_expected
    }

    /// Marks clean frames received and builds the acknowledgement. Returns
    /// the frames that became deliverable in sequence order.
    pub fn on_transmission_received(
        &mut self,
        frames: &[DPduDescriptor],
        corrupted: &[bool],
    ) -> (AckReport, Vec<DPduDescriptor>) {
        assert_eq!(frames.len(), corrupted.len(), "one verdict per frame");
        for (f, &bad) in frames.iter().zip(corrupted) {
            if bad {
                continue;
            }
            if f.seq < self.next_expected || self.held.contains_key(&f.seq) {
                self.duplicates += 1;
                continue;
            }
            assert!(
                f.seq < self.next_expected + self.window,
                "frame {} beyond receive window starting at {}",
                f.seq,
                self.next_expected
            );
            self.accepted_bytes += f.length_bytes;
            self.held.insert(f.seq, *f);
        }
        let mut in_order = Vec::new();
        while let Some(f) = self.held.remove(&self.next_expected) {
            in_order.push(f);
            self.next_expected += 1;
        }
        (self.report(), in_order)
    }

    pub fn report(&self) -> AckReport {
        let mut bitmap = Vec::new();
        if let Some(&last) = self.held.keys().next_back() {
            bitmap = vec![false; (last - self.next_expected + 1) as usize];
            for &s in self.held.keys() {
                bitmap[(s - self.next_expected) as usize] = true;
            }
        }
        AckReport::new(self.next_expected.checked_sub(1), bitmap, self.window)
    }
}
