use serde::{Deserialize, Serialize};

use super::tcp::TcpReceiver;
use crate::s5066::{IpPacketRecord, PacketBody};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PepMode {
    #[default]
    Off,
    Accelerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PepConfig {
    /// Follows the scenario's traffic mode rather than the config block.
    #[serde(skip)]
    pub mode: PepMode,
    pub local_ack: bool,
    pub ack_aggregation_interval_s: f64,
    pub advertised_window_bytes: u64,
    /// Largest stream chunk carried in one relay packet.
    pub relay_payload_bytes: u32,
}

impl Default for PepConfig {
    fn default() -> Self {
        PepConfig {
            mode: PepMode::Off,
            local_ack: true,
            ack_aggregation_interval_s: 0.5,
            advertised_window_bytes: 1 << 20,
            relay_payload_bytes: 1460,
        }
    }
}

impl PepConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.ack_aggregation_interval_s >= 0.0 && self.ack_aggregation_interval_s.is_finite()) {
            return Err("pep.ack_aggregation_interval_s must be a non-negative duration".into());
        }
        if self.advertised_window_bytes == 0 || self.relay_payload_bytes == 0 {
            return Err("pep.advertised_window_bytes and pep.relay_payload_bytes must be positive".into());
        }
        Ok(())
    }

    /// Whether the proxy terminates connections at all.
    pub fn terminates(&self) -> bool {
        self.mode == PepMode::Accelerate && self.local_ack
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Intercept {
    Forward,
    TerminateLocally,
}

/// Decides what the proxy does with a packet arriving from the local side.
/// Only data segments of the origin's connection are taken over; everything
/// else is routed unchanged.
pub fn pep_intercept(packet: &IpPacketRecord, cfg: &PepConfig) -> Intercept {
    match packet.body {
        PacketBody::TcpData { conn: 0, .. } if cfg.terminates() => Intercept::TerminateLocally,
        _ => Intercept::Forward,
    }
}

/// The sending-side proxy for one flow: it plays the destination towards
/// the origin and buffers accepted bytes until the link takes them.
#[derive(Clone, Debug)]
pub struct PepIngress {
    rx: TcpReceiver,
    window: u64,
    relayed: u64,
    last_ack_sent: Option<(u64, u64)>,
    ack_pending: bool,
    acks_sent: u64,
}

impl PepIngress {
    pub fn new(cfg: &PepConfig) -> Self {
        PepIngress {
            rx: TcpReceiver::new(cfg.advertised_window_bytes),
            window: cfg.advertised_window_bytes,
            relayed: 0,
            last_ack_sent: None,
            ack_pending: false,
            acks_sent: 0,
        }
    }

    /// Bytes acknowledged to the origin but not yet handed to the link.
    pub fn buffered(&self) -> u64 {
        self.rx.rcv_nxt() - self.relayed
    }

    pub fn accepted(&self) -> u64 {
        self.rx.rcv_nxt()
    }

    pub fn relayed(&self) -> u64 {
        self.relayed
    }

    pub fn acks_sent(&self) -> u64 {
        self.acks_sent
    }

    pub fn advertised(&self) -> u64 {
        self.window - self.buffered()
    }

    /// Takes a data segment from the origin. Returns true when an ack tick
    /// should be scheduled.
    pub fn on_data(&mut self, seq: u64, len: u32) -> bool {
        // The receive window shrinks with the buffer.
        if seq + len as u64 > self.rx.rcv_nxt() + self.advertised() {
            return self.request_ack();
        }
        self.rx.on_segment(seq, len);
        self.request_ack()
    }

    /// Next chunk for the link, if any is buffered.
    pub fn next_relay_chunk(&self, max_len: u32) -> Option<(u64, u32)> {
        let b = self.buffered();
        (b > 0).then(|| (self.relayed, b.min(max_len as u64) as u32))
    }

    /// The link accepted the chunk from [`Self::next_relay_chunk`]. Returns
    /// true when an ack tick should be scheduled to reopen the window.
    pub fn chunk_relayed(&mut self, len: u32) -> bool {
        self.relayed += len as u64;
        debug_assert!(self.relayed <= self.rx.rcv_nxt());
        self.request_ack()
    }

    fn request_ack(&mut self) -> bool {
        let want = (self.rx.rcv_nxt(), self.advertised());
        if self.last_ack_sent == Some(want) || self.ack_pending {
            return false;
        }
        self.ack_pending = true;
        true
    }

    /// The aggregation interval elapsed: the cumulative ack to send, if it
    /// says anything new.
    pub fn on_ack_tick(&mut self) -> Option<(u64, u64)> {
        self.ack_pending = false;
        let now = (self.rx.rcv_nxt(), self.advertised());
        if self.last_ack_sent == Some(now) {
            return None;
        }
        self.last_ack_sent = Some(now);
        self.acks_sent += 1;
        Some(now)
    }
}
