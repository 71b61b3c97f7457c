//! Simplified STANAG 5066 data link.
//!
//! Split the way the protocol is: [`SubnetInterface`] accepts and releases
//! IP packets, [`ChannelAccess`] brings the link up, and the data-transfer
//! windows in [`data_transfer`] run half-duplex selective-repeat ARQ over
//! frame descriptors. Packet bytes never cross the simulated channel; the
//! destination holds a cached copy that is released once every frame of the
//! packet has been declared delivered.

mod channel_access;
pub mod data_transfer;
mod link;
mod rate;
mod subnet;

use serde::{Deserialize, Serialize};

use crate::kernel::SimTime;

pub use channel_access::{ChannelAccess, Linked};
pub use data_transfer::{RxWindow, TxSelection, TxWindow};
pub use link::{ChannelSet, HfLink, LinkEvent, LinkLogRecord, LinkOutput, LinkStats};
pub use rate::RateAdapter;
pub use subnet::{fragment, QueueFull, SubnetInterface, SubnetStats, VirtualInterface};

pub type PacketId = u64;

/// One end of the radio link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    A,
    B,
}

impl NodeId {
    pub fn other(self) -> NodeId {
        match self {
            NodeId::A => NodeId::B,
            NodeId::B => NodeId::A,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn direction(self) -> &'static str {
        match self {
            NodeId::A => "A>B",
            NodeId::B => "B>A",
        }
    }
}

/// What a packet carries, as far as the layers above the link care.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PacketBody {
    /// Filler traffic with no transport semantics.
    Opaque,
    TcpData { flow: u32, conn: u8, seq: u64, len: u32 },
    TcpAck { flow: u32, conn: u8, ack: u64, wnd: u64 },
    /// Proxy relay of a byte range of a flow's stream.
    Relay { flow: u32, offset: u64, len: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IpPacketRecord {
    pub packet_id: PacketId,
    pub length_bytes: u64,
    pub arrival_time: SimTime,
    pub source: NodeId,
    pub destination: NodeId,
    pub body: PacketBody,
}

/// A data frame: which slice of which packet it stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DPduDescriptor {
    pub packet_id: PacketId,
    pub offset_bytes: u64,
    pub length_bytes: u64,
    pub seq: u64,
    pub tx_count: u32,
}

/// Selective acknowledgement: everything up to `cumulative_seq`, plus the
/// frames flagged in `selective_bitmap`, where bit `i` stands for
/// `cumulative_seq + 1 + i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AckReport {
    pub cumulative_seq: Option<u64>,
    pub selective_bitmap: Vec<bool>,
    pub size_bytes: u64,
}

impl AckReport {
    pub fn new(cumulative_seq: Option<u64>, mut selective_bitmap: Vec<bool>, window_frames: u64) -> Self {
        while selective_bitmap.last() == Some(&false) {
            selective_bitmap.pop();
        }
        AckReport {
            cumulative_seq,
            selective_bitmap,
            size_bytes: ack_size_bytes(window_frames),
        }
    }

    fn first_unacked(&self) -> u64 {
        self.cumulative_seq.map_or(0, |c| c + 1)
    }

    pub fn acks(&self, seq: u64) -> bool {
        let first = self.first_unacked();
        if seq < first {
            return true;
        }
        self.selective_bitmap
            .get((seq - first) as usize)
            .copied()
            .unwrap_or(false)
    }

    /// Sequence numbers flagged in the bitmap.
    pub fn selected(&self) -> impl Iterator<Item = u64> + '_ {
        let first = self.first_unacked();
        self.selective_bitmap
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| first + i as u64)
    }
}

/// Modelled over-the-air size of an acknowledgement: 8 header bytes plus
/// one bitmap bit per window slot.
pub fn ack_size_bytes(window_frames: u64) -> u64 {
    8 + window_frames.div_ceil(8)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateAdaptMode {
    Off,
    Simple,
}

fn default_queue_packets() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub frame_payload_bytes: u64,
    pub frame_overhead_bytes: u64,
    pub window_frames: u64,
    pub max_tx_time_s: f64,
    pub rate_adapt: RateAdaptMode,
    #[serde(default = "default_queue_packets")]
    pub queue_packets: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            frame_payload_bytes: 250,
            frame_overhead_bytes: crate::calibrate::FITTED_FRAME_OVERHEAD_BYTES,
            window_frames: 128,
            max_tx_time_s: 120.0,
            rate_adapt: RateAdaptMode::Off,
            queue_packets: default_queue_packets(),
        }
    }
}

impl LinkConfig {
    pub fn validate(&self, modem: &crate::modem::ModemParams) -> Result<(), String> {
        if self.window_frames < 1 {
            return Err("window_frames must be at least 1".into());
        }
        if self.frame_payload_bytes < 1 {
            return Err("frame_payload_bytes must be at least 1".into());
        }
        if self.queue_packets < 1 {
            return Err("queue_packets must be at least 1".into());
        }
        if !self.max_tx_time_s.is_finite() || self.max_tx_time_s <= modem.t_preamble_s + modem.t_flush_s {
            return Err(format!(
                "max_tx_time_s ({}) must exceed the modem's fixed overhead ({} s)",
                self.max_tx_time_s,
                modem.t_preamble_s + modem.t_flush_s
            ));
        }
        Ok(())
    }

    pub fn ack_size_bytes(&self) -> u64 {
        ack_size_bytes(self.window_frames)
    }
}
