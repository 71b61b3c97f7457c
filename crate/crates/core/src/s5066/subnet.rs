use std::collections::BTreeMap;

use thiserror::Error;

use super::{DPduDescriptor, IpPacketRecord, PacketId, TxWindow};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("subnet queue full ({limit} packets); packet {packet_id} dropped")]
pub struct QueueFull {
    pub packet_id: PacketId,
    pub limit: usize,
}

/// Splits a packet into frame descriptors of at most `frame_payload` bytes.
pub fn fragment(packet_id: PacketId, length_bytes: u64, frame_payload: u64, first_seq: u64) -> Vec<DPduDescriptor> {
    assert!(length_bytes >= 1, "packets carry at least one byte");
    (0..length_bytes.div_ceil(frame_payload))
        .map(|i| {
            let offset = i * frame_payload;
            DPduDescriptor {
                packet_id,
                offset_bytes: offset,
                length_bytes: frame_payload.min(length_bytes - offset),
                seq: first_seq + i,
                tx_count: 0,
            }
        })
        .collect()
}

/// Destination-side cache of packets in transit. Packets are registered
/// when the source accepts them and released once the link has delivered
/// every frame.
#[derive(Debug, Default)]
pub struct VirtualInterface {
    held: BTreeMap<PacketId, IpPacketRecord>,
}

impl VirtualInterface {
    pub fn register(&mut self, packet: IpPacketRecord) {
        let id = packet.packet_id;
        let prev = self.held.insert(id, packet);
        assert!(prev.is_none(), "packet id {id} registered twice");
    }

    pub fn length_of(&self, id: PacketId) -> Option<u64> {
        self.held.get(&id).map(|p| p.length_bytes)
    }

    pub fn release(&mut self, id: PacketId) -> Option<IpPacketRecord> {
        self.held.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.held.is_empty()
    }

    pub fn held_bytes(&self) -> u64 {
        self.held.values().map(|p| p.length_bytes).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SubnetStats {
    pub submitted_packets: u64,
    pub submitted_bytes: u64,
    pub dropped_packets: u64,
    pub dropped_bytes: u64,
    pub delivered_packets: u64,
    pub delivered_bytes: u64,
}

/// Source side of the IP/link boundary at one node.
#[derive(Debug)]
pub struct SubnetInterface {
    queue_limit: usize,
    /// Accepted packets whose frames are not all acknowledged yet.
    queued: BTreeMap<PacketId, u64>,
    stats: SubnetStats,
}

impl SubnetInterface {
    pub fn new(queue_limit: usize) -> Self {
        SubnetInterface {
            queue_limit,
            queued: BTreeMap::new(),
            stats: SubnetStats::default(),
        }
    }

    pub fn queue_limit(&self) -> usize {
        self.queue_limit
    }

    pub fn queued_packets(&self) -> usize {
        self.queued.len()
    }

    pub fn has_space(&self) -> bool {
        self.queued.len() < self.queue_limit
    }

    pub fn stats(&self) -> &SubnetStats {
        &self.stats
    }

    /// Accepts a packet: fragments it onto `tx` and registers it with the
    /// destination's virtual interface. Tail-drops when the queue is full.
    pub fn subnet_submit(
        &mut self,
        packet: IpPacketRecord,
        frame_payload: u64,
        tx: &mut TxWindow,
        destination: &mut VirtualInterface,
    ) -> Result<(), QueueFull> {
        self.stats.submitted_packets += 1;
        self.stats.submitted_bytes += packet.length_bytes;
        if !self.has_space() {
            self.stats.dropped_packets += 1;
            self.stats.dropped_bytes += packet.length_bytes;
            return Err(QueueFull {
                packet_id: packet.packet_id,
                limit: self.queue_limit,
            });
        }
        let frames = fragment(packet.packet_id, packet.length_bytes, frame_payload, tx.next_seq());
        tx.enqueue(packet.packet_id, frames);
        self.queued.insert(packet.packet_id, packet.length_bytes);
        destination.register(packet);
        Ok(())
    }

    /// The source learned that every frame of `id` was received.
    pub fn retire(&mut self, id: PacketId) {
        self.queued.remove(&id);
    }

    pub(crate) fn note_delivered(&mut self, bytes: u64) {
        self.stats.delivered_packets += 1;
        self.stats.delivered_bytes += bytes;
    }
}
