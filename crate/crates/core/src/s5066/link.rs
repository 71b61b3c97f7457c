//! The two-node half-duplex link: token passing, transmissions judged
//! against the error stream, acknowledgements and virtual delivery.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    AckReport, ChannelAccess, IpPacketRecord, LinkConfig, NodeId, PacketId, QueueFull, RateAdaptMode, RateAdapter,
    RxWindow, SubnetInterface, SubnetStats, TxWindow, VirtualInterface,
};
use crate::errormodel::{Erracle, ErrorStatTable};
use crate::kernel::{EndpointId, RngStream, Scheduler, SimTime};
use crate::modem::{judge_transmission, ModemParams, TransmissionPlan, Verdict};

/// Kernel messages addressed to the link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkEvent {
    /// `node` may now transmit.
    TokenArrive(NodeId),
    /// The transmission from `from` has finished arriving at the far end.
    TransmissionEnd { from: NodeId },
}

/// Things the link hands back to the layers above.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LinkOutput {
    /// A packet released at its destination node.
    Delivered { node: NodeId, packet: IpPacketRecord },
    /// The source learned every frame of the packet arrived.
    Retired { node: NodeId, packet_id: PacketId },
}

/// One row of the per-transmission link log.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkLogRecord {
    pub time: SimTime,
    pub direction: NodeId,
    pub frames: u32,
    pub retransmissions: u32,
    pub corrupted: u32,
    pub ack: bool,
    pub ack_corrupted: bool,
    pub rate_bps: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LinkStats {
    pub transmissions: u64,
    pub data_transmissions: u64,
    pub frames_sent: u64,
    pub retransmissions: u64,
    pub frames_corrupted: u64,
    pub acks_sent: u64,
    pub acks_corrupted: u64,
    pub window_bound_transmissions: u64,
    pub rate_changes: u64,
    /// Payload bytes released to destinations, both directions.
    pub delivered_bytes: u64,
    /// Payload bytes received intact for the first time, including those
    /// still waiting for an earlier frame before release.
    pub received_bytes: u64,
    pub air_time: SimTime,
}

impl LinkStats {
    /// Fraction of data frames received corrupted.
    pub fn frame_error_rate(&self) -> f64 {
        if self.frames_sent == 0 {
            0.0
        } else {
            self.frames_corrupted as f64 / self.frames_sent as f64
        }
    }
}

/// One error stream per data rate. Streams advance only while a
/// transmission is on the air at their rate.
pub struct ChannelSet {
    streams: BTreeMap<u32, Erracle>,
}

impl ChannelSet {
    pub fn new(tables: &BTreeMap<u32, Arc<ErrorStatTable>>, master_seed: u64) -> Self {
        let streams = tables
            .iter()
            .map(|(&rate, t)| {
                let rng = RngStream::new(master_seed, &format!("erracle/{rate}"));
                (rate, Erracle::new(Arc::clone(t), rng))
            })
            .collect();
        ChannelSet { streams }
    }

    pub fn rates(&self) -> impl Iterator<Item = u32> + '_ {
        self.streams.keys().copied()
    }

    pub fn stream(&mut self, rate: u32) -> &mut Erracle {
        self.streams
            .get_mut(&rate)
            .unwrap_or_else(|| panic!("no error table loaded for {rate} bps"))
    }
}

struct Node {
    subnet: SubnetInterface,
    tx: TxWindow,
    /// Receives the other node's frames.
    rx: RxWindow,
    /// Packets in transit towards this node.
    inbound: VirtualInterface,
    owed_ack: Option<AckReport>,
}

struct OnAir {
    from: NodeId,
    plan: TransmissionPlan,
    verdict: Verdict,
}

pub struct HfLink {
    endpoint: EndpointId,
    cfg: LinkConfig,
    modem: ModemParams,
    max_tx: SimTime,
    nodes: [Node; 2],
    channels: ChannelSet,
    adapter: Option<RateAdapter>,
    access: ChannelAccess,
    token: NodeId,
    idle: bool,
    on_air: Option<OnAir>,
    stats: LinkStats,
    log: Vec<LinkLogRecord>,
}

impl HfLink {
    /// Builds the link and brings it up. `channels` must hold a stream for
    /// every rate the link may use.
    pub fn new(endpoint: EndpointId, cfg: LinkConfig, modem: ModemParams, channels: ChannelSet) -> Self {
        let node = || Node {
            subnet: SubnetInterface::new(cfg.queue_packets),
            tx: TxWindow::new(cfg.window_frames),
            rx: RxWindow::new(cfg.window_frames),
            inbound: VirtualInterface::default(),
            owed_ack: None,
        };
        let adapter = match cfg.rate_adapt {
            RateAdaptMode::Off => None,
            RateAdaptMode::Simple => Some(RateAdapter::new(modem.supported_rates.clone())),
        };
        let mut access = ChannelAccess::default();
        access.establish();
        HfLink {
            endpoint,
            max_tx: SimTime::from_secs_f64(cfg.max_tx_time_s),
            nodes: [node(), node()],
            cfg,
            modem,
            channels,
            adapter,
            access,
            token: NodeId::A,
            idle: true,
            on_air: None,
            stats: LinkStats::default(),
            log: Vec::new(),
        }
    }

    pub fn endpoint(&self) -> EndpointId {
        self.endpoint
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn rate_bps(&self) -> u32 {
        self.modem.data_rate_bps
    }

    pub fn stats(&self) -> &LinkStats {
        &self.stats
    }

    pub fn subnet_stats(&self, node: NodeId) -> &SubnetStats {
        self.nodes[node.index()].subnet.stats()
    }

    pub fn log(&self) -> &[LinkLogRecord] {
        &self.log
    }

    pub fn access(&self) -> &ChannelAccess {
        &self.access
    }

    pub fn has_space(&self, node: NodeId) -> bool {
        self.nodes[node.index()].subnet.has_space()
    }

    pub fn queued_packets(&self, node: NodeId) -> usize {
        self.nodes[node.index()].subnet.queued_packets()
    }

    pub fn receive_duplicates(&self) -> u64 {
        self.nodes.iter().map(|n| n.rx.duplicates()).sum()
    }

    /// Bytes accepted from `node` but not yet released at the far end.
    pub fn in_transit_bytes(&self, node: NodeId) -> u64 {
        self.nodes[node.other().index()].inbound.held_bytes()
    }

    /// Byte conservation for traffic sourced at `node`.
    pub fn conservation_holds(&self, node: NodeId) -> bool {
        let s = self.subnet_stats(node);
        s.delivered_bytes + self.in_transit_bytes(node) + s.dropped_bytes == s.submitted_bytes
    }

    /// Hands a packet to the link at its source node, waking the link if
    /// it was idle.
    pub fn submit<M: From<LinkEvent>>(
        &mut self,
        packet: IpPacketRecord,
        sched: &mut Scheduler<M>,
    ) -> Result<(), QueueFull> {
        let src = packet.source;
        assert_ne!(src, packet.destination, "packet must cross the link");
        let payload = self.cfg.frame_payload_bytes;
        let [a, b] = &mut self.nodes;
        let (from, to) = match src {
            NodeId::A => (a, b),
            NodeId::B => (b, a),
        };
        from.subnet.subnet_submit(packet, payload, &mut from.tx, &mut to.inbound)?;
        if self.idle {
            self.idle = false;
            sched.schedule(sched.now(), self.endpoint, LinkEvent::TokenArrive(self.token).into());
        }
        Ok(())
    }

    pub fn handle<M: From<LinkEvent>>(&mut self, ev: LinkEvent, sched: &mut Scheduler<M>) -> Vec<LinkOutput> {
        match ev {
            LinkEvent::TokenArrive(node) => {
                self.on_token(node, sched);
                Vec::new()
            }
            LinkEvent::TransmissionEnd { from } => self.on_transmission_end(from, sched),
        }
    }

    fn node_has_work(&self, node: NodeId) -> bool {
        let n = &self.nodes[node.index()];
        n.owed_ack.is_some() || n.tx.has_work()
    }

    fn on_token<M: From<LinkEvent>>(&mut self, node: NodeId, sched: &mut Scheduler<M>) {
        debug_assert!(self.on_air.is_none(), "token arrived while the channel is busy");
        self.token = node;
        let now = sched.now();
        let max_bits = self.modem.max_bits_within(self.max_tx);
        let overhead = self.cfg.frame_overhead_bytes;
        let n = &mut self.nodes[node.index()];
        let ack = n.owed_ack.take();
        let ack_bits = ack.as_ref().map_or(0, |a| 8 * a.size_bytes);
        let sel = if n.tx.has_work() {
            n.tx.build_transmission(max_bits.saturating_sub(ack_bits), overhead)
        } else {
            Default::default()
        };

        if ack.is_none() && sel.frames.is_empty() {
            if self.node_has_work(node.other()) {
                sched.schedule(now + self.modem.turnaround(), self.endpoint, LinkEvent::TokenArrive(node.other()).into());
            } else {
                self.idle = true;
            }
            return;
        }

        let plan = TransmissionPlan::new(ack, sel.frames, overhead, &self.modem);
        let verdict = judge_transmission(&plan, self.channels.stream(self.modem.data_rate_bps));

        let corrupted = verdict.frame_corrupted.iter().filter(|&&c| c).count() as u32;
        self.stats.transmissions += 1;
        self.stats.air_time += plan.duration;
        if !plan.frames.is_empty() {
            self.stats.data_transmissions += 1;
            self.stats.frames_sent += plan.frames.len() as u64;
            self.stats.retransmissions += sel.retransmissions as u64;
            self.stats.frames_corrupted += corrupted as u64;
        }
        if sel.window_bound {
            self.stats.window_bound_transmissions += 1;
        }
        if plan.ack.is_some() {
            self.stats.acks_sent += 1;
            self.stats.acks_corrupted += verdict.ack_corrupted as u64;
        }
        self.log.push(LinkLogRecord {
            time: now,
            direction: node,
            frames: plan.frames.len() as u32,
            retransmissions: sel.retransmissions,
            corrupted,
            ack: plan.ack.is_some(),
            ack_corrupted: verdict.ack_corrupted,
            rate_bps: self.modem.data_rate_bps,
        });

        sched.schedule(now + plan.duration, self.endpoint, LinkEvent::TransmissionEnd { from: node }.into());
        self.on_air = Some(OnAir {
            from: node,
            plan,
            verdict,
        });
    }

    fn on_transmission_end<M: From<LinkEvent>>(&mut self, from: NodeId, sched: &mut Scheduler<M>) -> Vec<LinkOutput> {
        let air = self.on_air.take().expect("transmission end without a transmission");
        assert_eq!(air.from, from);
        let to = from.other();
        let mut out = Vec::new();

        if let Some(ack) = &air.plan.ack {
            let r = &mut self.nodes[to.index()];
            let loss = if air.verdict.ack_corrupted {
                r.tx.on_ack_lost();
                Some(1.0)
            } else {
                let outcome = r.tx.on_ack_received(ack);
                for id in outcome.retired_packets.iter().copied() {
                    r.subnet.retire(id);
                    out.push(LinkOutput::Retired { node: to, packet_id: id });
                }
                outcome.loss_ratio()
            };
            if let (Some(loss), Some(adapter)) = (loss, self.adapter.as_mut()) {
                let next = adapter.rate_adapt_step(self.modem.data_rate_bps, loss);
                if next != self.modem.data_rate_bps {
                    self.modem.data_rate_bps = next;
                    self.stats.rate_changes += 1;
                }
            }
        }

        if !air.plan.frames.is_empty() {
            let [a, b] = &mut self.nodes;
            let (src, dst) = match from {
                NodeId::A => (a, b),
                NodeId::B => (b, a),
            };
            let before = dst.rx.accepted_bytes();
            let (report, in_order) = dst.rx.on_transmission_received(&air.plan.frames, &air.verdict.frame_corrupted);
            self.stats.received_bytes += dst.rx.accepted_bytes() - before;
            dst.owed_ack = Some(report);
            for f in in_order {
                let len = dst.inbound.length_of(f.packet_id).expect("frame of an unregistered packet");
                if f.offset_bytes + f.length_bytes == len {
                    let packet = dst.inbound.release(f.packet_id).expect("registered");
                    src.subnet.note_delivered(len);
                    self.stats.delivered_bytes += len;
                    out.push(LinkOutput::Delivered { node: to, packet });
                }
            }
        }

        sched.schedule(
            sched.now() + self.modem.turnaround(),
            self.endpoint,
            LinkEvent::TokenArrive(to).into(),
        );
        out
    }
}
