//! One simulation run: the link, the end hosts and the proxies wired
//! together through the event scheduler.
//!
//! ```text
//! origin --LAN-- node A ~~~~ HF link ~~~~ node B --LAN-- destination
//! ```
//!
//! The proxy pair, when enabled, sits on nodes A and B.

use crate::kernel::{EndpointId, Scheduler, SimTime};
use crate::s5066::{
    ChannelSet, HfLink, IpPacketRecord, LinkEvent, LinkLogRecord, LinkOutput, LinkStats, NodeId, PacketBody,
};
use crate::scenario::{ScenarioConfig, ScenarioError, TableSet};
use crate::transport::{
    pep_intercept, saturation_refill, Intercept, Outcome, PepConfig, PepIngress, PepMode, StreamAudit, TcpReceiver,
    TcpSender, TrafficMode, TransferResult,
};

const LINK: EndpointId = EndpointId(0);
const LAN: EndpointId = EndpointId(1);
const HOSTS: EndpointId = EndpointId(2);

/// Where a packet on a LAN segment is heading.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hop {
    Origin,
    GatewayA,
    GatewayB,
    Destination,
}

#[derive(Clone, Debug)]
pub enum SimEvent {
    Link(LinkEvent),
    Lan { to: Hop, packet: IpPacketRecord },
    TransferStart(u32),
    Deadline(u32),
    RtxTimer { flow: u32, conn: u8, generation: u64 },
    AckTick(u32),
}

impl From<LinkEvent> for SimEvent {
    fn from(e: LinkEvent) -> Self {
        SimEvent::Link(e)
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct TimerSlot {
    armed_for: Option<SimTime>,
    generation: u64,
}

struct Flow {
    size: u64,
    start: SimTime,
    /// Origin's connection (conn 0).
    origin: TcpSender,
    /// The destination host's receiver.
    dest: TcpReceiver,
    audit: StreamAudit,
    ingress: Option<PepIngress>,
    /// The far proxy's connection to the destination (conn 1).
    egress: Option<TcpSender>,
    timers: [TimerSlot; 2],
    completed_at: Option<SimTime>,
    failed: bool,
}

impl Flow {
    fn resolved(&self) -> bool {
        self.completed_at.is_some() || self.failed
    }

    fn sender(&mut self, conn: u8) -> &mut TcpSender {
        match conn {
            0 => &mut self.origin,
            _ => self.egress.as_mut().expect("egress connection exists"),
        }
    }

    fn aborted(&self) -> bool {
        self.origin.aborted() || self.egress.as_ref().is_some_and(|e| e.aborted())
    }

    fn finished(&self) -> bool {
        let origin_done = self.origin.available() == self.size && self.origin.all_acked();
        let egress_done = self
            .egress
            .as_ref()
            .is_none_or(|e| e.available() == self.size && e.all_acked());
        origin_done && egress_done && self.dest.rcv_nxt() == self.size
    }
}

/// Everything a run reports.
#[derive(Clone, Debug)]
pub struct RunMetrics {
    pub mode: TrafficMode,
    pub snr_db: f64,
    pub seed: u64,
    pub data_rate_bps: u32,
    pub final_rate_bps: u32,
    pub sim_time_s: f64,
    /// Payload delivered across the link (saturation) or to destination
    /// applications (transport modes), per simulated second.
    pub goodput_bps: f64,
    /// Fraction of data frames received corrupted.
    pub packet_error_rate: f64,
    pub link: LinkStats,
    pub packets_dropped: u64,
    pub link_log: Vec<LinkLogRecord>,
    pub transfers: Vec<TransferResult>,
    pub events_dispatched: u64,
    /// Not part of any output file; runs must stay reproducible.
    pub wall_time_s: f64,
}

impl RunMetrics {
    pub fn successes(&self) -> usize {
        self.transfers.iter().filter(|t| t.outcome == Outcome::Success).count()
    }
}

pub struct Simulation {
    sc: ScenarioConfig,
    pep: PepConfig,
    sched: Scheduler<SimEvent>,
    link: HfLink,
    flows: Vec<Flow>,
    next_packet_id: u64,
    saturation_delivered: u64,
}

impl Simulation {
    pub fn new(sc: &ScenarioConfig, tables: &TableSet) -> Result<Self, ScenarioError> {
        sc.validate()?;
        if sc.mode == TrafficMode::Enhanced {
            return Err(ScenarioError::Unimplemented(
                "mode 'enhanced' is a reserved slot with no implementation".into(),
            ));
        }
        for rate in sc.required_rates() {
            if !tables.contains_key(&rate) {
                return Err(ScenarioError::Invalid(format!("no error table supplied for {rate} bps")));
            }
        }
        let channels = ChannelSet::new(tables, sc.master_seed);
        let link = HfLink::new(LINK, sc.link.clone(), sc.modem.clone(), channels);
        let mut pep = sc.pep.clone();
        pep.mode = if sc.mode == TrafficMode::Accelerate {
            PepMode::Accelerate
        } else {
            PepMode::Off
        };

        let mut sched = Scheduler::new();
        let mut flows = Vec::new();
        if sc.mode != TrafficMode::Saturation {
            for (i, t) in sc.traffic.iter().enumerate() {
                let i = i as u32;
                let start = SimTime::from_secs_f64(t.start_s);
                let terminated = pep.terminates();
                flows.push(Flow {
                    size: t.size_bytes,
                    start,
                    origin: TcpSender::new(sc.tcp.clone()),
                    dest: TcpReceiver::new(sc.tcp.receive_window_bytes),
                    audit: StreamAudit::new(i),
                    ingress: terminated.then(|| PepIngress::new(&pep)),
                    egress: terminated.then(|| TcpSender::new(sc.tcp.clone())),
                    timers: Default::default(),
                    completed_at: None,
                    failed: false,
                });
                sched.schedule(start, HOSTS, SimEvent::TransferStart(i));
                sched.schedule(
                    start + SimTime::from_secs_f64(t.deadline_s),
                    HOSTS,
                    SimEvent::Deadline(i),
                );
            }
        }

        let mut sim = Simulation {
            sc: sc.clone(),
            pep,
            sched,
            link,
            flows,
            next_packet_id: 0,
            saturation_delivered: 0,
        };
        if sc.mode == TrafficMode::Saturation {
            saturation_refill(
                &mut sim.link,
                sc.saturation.packet_bytes,
                &mut sim.next_packet_id,
                &mut sim.sched,
            );
        }
        Ok(sim)
    }

    pub fn enable_event_log(&mut self) {
        self.sched.enable_log();
    }

    pub fn event_log(&self) -> &[crate::kernel::LogEntry] {
        self.sched.log()
    }

    pub fn link(&self) -> &HfLink {
        &self.link
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    /// Bytes the near proxy has acknowledged to the origin that have not yet
    /// reached the far proxy. `None` when the flow is not proxied.
    pub fn proxy_backlog(&self, flow: usize) -> Option<u64> {
        let f = &self.flows[flow];
        let ingress = f.ingress.as_ref()?;
        Some(ingress.accepted() - f.egress.as_ref()?.available())
    }

    /// The most [`Self::proxy_backlog`] may ever reach: one advertised
    /// window, a full link queue of relay chunks, and one ARQ window held
    /// for reordering at the far node after the near node has retired it.
    pub fn proxy_backlog_bound(&self) -> u64 {
        let link = &self.sc.link;
        self.pep.advertised_window_bytes
            + link.queue_packets as u64 * self.pep.relay_payload_bytes as u64
            + link.window_frames * link.frame_payload_bytes
    }

    fn lan_delay(&self) -> SimTime {
        SimTime::from_secs_f64(self.sc.lan_delay_s)
    }

    fn packet(&mut self, len: u64, source: NodeId, destination: NodeId, body: PacketBody) -> IpPacketRecord {
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        IpPacketRecord {
            packet_id: id,
            length_bytes: len,
            arrival_time: self.sched.now(),
            source,
            destination,
            body,
        }
    }

    fn lan_send(&mut self, to: Hop, packet: IpPacketRecord) {
        let at = self.sched.now() + self.lan_delay();
        self.sched.schedule(at, LAN, SimEvent::Lan { to, packet });
    }

    fn submit(&mut self, packet: IpPacketRecord) {
        // A full queue drops the packet; the link counts it.
        let _ = self.link.submit(packet, &mut self.sched);
    }

    /// Runs to the configured duration, or until every transfer has been
    /// decided when there is no saturation traffic.
    pub fn run(mut self) -> RunMetrics {
        let wall = std::time::Instant::now();
        let end = SimTime::from_secs_f64(self.sc.duration_s);
        let mut stopped_early = false;
        while let Some(ev) = self.sched.pop_until(end) {
            self.dispatch(ev.payload);
            if self.sc.mode != TrafficMode::Saturation && self.flows.iter().all(Flow::resolved) {
                stopped_early = true;
                break;
            }
        }
        if !stopped_early {
            self.sched.advance_to(end);
        }
        self.finish(wall.elapsed().as_secs_f64())
    }

    fn finish(self, wall_time_s: f64) -> RunMetrics {
        let sim_time_s = self.sched.now().as_secs_f64();
        let transfers: Vec<TransferResult> = self
            .flows
            .iter()
            .map(|f| {
                let retx = f.origin.stats().bytes_retransmitted
                    + f.egress.as_ref().map_or(0, |e| e.stats().bytes_retransmitted);
                TransferResult {
                    size_bytes: f.size,
                    outcome: if f.completed_at.is_some() {
                        Outcome::Success
                    } else {
                        Outcome::Failed
                    },
                    completion_s: f.completed_at.map(|t| (t - f.start).as_secs_f64()),
                    bytes_retransmitted: retx,
                    delivered_bytes: f.dest.rcv_nxt(),
                    aborted: f.aborted(),
                    stream_intact: f.audit.verify(f.dest.rcv_nxt()),
                }
            })
            .collect();
        let delivered = match self.sc.mode {
            TrafficMode::Saturation => self.saturation_delivered,
            _ => transfers.iter().map(|t| t.delivered_bytes).sum(),
        };
        let stats = *self.link.stats();
        RunMetrics {
            mode: self.sc.mode,
            snr_db: self.sc.channel.snr_db,
            seed: self.sc.master_seed,
            data_rate_bps: self.sc.modem.data_rate_bps,
            final_rate_bps: self.link.rate_bps(),
            sim_time_s,
            goodput_bps: if sim_time_s > 0.0 {
                8.0 * delivered as f64 / sim_time_s
            } else {
                0.0
            },
            packet_error_rate: stats.frame_error_rate(),
            link: stats,
            packets_dropped: self.link.subnet_stats(NodeId::A).dropped_packets
                + self.link.subnet_stats(NodeId::B).dropped_packets,
            link_log: self.link.log().to_vec(),
            transfers,
            events_dispatched: self.sched.dispatched(),
            wall_time_s,
        }
    }

    /// Steps the simulation event by event; for tests that need to watch
    /// invariants as the run progresses.
    pub fn step(&mut self, until: SimTime) -> bool {
        match self.sched.pop_until(until) {
            Some(ev) => {
                self.dispatch(ev.payload);
                true
            }
            None => false,
        }
    }

    pub fn into_metrics(self) -> RunMetrics {
        self.finish(0.0)
    }

    fn dispatch(&mut self, ev: SimEvent) {
        match ev {
            SimEvent::Link(le) => {
                let outputs = self.link.handle(le, &mut self.sched);
                for o in outputs {
                    self.on_link_output(o);
                }
            }
            SimEvent::Lan { to, packet } => self.on_lan(to, packet),
            SimEvent::TransferStart(f) => {
                let fl = &mut self.flows[f as usize];
                fl.origin.extend_to(fl.size);
                self.pump(f, 0);
            }
            SimEvent::Deadline(f) => {
                let fl = &mut self.flows[f as usize];
                if fl.completed_at.is_none() {
                    fl.failed = true;
                }
            }
            SimEvent::RtxTimer { flow, conn, generation } => {
                let now = self.sched.now();
                let fl = &mut self.flows[flow as usize];
                if fl.timers[conn as usize].generation != generation {
                    return;
                }
                fl.timers[conn as usize].armed_for = None;
                if fl.sender(conn).on_timeout(now) {
                    self.pump(flow, conn);
                } else {
                    if fl.completed_at.is_none() {
                        fl.failed = true;
                    }
                    self.sync_timer(flow, conn);
                }
            }
            SimEvent::AckTick(f) => {
                let ack = self.flows[f as usize].ingress.as_mut().expect("proxy flow").on_ack_tick();
                if let Some((ack, wnd)) = ack {
                    let body = PacketBody::TcpAck {
                        flow: f,
                        conn: 0,
                        ack,
                        wnd,
                    };
                    let p = self.packet(self.sc.tcp.header_bytes as u64, NodeId::A, NodeId::A, body);
                    self.lan_send(Hop::Origin, p);
                }
            }
        }
    }

    /// Lets a sender emit what its windows allow and re-arms its timer.
    fn pump(&mut self, flow: u32, conn: u8) {
        let now = self.sched.now();
        let segs = self.flows[flow as usize].sender(conn).send_step(now);
        for s in segs {
            let body = PacketBody::TcpData {
                flow,
                conn,
                seq: s.seq,
                len: s.len,
            };
            let len = s.len as u64 + self.sc.tcp.header_bytes as u64;
            if conn == 0 {
                let p = self.packet(len, NodeId::A, NodeId::B, body);
                self.lan_send(Hop::GatewayA, p);
            } else {
                let p = self.packet(len, NodeId::B, NodeId::B, body);
                self.lan_send(Hop::Destination, p);
            }
        }
        self.sync_timer(flow, conn);
    }

    fn sync_timer(&mut self, flow: u32, conn: u8) {
        let fl = &mut self.flows[flow as usize];
        let want = fl.sender(conn).timer();
        let slot = &mut fl.timers[conn as usize];
        if slot.armed_for == want {
            return;
        }
        slot.armed_for = want;
        slot.generation += 1;
        if let Some(at) = want {
            let generation = slot.generation;
            self.sched.schedule(at, HOSTS, SimEvent::RtxTimer { flow, conn, generation });
        }
    }

    fn check_done(&mut self, flow: u32) {
        let now = self.sched.now();
        let fl = &mut self.flows[flow as usize];
        if fl.resolved() {
            return;
        }
        if fl.finished() {
            fl.completed_at = Some(now);
        } else if fl.aborted() {
            fl.failed = true;
        }
    }

    fn schedule_ack_tick(&mut self, flow: u32) {
        let at = self.sched.now() + SimTime::from_secs_f64(self.pep.ack_aggregation_interval_s);
        self.sched.schedule(at, HOSTS, SimEvent::AckTick(flow));
    }

    /// Moves buffered proxy bytes onto the link while it has room.
    fn relay(&mut self) {
        for f in 0..self.flows.len() as u32 {
            loop {
                if !self.link.has_space(NodeId::A) {
                    return;
                }
                let Some(ingress) = self.flows[f as usize].ingress.as_ref() else {
                    break;
                };
                let Some((offset, len)) = ingress.next_relay_chunk(self.pep.relay_payload_bytes) else {
                    break;
                };
                let body = PacketBody::Relay { flow: f, offset, len };
                let p = self.packet(len as u64 + self.sc.tcp.header_bytes as u64, NodeId::A, NodeId::B, body);
                self.link.submit(p, &mut self.sched).expect("space was checked");
                let tick = self.flows[f as usize].ingress.as_mut().unwrap().chunk_relayed(len);
                if tick {
                    self.schedule_ack_tick(f);
                }
            }
        }
    }

    fn on_lan(&mut self, to: Hop, packet: IpPacketRecord) {
        let now = self.sched.now();
        match (to, packet.body) {
            (Hop::GatewayA, PacketBody::TcpData { flow, seq, len, .. }) => match pep_intercept(&packet, &self.pep) {
                Intercept::TerminateLocally => {
                    let tick = self.flows[flow as usize].ingress.as_mut().unwrap().on_data(seq, len);
                    if tick {
                        self.schedule_ack_tick(flow);
                    }
                    self.relay();
                }
                Intercept::Forward => self.submit(packet),
            },
            (Hop::GatewayB, PacketBody::TcpAck { flow, conn, ack, wnd }) => {
                if conn == 0 {
                    let p = IpPacketRecord {
                        source: NodeId::B,
                        destination: NodeId::A,
                        ..packet
                    };
                    self.submit(p);
                } else {
                    self.flows[flow as usize].sender(1).on_ack(ack, wnd, now);
                    self.pump(flow, 1);
                    self.check_done(flow);
                }
            }
            (Hop::Destination, PacketBody::TcpData { flow, conn, seq, len }) => {
                let fl = &mut self.flows[flow as usize];
                for (off, l) in fl.dest.on_segment(seq, len) {
                    fl.audit.feed(off, l);
                }
                let body = PacketBody::TcpAck {
                    flow,
                    conn,
                    ack: fl.dest.rcv_nxt(),
                    wnd: self.sc.tcp.receive_window_bytes,
                };
                let p = self.packet(self.sc.tcp.header_bytes as u64, NodeId::B, NodeId::A, body);
                self.lan_send(Hop::GatewayB, p);
                self.check_done(flow);
            }
            (Hop::Origin, PacketBody::TcpAck { flow, ack, wnd, .. }) => {
                self.flows[flow as usize].origin.on_ack(ack, wnd, now);
                self.pump(flow, 0);
                self.check_done(flow);
            }
            (to, body) => unreachable!("no route for {body:?} towards {to:?}"),
        }
    }

    fn on_link_output(&mut self, out: LinkOutput) {
        match out {
            LinkOutput::Delivered { node: NodeId::B, packet } => match packet.body {
                PacketBody::Opaque => self.saturation_delivered += packet.length_bytes,
                PacketBody::TcpData { .. } => self.lan_send(Hop::Destination, packet),
                PacketBody::Relay { flow, offset, len } => {
                    let egress = self.flows[flow as usize].sender(1);
                    assert_eq!(offset, egress.available(), "relay chunks arrive in stream order");
                    egress.extend_to(offset + len as u64);
                    self.pump(flow, 1);
                }
                PacketBody::TcpAck { .. } => unreachable!("acks travel B to A"),
            },
            LinkOutput::Delivered { node: NodeId::A, packet } => match packet.body {
                PacketBody::TcpAck { .. } => self.lan_send(Hop::Origin, packet),
                other => unreachable!("unexpected {other:?} delivered at A"),
            },
            LinkOutput::Retired { node: NodeId::A, .. } => match self.sc.mode {
                TrafficMode::Saturation => {
                    saturation_refill(
                        &mut self.link,
                        self.sc.saturation.packet_bytes,
                        &mut self.next_packet_id,
                        &mut self.sched,
                    );
                }
                TrafficMode::Accelerate => self.relay(),
                _ => {}
            },
            LinkOutput::Retired { node: NodeId::B, .. } => {}
        }
    }
}
