//! Drives a bare link with random two-way traffic over a random bursty
//! channel and audits delivery against a ledger of accepted packets.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use hfsim::errormodel::{analyze_trace, burst_synthesize, BurstSynthParams, ErrorStatTable};
use hfsim::kernel::{EndpointId, RngStream, Scheduler, SimTime};
use hfsim::modem::ModemParams;
use hfsim::s5066::{ChannelSet, HfLink, IpPacketRecord, LinkConfig, LinkEvent, LinkOutput, NodeId, PacketBody};

use super::key;

#[derive(Clone, Debug)]
pub struct ArqCase {
    pub seed: u64,
    pub rate: u32,
    pub params: BurstSynthParams,
    /// Packet lengths offered by node A and node B, in order.
    pub offered: [Vec<u64>; 2],
    pub horizon_s: f64,
}

impl ArqCase {
    /// Mean BER up to `max_ber`, bursts of 50 to 20000 bits, up to 150
    /// packets each way of 1 to 3000 bytes.
    pub fn random(seed: u64, max_ber: f64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ber_bad: f64 = rng.random_range(0.01..0.5);
        let frac_bad = rng.random_range(0.0..(max_ber / ber_bad).min(0.5));
        let burst_bits: f64 = rng.random_range(50.0..20_000.0);
        let p_b2g = 1.0 / burst_bits;
        let params = BurstSynthParams {
            p_g2b: p_b2g * frac_bad / (1.0 - frac_bad),
            p_b2g,
            ber_bad,
            ber_good: 0.0,
        };
        let rates = [600, 1200, 2400, 4800, 9600];
        let rate = rates[rng.random_range(0..rates.len())];
        let n_a = rng.random_range(1..=150);
        let n_b = rng.random_range(0..40);
        let mut sizes = |n: usize| (0..n).map(|_| rng.random_range(1..=3000u64)).collect::<Vec<_>>();
        let offered = [sizes(n_a), sizes(n_b)];
        ArqCase {
            seed,
            rate,
            params,
            offered,
            horizon_s: 12.0 * 3600.0,
        }
    }

    pub fn mean_ber(&self) -> f64 {
        self.params.stationary_ber()
    }
}

#[derive(Debug, Default)]
pub struct ArqReport {
    pub accepted: [Vec<(u64, u64)>; 2],
    pub delivered: [Vec<(u64, u64)>; 2],
    pub dropped: [u64; 2],
    pub transmissions: u64,
    pub frames_corrupted: u64,
    pub acks_corrupted: u64,
    pub end: SimTime,
}

impl ArqReport {
    pub fn all_delivered(&self) -> bool {
        (0..2).all(|i| self.delivered[i].len() == self.accepted[i].len())
    }
}

/// Violations are returned as messages so callers can report them however
/// they like.
pub fn run_case(case: &ArqCase) -> Result<ArqReport, String> {
    let modem = ModemParams {
        data_rate_bps: case.rate,
        ..ModemParams::default()
    };
    let cfg = LinkConfig {
        queue_packets: 16,
        ..LinkConfig::default()
    };
    let k = key(10.0, 1.0, 2.0, case.rate);
    let trace = burst_synthesize(&case.params, 400_000, &mut RngStream::new(case.seed, "arq-trace")).unwrap();
    let table = Arc::new(analyze_trace(&trace, 128, k).unwrap());
    let mut tables = BTreeMap::<u32, Arc<ErrorStatTable>>::new();
    tables.insert(case.rate, table);

    let mut link = HfLink::new(EndpointId(0), cfg, modem.clone(), ChannelSet::new(&tables, case.seed));
    let mut sched: Scheduler<LinkEvent> = Scheduler::new();
    let mut report = ArqReport::default();
    let mut next = [0usize; 2];
    let mut next_id = 0u64;
    let nodes = [NodeId::A, NodeId::B];

    let offer = |link: &mut HfLink,
                     sched: &mut Scheduler<LinkEvent>,
                     next: &mut [usize; 2],
                     next_id: &mut u64,
                     report: &mut ArqReport,
                     burst: bool| {
        for (i, &node) in nodes.iter().enumerate() {
            while next[i] < case.offered[i].len() && (burst || link.has_space(node)) {
                let len = case.offered[i][next[i]];
                let p = IpPacketRecord {
                    packet_id: *next_id,
                    length_bytes: len,
                    arrival_time: sched.now(),
                    source: node,
                    destination: node.other(),
                    body: PacketBody::Opaque,
                };
                match link.submit(p, sched) {
                    Ok(()) => report.accepted[i].push((*next_id, len)),
                    Err(_) => report.dropped[i] += len,
                }
                *next_id += 1;
                next[i] += 1;
                if burst && next[i] >= 24 {
                    break;
                }
            }
        }
    };

    // An initial burst larger than the queue exercises overflow drops.
    offer(&mut link, &mut sched, &mut next, &mut next_id, &mut report, true);

    let horizon = SimTime::from_secs_f64(case.horizon_s);
    let mut on_air: Option<(NodeId, SimTime)> = None;
    let mut last_end: Option<SimTime> = None;
    let mut log_len = 0;
    while let Some(ev) = sched.pop_until(horizon) {
        let now = ev.fire_at;
        let outputs = link.handle(ev.payload, &mut sched);

        match ev.payload {
            LinkEvent::TransmissionEnd { from } => {
                match on_air.take() {
                    Some((node, _)) if node == from => {}
                    other => return Err(format!("end from {from:?} while on air: {other:?}")),
                }
                last_end = Some(now);
            }
            LinkEvent::TokenArrive(node) => {
                if link.log().len() > log_len {
                    log_len = link.log().len();
                    if let Some(busy) = on_air {
                        return Err(format!("{node:?} keyed up at {now:?} over {busy:?}"));
                    }
                    if let Some(end) = last_end {
                        if now < end + modem.turnaround() {
                            return Err(format!("no turnaround between {end:?} and {now:?}"));
                        }
                    }
                    on_air = Some((node, now));
                }
            }
        }

        for o in outputs {
            if let LinkOutput::Delivered { node, packet } = o {
                let src = node.other().index();
                let got = (packet.packet_id, packet.length_bytes);
                let k = report.delivered[src].len();
                if report.accepted[src].get(k) != Some(&got) {
                    return Err(format!(
                        "delivery {k} from {:?} was {got:?}, expected {:?}",
                        node.other(),
                        report.accepted[src].get(k)
                    ));
                }
                report.delivered[src].push(got);
            }
        }
        for node in nodes {
            if !link.conservation_holds(node) {
                return Err(format!("byte conservation broken for {node:?} at {now:?}"));
            }
        }
        offer(&mut link, &mut sched, &mut next, &mut next_id, &mut report, false);
        report.end = now;
        if report.all_delivered() && next.iter().zip(&case.offered).all(|(&n, o)| n == o.len()) && on_air.is_none() {
            break;
        }
    }

    let stats = link.stats();
    report.transmissions = stats.transmissions;
    report.frames_corrupted = stats.frames_corrupted;
    report.acks_corrupted = stats.acks_corrupted;

    let delivered_bytes: u64 = report.delivered.iter().flatten().map(|&(_, l)| l).sum();
    if delivered_bytes != stats.delivered_bytes {
        return Err(format!("link reports {} delivered bytes, audit {delivered_bytes}", stats.delivered_bytes));
    }
    if stats.received_bytes < stats.delivered_bytes {
        return Err(format!("{} bytes released but only {} received", stats.delivered_bytes, stats.received_bytes));
    }
    if report.all_delivered() && stats.received_bytes != stats.delivered_bytes {
        return Err(format!("{} bytes received but {} released", stats.received_bytes, stats.delivered_bytes));
    }
    for i in 0..2 {
        let s = link.subnet_stats(nodes[i]);
        let accepted: u64 = report.accepted[i].iter().map(|&(_, l)| l).sum();
        if s.dropped_bytes != report.dropped[i] || s.submitted_bytes != accepted + report.dropped[i] {
            return Err(format!("{:?}: subnet stats {s:?} disagree with the ledger", nodes[i]));
        }
    }
    let t = report.end.as_secs_f64();
    if t > 0.0 {
        let ceiling = case.rate as f64 * 250.0 / 300.0;
        let goodput = 8.0 * delivered_bytes as f64 / t;
        if goodput > ceiling {
            return Err(format!("goodput {goodput:.1} above ceiling {ceiling:.1}"));
        }
    }
    Ok(report)
}
