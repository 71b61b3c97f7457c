//! End hosts and the proxy: a miniature TCP, the performance-enhancing
//! proxy pair, and the saturation traffic source.

mod audit;
mod pep;
mod tcp;

use serde::{Deserialize, Serialize};

use crate::kernel::{Scheduler, SimTime};
use crate::s5066::{HfLink, IpPacketRecord, LinkEvent, NodeId, PacketBody, PacketId};

pub use audit::{stream_byte, StreamAudit};
pub use pep::{pep_intercept, Intercept, PepConfig, PepIngress, PepMode};
pub use tcp::{Segment, TcpConfig, TcpReceiver, TcpSender, TcpSenderStats};

/// How traffic reaches the link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficMode {
    /// End-to-end TCP routed straight over the link.
    Plain,
    /// No transport: the link queue is kept full.
    Saturation,
    /// TCP terminated by a proxy on each side of the link.
    Accelerate,
    /// Reserved for a proprietary acceleration strategy; not implemented.
    Enhanced,
}

impl TrafficMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrafficMode::Plain => "plain",
            TrafficMode::Saturation => "saturation",
            TrafficMode::Accelerate => "accelerate",
            TrafficMode::Enhanced => "enhanced",
        }
    }
}

impl std::str::FromStr for TrafficMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(TrafficMode::Plain),
            "saturation" => Ok(TrafficMode::Saturation),
            "accelerate" => Ok(TrafficMode::Accelerate),
            "enhanced" => Ok(TrafficMode::Enhanced),
            other => Err(format!(
                "unknown mode '{other}' (expected plain|saturation|accelerate|enhanced)"
            )),
        }
    }
}

/// One fixed-size transfer from the host behind node A to the host behind
/// node B.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSpec {
    pub size_bytes: u64,
    #[serde(default)]
    pub start_s: f64,
    pub deadline_s: f64,
}

impl TransferSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.size_bytes < 1 {
            return Err("transfer size_bytes must be at least 1".into());
        }
        if !(self.deadline_s > 0.0 && self.deadline_s.is_finite()) {
            return Err("transfer deadline_s must be positive".into());
        }
        if !(self.start_s >= 0.0 && self.start_s.is_finite()) {
            return Err("transfer start_s must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failed,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "SUCCESS",
            Outcome::Failed => "FAILED",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferResult {
    pub size_bytes: u64,
    pub outcome: Outcome,
    /// Seconds from transfer start to completion, when it completed.
    pub completion_s: Option<f64>,
    pub bytes_retransmitted: u64,
    pub delivered_bytes: u64,
    pub aborted: bool,
    /// Delivered bytes matched the sent stream exactly, in order.
    pub stream_intact: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationConfig {
    pub packet_bytes: u64,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        SaturationConfig { packet_bytes: 1500 }
    }
}

/// Tops node A's link queue up with filler packets. Returns how many were
/// added.
pub fn saturation_refill<M: From<LinkEvent>>(
    link: &mut HfLink,
    packet_bytes: u64,
    next_id: &mut PacketId,
    sched: &mut Scheduler<M>,
) -> u32 {
    let mut added = 0;
    while link.has_space(NodeId::A) {
        let packet = IpPacketRecord {
            packet_id: *next_id,
            length_bytes: packet_bytes,
            arrival_time: sched.now(),
            source: NodeId::A,
            destination: NodeId::B,
            body: PacketBody::Opaque,
        };
        *next_id += 1;
        link.submit(packet, sched).expect("space was checked");
        added += 1;
    }
    added
}

/// Runs a single transfer in a fresh simulation built from `scenario`.
pub fn run_transfer(
    spec: TransferSpec,
    mode: TrafficMode,
    scenario: &crate::scenario::ScenarioConfig,
    tables: &crate::scenario::TableSet,
) -> Result<(TransferResult, SimTime), crate::scenario::ScenarioError> {
    let mut sc = scenario.clone();
    sc.mode = mode;
    sc.traffic = vec![spec];
    let metrics = crate::sim::Simulation::new(&sc, tables)?.run();
    Ok((metrics.transfers[0].clone(), SimTime::from_secs_f64(metrics.sim_time_s)))
}
