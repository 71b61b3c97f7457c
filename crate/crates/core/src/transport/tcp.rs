//! A miniature TCP: enough congestion control and retransmission-timer
//! behaviour to show how end hosts react to minutes-long round trips.
//! Connections are assumed established; there is no handshake, no fast
//! retransmit and no SACK.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::kernel::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcpConfig {
    pub mss_bytes: u32,
    pub header_bytes: u32,
    pub initial_cwnd_segments: u32,
    pub initial_rto_s: f64,
    pub rto_min_s: f64,
    pub rto_max_s: f64,
    pub max_retries: u32,
    /// Window advertised by ordinary receivers.
    pub receive_window_bytes: u64,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            mss_bytes: 1460,
            header_bytes: 40,
            initial_cwnd_segments: 2,
            initial_rto_s: 1.0,
            rto_min_s: 1.0,
            rto_max_s: 240.0,
            max_retries: 15,
            receive_window_bytes: 65535,
        }
    }
}

impl TcpConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.mss_bytes == 0 || self.initial_cwnd_segments == 0 {
            return Err("tcp.mss_bytes and tcp.initial_cwnd_segments must be positive".into());
        }
        if !(self.rto_min_s > 0.0 && self.rto_min_s <= self.rto_max_s && self.rto_max_s.is_finite()) {
            return Err("tcp rto bounds must satisfy 0 < rto_min_s <= rto_max_s".into());
        }
        if !(self.initial_rto_s >= self.rto_min_s && self.initial_rto_s <= self.rto_max_s) {
            return Err("tcp.initial_rto_s must lie within the rto bounds".into());
        }
        if self.receive_window_bytes < self.mss_bytes as u64 {
            return Err("tcp.receive_window_bytes must hold at least one segment".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub seq: u64,
    pub len: u32,
    pub retransmission: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TcpSenderStats {
    pub segments_sent: u64,
    pub bytes_sent: u64,
    pub bytes_retransmitted: u64,
    pub timeouts: u64,
    pub rtt_samples: u64,
}

#[derive(Clone, Debug)]
pub struct TcpSender {
    cfg: TcpConfig,
    /// Stream length handed over by the application so far.
    available: u64,
    snd_una: u64,
    snd_nxt: u64,
    snd_max: u64,
    cwnd: u64,
    ssthresh: u64,
    ca_acked: u64,
    srtt: Option<f64>,
    rttvar: f64,
    rto: f64,
    retries: u32,
    peer_wnd: u64,
    probe: Option<(u64, SimTime)>,
    timer: Option<SimTime>,
    aborted: bool,
    stats: TcpSenderStats,
}

impl TcpSender {
    pub fn new(cfg: TcpConfig) -> Self {
        TcpSender {
            available: 0,
            snd_una: 0,
            snd_nxt: 0,
            snd_max: 0,
            cwnd: cfg.initial_cwnd_segments as u64 * cfg.mss_bytes as u64,
            ssthresh: u64::MAX,
            ca_acked: 0,
            srtt: None,
            rttvar: 0.0,
            rto: cfg.initial_rto_s,
            retries: 0,
            peer_wnd: cfg.receive_window_bytes,
            probe: None,
            timer: None,
            aborted: false,
            stats: TcpSenderStats::default(),
            cfg,
        }
    }

    fn mss(&self) -> u64 {
        self.cfg.mss_bytes as u64
    }

    pub fn set_ssthresh(&mut self, bytes: u64) {
        self.ssthresh = bytes;
    }

    /// Makes the stream `len` bytes long.
    pub fn extend_to(&mut self, len: u64) {
        assert!(len >= self.available, "stream cannot shrink");
        self.available = len;
    }

    pub fn available(&self) -> u64 {
        self.available
    }

    pub fn snd_una(&self) -> u64 {
        self.snd_una
    }

    pub fn snd_nxt(&self) -> u64 {
        self.snd_nxt
    }

    pub fn cwnd(&self) -> u64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> u64 {
        self.ssthresh
    }

    pub fn rto_s(&self) -> f64 {
        self.rto
    }

    pub fn srtt_s(&self) -> Option<f64> {
        self.srtt
    }

    pub fn retries(&self) -> u32 {
        self.retries
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    pub fn stats(&self) -> &TcpSenderStats {
        &self.stats
    }

    /// When the retransmission timer expires, if running.
    pub fn timer(&self) -> Option<SimTime> {
        self.timer
    }

    /// Every byte handed over so far has been acknowledged.
    pub fn all_acked(&self) -> bool {
        self.snd_una == self.available
    }

    fn arm_timer(&mut self, now: SimTime) {
        self.timer = Some(now + SimTime::from_secs_f64(self.rto));
    }

    /// Emits as many segments as the congestion and peer windows allow.
    pub fn send_step(&mut self, now: SimTime) -> Vec<Segment> {
        let mut out = Vec::new();
        if self.aborted {
            return out;
        }
        let limit = self.snd_una + self.cwnd.min(self.peer_wnd);
        while self.snd_nxt < self.available {
            let len = self.mss().min(self.available - self.snd_nxt);
            if self.snd_nxt + len > limit {
                break;
            }
            let retransmission = self.snd_nxt < self.snd_max;
            out.push(Segment {
                seq: self.snd_nxt,
                len: len as u32,
                retransmission,
            });
            self.stats.segments_sent += 1;
            self.stats.bytes_sent += len;
            if retransmission {
                self.stats.bytes_retransmitted += len;
            } else if self.probe.is_none() {
                self.probe = Some((self.snd_nxt + len, now));
            }
            self.snd_nxt += len;
            self.snd_max = self.snd_max.max(self.snd_nxt);
            if self.timer.is_none() {
                self.arm_timer(now);
            }
        }
        out
    }

    fn update_rto(&mut self, sample: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2.0;
            }
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (srtt - sample).abs();
                self.srtt = Some(0.875 * srtt + 0.125 * sample);
            }
        }
        let rto = self.srtt.unwrap() + 4.0 * self.rttvar;
        self.rto = rto.clamp(self.cfg.rto_min_s, self.cfg.rto_max_s);
        self.stats.rtt_samples += 1;
    }

    pub fn on_ack(&mut self, ack: u64, wnd: u64, now: SimTime) {
        if self.aborted || ack < self.snd_una {
            return;
        }
        assert!(ack <= self.snd_max, "ack {ack} beyond anything sent ({})", self.snd_max);
        self.peer_wnd = wnd;
        if ack == self.snd_una {
            return;
        }
        let acked = ack - self.snd_una;
        self.snd_una = ack;
        self.snd_nxt = self.snd_nxt.max(ack);
        self.retries = 0;
        if let Some((end, sent)) = self.probe {
            if ack >= end {
                self.probe = None;
                self.update_rto((now - sent).as_secs_f64());
            }
        }
        if self.cwnd < self.ssthresh {
            self.cwnd += acked;
        } else {
            self.ca_acked += acked;
            while self.ca_acked >= self.cwnd {
                self.ca_acked -= self.cwnd;
                self.cwnd += self.mss();
            }
        }
        if self.snd_una < self.snd_max {
            self.arm_timer(now);
        } else {
            self.timer = None;
        }
    }

    /// The retransmission timer fired. Returns false once the connection
    /// has given up.
    pub fn on_timeout(&mut self, now: SimTime) -> bool {
        if self.aborted {
            return false;
        }
        self.stats.timeouts += 1;
        self.retries += 1;
        if self.retries > self.cfg.max_retries {
            self.aborted = true;
            self.timer = None;
            return false;
        }
        let flight = self.snd_max - self.snd_una;
        self.ssthresh = (flight / 2).max(2 * self.mss());
        self.cwnd = self.mss();
        self.ca_acked = 0;
        self.rto = (2.0 * self.rto).min(self.cfg.rto_max_s);
        self.snd_nxt = self.snd_una;
        // Karn: no sample from anything sent before the timeout.
        self.probe = None;
        self.arm_timer(now);
        true
    }
}

/// In-order reassembly at a receiving end host. Acknowledges every segment.
#[derive(Clone, Debug)]
pub struct TcpReceiver {
    window: u64,
    rcv_nxt: u64,
    out_of_order: BTreeMap<u64, u32>,
    duplicate_segments: u64,
}

impl TcpReceiver {
    pub fn new(window: u64) -> Self {
        TcpReceiver {
            window,
            rcv_nxt: 0,
            out_of_order: BTreeMap::new(),
            duplicate_segments: 0,
        }
    }

    pub fn rcv_nxt(&self) -> u64 {
        self.rcv_nxt
    }

    pub fn duplicate_segments(&self) -> u64 {
        self.duplicate_segments
    }

    /// Accepts a segment; returns the byte ranges that became deliverable
    /// in order. The acknowledgement to send is [`Self::rcv_nxt`].
    pub fn on_segment(&mut self, seq: u64, len: u32) -> Vec<(u64, u32)> {
        let end = seq + len as u64;
        if end <= self.rcv_nxt || self.out_of_order.contains_key(&seq) {
            self.duplicate_segments += 1;
            return Vec::new();
        }
        if end > self.rcv_nxt + self.window {
            return Vec::new();
        }
        self.out_of_order.insert(seq, len);
        let mut delivered = Vec::new();
        while let Some((&s, &l)) = self.out_of_order.first_key_value() {
            if s > self.rcv_nxt {
                break;
            }
            self.out_of_order.pop_first();
            let e = s + l as u64;
            if e > self.rcv_nxt {
                let from = self.rcv_nxt;
                delivered.push((from, (e - from) as u32));
                self.rcv_nxt = e;
            }
        }
        delivered
    }
}
