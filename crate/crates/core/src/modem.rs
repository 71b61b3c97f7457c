//! Modem timing and frame-corruption verdicts.
//!
//! A transmission costs a fixed preamble and interleaver flush plus the
//! over-the-air bits at the data rate. Durations are computed exactly in
//! integer arithmetic and rounded to the nearest microsecond (half up).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::errormodel::{Erracle, Interleaver};
use crate::kernel::SimTime;
use crate::s5066::{AckReport, DPduDescriptor};

/// Narrowband data rates, lowest first.
pub const REFERENCE_RATES: [u32; 11] = [75, 150, 300, 600, 1200, 2400, 3200, 4800, 6400, 8000, 9600];

#[derive(Debug, Error, PartialEq)]
pub enum ModemError {
    #[error("data rate {0} bps is not in the supported rate set")]
    UnsupportedRate(u32),
    #[error("invalid modem parameter: {0}")]
    Invalid(String),
}

fn default_rates() -> Vec<u32> {
    REFERENCE_RATES.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModemParams {
    pub data_rate_bps: u32,
    pub interleaver: Interleaver,
    pub t_preamble_s: f64,
    pub t_flush_s: f64,
    pub t_turnaround_s: f64,
    /// Rate ladder, ascending. Extend it to model other waveforms.
    #[serde(default = "default_rates")]
    pub supported_rates: Vec<u32>,
}

impl Default for ModemParams {
    /// Timing fitted against the narrowband calibration table; see
    /// `hfsim calibrate`.
    fn default() -> Self {
        ModemParams {
            data_rate_bps: 2400,
            interleaver: Interleaver::Short,
            t_preamble_s: crate::calibrate::FITTED_PREAMBLE_S,
            t_flush_s: crate::calibrate::FITTED_FLUSH_S,
            t_turnaround_s: crate::calibrate::FITTED_TURNAROUND_S,
            supported_rates: default_rates(),
        }
    }
}

impl ModemParams {
    pub fn with_rate(&self, rate: u32) -> Self {
        ModemParams {
            data_rate_bps: rate,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ModemError> {
        for (name, v) in [
            ("t_preamble_s", self.t_preamble_s),
            ("t_flush_s", self.t_flush_s),
            ("t_turnaround_s", self.t_turnaround_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ModemError::Invalid(format!("{name} must be a non-negative duration, got {v}")));
            }
        }
        if self.supported_rates.is_empty()
            || self.supported_rates.contains(&0)
            || self.supported_rates.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ModemError::Invalid(
                "supported_rates must be non-empty, positive and strictly ascending".into(),
            ));
        }
        self.check_rate()
    }

    fn check_rate(&self) -> Result<(), ModemError> {
        if self.supported_rates.contains(&self.data_rate_bps) {
            Ok(())
        } else {
            Err(ModemError::UnsupportedRate(self.data_rate_bps))
        }
    }

    pub fn fixed_overhead(&self) -> SimTime {
        SimTime::from_secs_f64(self.t_preamble_s + self.t_flush_s)
    }

    pub fn turnaround(&self) -> SimTime {
        SimTime::from_secs_f64(self.t_turnaround_s)
    }

    /// Air time of `bits` at the current rate, excluding fixed overhead.
    pub fn bits_time(&self, bits: u64) -> SimTime {
        let rate = self.data_rate_bps as u128;
        let us = (bits as u128 * 2_000_000 + rate) / (2 * rate);
        SimTime::from_micros(us as u64)
    }

    /// Duration of a whole transmission carrying `bits` over the air.
    pub fn burst_duration(&self, bits: u64) -> SimTime {
        self.fixed_overhead() + self.bits_time(bits)
    }

    /// Most over-the-air bits whose transmission fits within `t_max`.
    pub fn max_bits_within(&self, t_max: SimTime) -> u64 {
        let fixed = self.fixed_overhead();
        if t_max < fixed {
            return 0;
        }
        let avail_us = (t_max - fixed).as_micros() as u128;
        let mut n = (avail_us * self.data_rate_bps as u128 / 1_000_000) as u64;
        // Correct for microsecond rounding at the boundary.
        while self.burst_duration(n + 1) <= t_max {
            n += 1;
        }
        while n > 0 && self.burst_duration(n) > t_max {
            n -= 1;
        }
        n
    }
}

/// Time to send `payload_bytes + overhead_bytes` in one transmission.
pub fn tx_duration(payload_bytes: u64, overhead_bytes: u64, p: &ModemParams) -> Result<SimTime, ModemError> {
    p.check_rate()?;
    Ok(p.burst_duration(8 * (payload_bytes + overhead_bytes)))
}

/// Largest number of frames one transmission may carry within `t_max_s`.
pub fn capacity_frames(
    t_max_s: f64,
    frame_payload_bytes: u64,
    frame_overhead_bytes: u64,
    p: &ModemParams,
) -> Result<u64, ModemError> {
    p.check_rate()?;
    let frame_bits = 8 * (frame_payload_bytes + frame_overhead_bytes);
    if frame_bits == 0 {
        return Err(ModemError::Invalid("frames must carry at least one byte".into()));
    }
    let n = p.max_bits_within(SimTime::from_secs_f64(t_max_s)) / frame_bits;
    Ok(n)
}

/// One over-the-air transmission: an optional acknowledgement followed by
/// data frames. Offsets are in bits relative to the start of the
/// transmission; the acknowledgement, when present, occupies bit 0 onward.
#[derive(Clone, Debug)]
pub struct TransmissionPlan {
    pub ack: Option<AckReport>,
    pub ack_bits: u64,
    pub frames: Vec<DPduDescriptor>,
    pub bit_offset_of_frame: Vec<u64>,
    pub frame_bits: Vec<u64>,
    pub total_payload_bits: u64,
    pub total_overhead_bits: u64,
    pub duration: SimTime,
}

impl TransmissionPlan {
    pub fn new(
        ack: Option<AckReport>,
        frames: Vec<DPduDescriptor>,
        frame_overhead_bytes: u64,
        p: &ModemParams,
    ) -> Self {
        let ack_bits = ack.as_ref().map_or(0, |a| 8 * a.size_bytes);
        let mut offset = ack_bits;
        let mut bit_offset_of_frame = Vec::with_capacity(frames.len());
        let mut frame_bits = Vec::with_capacity(frames.len());
        let mut payload = 0;
        for f in &frames {
            let bits = 8 * (f.length_bytes + frame_overhead_bytes);
            bit_offset_of_frame.push(offset);
            frame_bits.push(bits);
            offset += bits;
            payload += 8 * f.length_bytes;
        }
        let total_overhead_bits = offset - payload;
        let duration = if offset == 0 { SimTime::ZERO } else { p.burst_duration(offset) };
        TransmissionPlan {
            ack,
            ack_bits,
            frames,
            bit_offset_of_frame,
            frame_bits,
            total_payload_bits: payload,
            total_overhead_bits,
            duration,
        }
    }

    pub fn total_bits(&self) -> u64 {
        self.total_payload_bits + self.total_overhead_bits
    }

    pub fn is_empty(&self) -> bool {
        self.ack.is_none() && self.frames.is_empty()
    }
}

/// Outcome of receiving one transmission.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub ack_corrupted: bool,
    pub frame_corrupted: Vec<bool>,
}

/// Judges every part of `plan` against the error stream. The plan starts
/// at the stream's current position and consumes exactly its own bits.
pub fn judge_transmission(plan: &TransmissionPlan, erracle: &mut Erracle) -> Verdict {
    let start = erracle.position();
    let ack_corrupted = plan.ack_bits > 0 && erracle.count_in_span(start, start + plan.ack_bits) > 0;
    let frame_corrupted = plan
        .bit_offset_of_frame
        .iter()
        .zip(&plan.frame_bits)
        .map(|(&off, &bits)| erracle.count_in_span(start + off, start + off + bits) > 0)
        .collect();
    // Consume the tail even for an empty plan so positions stay contiguous.
    let end = start + plan.total_bits();
    erracle.count_in_span(erracle.position().max(start), end);
    Verdict {
        ack_corrupted,
        frame_corrupted,
    }
}

/// Per-frame corruption flags; detection is assumed perfect.
pub fn judge_frames(plan: &TransmissionPlan, erracle: &mut Erracle) -> Vec<bool> {
    judge_transmission(plan, erracle).frame_corrupted
}
