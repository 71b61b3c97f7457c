//! Closed-form saturation goodput and the timing fit against the published
//! narrowband throughput table.
//!
//! In saturation one side always has a full window of data. Each cycle is
//! a data transmission of `n = min(window, capacity)` frames, a turnaround,
//! an acknowledgement-only transmission and another turnaround.

use crate::modem::{capacity_frames, ModemParams, REFERENCE_RATES};
use crate::s5066::ack_size_bytes;

/// Calculated error-free throughput in bps for [`REFERENCE_RATES`].
pub const REFERENCE_CALCULATED_BPS: [f64; 11] = [
    57.0, 113.0, 229.0, 456.0, 912.0, 1803.0, 2543.0, 3717.0, 4536.0, 5476.0, 6202.0,
];

/// Measured error-free throughput in bps for [`REFERENCE_RATES`].
pub const REFERENCE_MODEL_BPS: [f64; 11] = [
    52.0, 115.0, 228.0, 465.0, 890.0, 1760.0, 2597.0, 3812.0, 4711.0, 5641.0, 6380.0,
];

// Output of `hfsim calibrate` with the default search grid.
pub const FITTED_PREAMBLE_S: f64 = 0.5625;
pub const FITTED_FLUSH_S: f64 = 0.5625;
pub const FITTED_TURNAROUND_S: f64 = 2.75;
pub const FITTED_FRAME_OVERHEAD_BYTES: u64 = 50;

/// Fit acceptance bound on the worst relative residual.
pub const FIT_TOLERANCE: f64 = 0.05;

/// Link parameters that stay fixed during the fit.
#[derive(Clone, Copy, Debug)]
pub struct CycleShape {
    pub frame_payload_bytes: u64,
    pub window_frames: u64,
    pub max_tx_time_s: f64,
}

impl Default for CycleShape {
    fn default() -> Self {
        CycleShape {
            frame_payload_bytes: 250,
            window_frames: 128,
            max_tx_time_s: 120.0,
        }
    }
}

/// Timing under fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub t_preamble_s: f64,
    pub t_flush_s: f64,
    pub t_turnaround_s: f64,
    pub frame_overhead_bytes: u64,
}

impl Timing {
    pub fn fitted() -> Self {
        Timing {
            t_preamble_s: FITTED_PREAMBLE_S,
            t_flush_s: FITTED_FLUSH_S,
            t_turnaround_s: FITTED_TURNAROUND_S,
            frame_overhead_bytes: FITTED_FRAME_OVERHEAD_BYTES,
        }
    }

    pub fn modem(&self, rate: u32) -> ModemParams {
        ModemParams {
            data_rate_bps: rate,
            t_preamble_s: self.t_preamble_s,
            t_flush_s: self.t_flush_s,
            t_turnaround_s: self.t_turnaround_s,
            ..ModemParams::default()
        }
    }
}

/// Error-free saturation goodput in bps, from the same microsecond timing
/// the simulator uses.
pub fn cycle_goodput_bps(timing: &Timing, shape: &CycleShape, rate: u32) -> f64 {
    let p = timing.modem(rate);
    let cap = capacity_frames(
        shape.max_tx_time_s,
        shape.frame_payload_bytes,
        timing.frame_overhead_bytes,
        &p,
    )
    .expect("rate is on the ladder");
    let n = cap.min(shape.window_frames);
    if n == 0 {
        return 0.0;
    }
    let data = p.burst_duration(8 * n * (shape.frame_payload_bytes + timing.frame_overhead_bytes));
    let ack = p.burst_duration(8 * ack_size_bytes(shape.window_frames));
    let cycle = data + ack + p.turnaround() + p.turnaround();
    (8 * n * shape.frame_payload_bytes) as f64 / cycle.as_secs_f64()
}

#[derive(Clone, Debug)]
pub struct Residual {
    pub rate_bps: u32,
    pub target_bps: f64,
    pub fitted_bps: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub timing: Timing,
    pub residuals: Vec<Residual>,
}

impl FitReport {
    pub fn worst(&self) -> f64 {
        self.residuals.iter().map(|r| r.relative_error.abs()).fold(0.0, f64::max)
    }

    pub fn within_tolerance(&self) -> bool {
        self.worst() <= FIT_TOLERANCE
    }
}

pub fn residuals(timing: &Timing, shape: &CycleShape) -> Vec<Residual> {
    REFERENCE_RATES
        .iter()
        .zip(REFERENCE_CALCULATED_BPS)
        .map(|(&rate, target)| {
            let fitted = cycle_goodput_bps(timing, shape, rate);
            Residual {
                rate_bps: rate,
                target_bps: target,
                fitted_bps: fitted,
                relative_error: (fitted - target) / target,
            }
        })
        .collect()
}

fn worst_error(timing: &Timing, shape: &CycleShape) -> f64 {
    REFERENCE_RATES
        .iter()
        .zip(REFERENCE_CALCULATED_BPS)
        .map(|(&rate, target)| ((cycle_goodput_bps(timing, shape, rate) - target) / target).abs())
        .fold(0.0, f64::max)
}

/// Search ranges. Time steps are in seconds.
#[derive(Clone, Copy, Debug)]
pub struct FitGrid {
    pub max_preamble_s: f64,
    pub max_flush_s: f64,
    pub max_turnaround_s: f64,
    pub time_step_s: f64,
    pub max_overhead_bytes: u64,
    pub overhead_step: u64,
}

impl Default for FitGrid {
    fn default() -> Self {
        FitGrid {
            max_preamble_s: 2.0,
            max_flush_s: 2.0,
            max_turnaround_s: 4.0,
            time_step_s: 0.125,
            max_overhead_bytes: 80,
            overhead_step: 2,
        }
    }
}

fn steps(max: f64, step: f64) -> impl Iterator<Item = f64> + Clone {
    (0..=(max / step).round() as u32).map(move |i| i as f64 * step)
}

/// Minimises the worst relative residual over a full grid, then refines
/// each coordinate in turn on a finer step. Only the preamble and flush sum
/// affects goodput, so among equal sums the grid keeps the even split.
pub fn fit_timing(shape: &CycleShape, grid: &FitGrid) -> FitReport {
    let mut best = Timing {
        t_preamble_s: 0.0,
        t_flush_s: 0.0,
        t_turnaround_s: 0.0,
        frame_overhead_bytes: 0,
    };
    let mut best_err = f64::INFINITY;
    let max_fixed = grid.max_preamble_s + grid.max_flush_s;
    for fixed in steps(max_fixed, grid.time_step_s) {
        let pre = (fixed / 2.0).min(grid.max_preamble_s);
        let candidate_fixed = Timing {
            t_preamble_s: pre,
            t_flush_s: fixed - pre,
            ..best
        };
        if candidate_fixed.t_flush_s > grid.max_flush_s + 1e-9 {
            continue;
        }
        for tt in steps(grid.max_turnaround_s, grid.time_step_s) {
            for o in (0..=grid.max_overhead_bytes).step_by(grid.overhead_step as usize) {
                let t = Timing {
                    t_turnaround_s: tt,
                    frame_overhead_bytes: o,
                    ..candidate_fixed
                };
                let e = worst_error(&t, shape);
                if e < best_err {
                    best_err = e;
                    best = t;
                }
            }
        }
    }

    // Coordinate refinement at a quarter of the grid step.
    let fine = grid.time_step_s / 4.0;
    let mut improved = true;
    while improved {
        improved = false;
        for dim in 0..3 {
            for delta in [-1.0, 1.0] {
                let mut t = best;
                match dim {
                    0 => {
                        t.t_preamble_s += delta * fine / 2.0;
                        t.t_flush_s += delta * fine / 2.0;
                    }
                    1 => t.t_turnaround_s += delta * fine,
                    _ => {
                        let o = t.frame_overhead_bytes as i64 + delta as i64;
                        if o < 0 {
                            continue;
                        }
                        t.frame_overhead_bytes = o as u64;
                    }
                }
                if t.t_preamble_s < 0.0 || t.t_flush_s < 0.0 || t.t_turnaround_s < 0.0 {
                    continue;
                }
                let e = worst_error(&t, shape);
                if e + 1e-12 < best_err {
                    best_err = e;
                    best = t;
                    improved = true;
                }
            }
        }
    }

    FitReport {
        timing: best,
        residuals: residuals(&best, shape),
    }
}
