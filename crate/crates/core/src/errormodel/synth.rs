use serde::{Deserialize, Serialize};

use super::{BitErrorTrace, ChannelCondition, ErrorModelError, Interleaver};
use crate::kernel::RngStream;

/// Two-state (good/bad) burst-error chain parameters. All probabilities
/// are per bit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstSynthParams {
    pub p_g2b: f64,
    pub p_b2g: f64,
    pub ber_bad: f64,
    pub ber_good: f64,
}

impl BurstSynthParams {
    pub fn validate(&self) -> Result<(), ErrorModelError> {
        for (name, v) in [
            ("p_g2b", self.p_g2b),
            ("p_b2g", self.p_b2g),
            ("ber_bad", self.ber_bad),
            ("ber_good", self.ber_good),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ErrorModelError::InvalidParams(format!("{name}={v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Long-run fraction of bits spent in the bad state.
    pub fn stationary_bad(&self) -> f64 {
        let s = self.p_g2b + self.p_b2g;
        if s == 0.0 {
            0.0
        } else {
            self.p_g2b / s
        }
    }

    pub fn stationary_ber(&self) -> f64 {
        let pb = self.stationary_bad();
        pb * self.ber_bad + (1.0 - pb) * self.ber_good
    }

    /// Stand-in burst statistics for a modem at `rate_bps` on a channel in
    /// `condition`, used in place of offline waveform-level modem traces.
    ///
    /// The fraction of time spent in a fade follows a logistic curve in the
    /// SNR margin over a rate-dependent requirement (3 dB per rate doubling,
    /// penalised by Doppler and multipath spread). Fades last on the order
    /// of the channel coherence time. The long interleaver buys 2 dB of
    /// margin at the cost of 50% longer bursts.
    pub fn stand_in(condition: &ChannelCondition, rate_bps: u32, interleaver: Interleaver) -> Self {
        let mut required = -4.0 + 3.0 * (rate_bps as f64 / 75.0).log2();
        required += 1.5 * condition.doppler_hz + 0.5 * condition.multipath_ms;
        let mut fade_s = (0.4 / condition.doppler_hz.max(0.05)).min(8.0);
        if interleaver == Interleaver::Long {
            required -= 2.0;
            fade_s *= 1.5;
        }
        let margin_db = condition.snr_db - required;
        let frac_bad = 1.0 / (1.0 + 10f64.powf(margin_db / 2.0));
        let fade_bits = (fade_s * rate_bps as f64).max(2.0);
        let p_b2g = 1.0 / fade_bits;
        let p_g2b = (p_b2g * frac_bad / (1.0 - frac_bad)).min(1.0);
        BurstSynthParams {
            p_g2b,
            p_b2g,
            ber_bad: 0.15,
            ber_good: 0.0,
        }
    }
}

/// Runs the two-state chain bit by bit, starting in the good state. Each
/// bit first draws an error from the current state's BER, then draws the
/// state transition.
pub fn burst_synthesize(
    params: &BurstSynthParams,
    n_bits: u64,
    rng: &mut RngStream,
) -> Result<BitErrorTrace, ErrorModelError> {
    params.validate()?;
    if n_bits == 0 {
        return Err(ErrorModelError::EmptyTrace);
    }
    let mut bad = false;
    let mut errors = Vec::new();
    for bit in 0..n_bits {
        let ber = if bad { params.ber_bad } else { params.ber_good };
        if ber > 0.0 && rng.uniform() < ber {
            errors.push(bit);
        }
        let p_switch = if bad { params.p_b2g } else { params.p_g2b };
        if p_switch > 0.0 && rng.uniform() < p_switch {
            bad = !bad;
        }
    }
    BitErrorTrace::new(n_bits, errors)
}
