//! Narrowband (telephone) vs wideband recording classification.
//!
//! Telephone audio that was upsampled to 16 kHz carries essentially nothing above
//! 4 kHz; the peak STFT magnitude there separates the two populations.

use std::fmt;

use crate::dsp::{stft_magnitude, AudioBuffer};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.07;
pub const DEFAULT_HORIZON_S: f64 = 100.0;
const SPLIT_HZ: f64 = 4000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    /// Conversational telephone speech (narrowband).
    Cts,
    Ncts,
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Cts => "CTS",
            Band::Ncts => "NCTS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthClass {
    pub band: Band,
    pub peak_above_4k: f64,
}

pub fn classify_bandwidth(buf: &AudioBuffer) -> Result<BandwidthClass> {
    classify_bandwidth_with(buf, DEFAULT_THRESHOLD, DEFAULT_HORIZON_S)
}

/// NCTS iff the largest STFT magnitude in bins strictly above 4 kHz, over the first
/// `horizon_s` seconds, exceeds `threshold`.
pub fn classify_bandwidth_with(
    buf: &AudioBuffer,
    threshold: f64,
    horizon_s: f64,
) -> Result<BandwidthClass> {
    if buf.sample_rate() != 16000 {
        return Err(Error::Precondition(format!(
            "bandwidth classification needs 16000 Hz audio, got {}",
            buf.sample_rate()
        )));
    }
    let spec = stft_magnitude(&buf.head_s(horizon_s))?;
    let first_bin = (0..spec.bins)
        .find(|&k| k as f64 * spec.bin_hz > SPLIT_HZ)
        .unwrap_or(spec.bins);
    let peak = (0..spec.frames)
        .flat_map(|t| spec.frame(t)[first_bin..].iter().copied())
        .fold(0.0, f64::max);
    Ok(BandwidthClass {
        band: if peak > threshold { Band::Ncts } else { Band::Cts },
        peak_above_4k: peak,
    })
}
