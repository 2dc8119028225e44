//! Audio ingestion and the log-Mel front-end.
//!
//! Everything here is a pure function of its inputs. Sample values live in
//! `[-1, 1]`; 16-bit PCM is scaled by `1/32768` on the way in.

mod resample;
mod spectral;
mod wav;

pub use resample::{resample_to_8k, ANTI_ALIAS_CUTOFF_HZ, ANTI_ALIAS_TAPS};
pub use spectral::{
    frame_count, hann_window, log_mel, log_mel_with, mean_normalize, mel_filterbank, stft_magnitude,
    stft_magnitude_with, FeatureMatrix, Spectrogram, StftParams, LOG_FLOOR,
};
pub use wav::{read_wav, read_wav_bytes, write_wav};

use crate::error::{Error, Result};

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Wraps samples, checking they are finite and within `[-1, 1]`.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Parameter("sample rate must be positive".into()));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::Input(format!(
                "sample {pos} = {} is outside [-1, 1]",
                samples[pos]
            )));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    /// Like [`AudioBuffer::new`] but clips out-of-range values instead of failing.
    pub fn clipped(mut samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        for s in samples.iter_mut() {
            if !s.is_finite() {
                return Err(Error::Numeric("audio sample".into()));
            }
            *s = s.clamp(-1.0, 1.0);
        }
        AudioBuffer::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Samples in `[start_s, end_s)`, clamped to the buffer.
    pub fn slice_s(&self, start_s: f64, end_s: f64) -> AudioBuffer {
        let sr = self.sample_rate as f64;
        let a = ((start_s * sr).round().max(0.0) as usize).min(self.len());
        let b = ((end_s * sr).round().max(0.0) as usize).clamp(a, self.len());
        AudioBuffer {
            samples: self.samples[a..b].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// First `secs` seconds (or everything, if shorter).
    pub fn head_s(&self, secs: f64) -> AudioBuffer {
        self.slice_s(0.0, secs)
    }

    pub fn scaled(&self, gain: f64) -> Result<AudioBuffer> {
        AudioBuffer::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }

    pub(crate) fn from_parts_unchecked(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioBuffer {
            samples,
            sample_rate,
        }
    }
}
