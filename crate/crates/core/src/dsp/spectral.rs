use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Natural-log floor applied to Mel energies.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftParams {
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub nfft: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        StftParams {
            frame_len_s: 0.025,
            hop_s: 0.010,
            nfft: 512,
        }
    }
}

impl StftParams {
    fn samples(&self, sample_rate: u32) -> Result<(usize, usize)> {
        let sr = sample_rate as f64;
        let len = (self.frame_len_s * sr).round() as usize;
        let hop = (self.hop_s * sr).round() as usize;
        if len == 0 || hop == 0 {
            return Err(Error::Parameter("frame length and hop must be positive".into()));
        }
        if len > self.nfft {
            return Err(Error::Parameter(format!(
                "frame of {len} samples does not fit nfft {}",
                self.nfft
            )));
        }
        Ok((len, hop))
    }
}

/// Number of full frames: `floor((n - len) / hop) + 1`, or 0 when `n < len`.
pub fn frame_count(n_samples: usize, frame_len: usize, hop: usize) -> usize {
    if n_samples < frame_len {
        0
    } else {
        (n_samples - frame_len) / hop + 1
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Magnitude spectrogram, `frames x (nfft/2 + 1)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub bin_hz: f64,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.magnitudes[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.magnitudes[t * self.bins + k]
    }
}

pub fn stft_magnitude(buf: &AudioBuffer) -> Result<Spectrogram> {
    stft_magnitude_with(buf, StftParams::default())
}

/// Hann-windowed STFT magnitudes, zero-padded to `nfft`, divided by the window sum
/// so that a full-scale sinusoid centred on a bin peaks near 0.5.
pub fn stft_magnitude_with(buf: &AudioBuffer, params: StftParams) -> Result<Spectrogram> {
    let (len, hop) = params.samples(buf.sample_rate())?;
    let frames = frame_count(buf.len(), len, hop);
    if frames == 0 {
        return Err(Error::EmptyInput(format!(
            "{} samples is shorter than one {len}-sample frame",
            buf.len()
        )));
    }
    let window = hann_window(len);
    let norm: f64 = window.iter().sum();
    let bins = params.nfft / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(params.nfft);
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut frame = vec![Complex::new(0.0, 0.0); params.nfft];
    let mut magnitudes = Vec::with_capacity(frames * bins);
    let x = buf.samples();
    for t in 0..frames {
        let start = t * hop;
        for (i, c) in frame.iter_mut().enumerate() {
            *c = if i < len {
                Complex::new(x[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process_with_scratch(&mut frame, &mut scratch);
        magnitudes.extend(frame[..bins].iter().map(|c| c.norm() / norm));
    }
    Ok(Spectrogram {
        magnitudes,
        frames,
        bins,
        bin_hz: buf.sample_rate() as f64 / params.nfft as f64,
    })
}

/// Log-Mel energies, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Vec<f64>,
    pub frames: usize,
    pub bins: usize,
    pub frame_shift_s: f64,
    pub frame_len_s: f64,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, frames: usize, bins: usize) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(Error::Shape(format!(
                "{} values for {frames}x{bins} features",
                data.len()
            )));
        }
        Ok(FeatureMatrix {
            data,
            frames,
            bins,
            frame_shift_s: 0.010,
            frame_len_s: 0.025,
        })
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, b: usize) -> f64 {
        self.data[t * self.bins + b]
    }

    /// Frames `start..end`.
    pub fn slice_frames(&self, start: usize, end: usize) -> FeatureMatrix {
        FeatureMatrix {
            data: self.data[start * self.bins..end * self.bins].to_vec(),
            frames: end - start,
            ..*self
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-scale filters spanning 0..Nyquist; `n_mels x n_bins`, row-major.
pub fn mel_filterbank(n_mels: usize, nfft: usize, sample_rate: u32) -> Result<Vec<f64>> {
    if n_mels < 1 || n_mels > nfft / 2 {
        return Err(Error::Parameter(format!(
            "n_mels = {n_mels} must be in 1..={}",
            nfft / 2
        )));
    }
    let n_bins = nfft / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / nfft as f64;
    let mut fb = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[m * n_bins + k] = w;
        }
    }
    Ok(fb)
}

pub fn log_mel(buf: &AudioBuffer, n_mels: usize) -> Result<FeatureMatrix> {
    log_mel_with(buf, n_mels, StftParams::default())
}

/// `ln(max(E, 1e-10))` of Mel-filtered power spectra.
pub fn log_mel_with(buf: &AudioBuffer, n_mels: usize, params: StftParams) -> Result<FeatureMatrix> {
    let fb = mel_filterbank(n_mels, params.nfft, buf.sample_rate())?;
    let spec = stft_magnitude_with(buf, params)?;
    let mut data = Vec::with_capacity(spec.frames * n_mels);
    for t in 0..spec.frames {
        let frame = spec.frame(t);
        for m in 0..n_mels {
            let filt = &fb[m * spec.bins..(m + 1) * spec.bins];
            let e: f64 = filt
                .iter()
                .zip(frame)
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, a)| w * a * a)
                .sum();
            data.push(e.max(LOG_FLOOR).ln());
        }
    }
    Ok(FeatureMatrix {
        data,
        frames: spec.frames,
        bins: n_mels,
        frame_shift_s: params.hop_s,
        frame_len_s: params.frame_len_s,
    })
}

/// Subtract each bin's mean over frames.
pub fn mean_normalize(f: &FeatureMatrix) -> FeatureMatrix {
    let mut out = f.clone();
    if f.frames == 0 {
        return out;
    }
    for b in 0..f.bins {
        let mean = (0..f.frames).map(|t| f.get(t, b)).sum::<f64>() / f.frames as f64;
        for t in 0..f.frames {
            out.data[t * f.bins + b] -= mean;
        }
    }
    out
}
