//! The two model roles the pipelines need, and weight-free stand-ins for both.
//!
//! The stand-ins read tone identity straight off the spectrum: a recording whose
//! speakers are the tone families of the synthetic harness gets separable
//! "embeddings" and target tracks without any trained network.

use crate::dsp::{log_mel, mean_normalize, stft_magnitude, AudioBuffer, Spectrogram};
use crate::embedding::{cosine_similarity, Embedding};
use crate::error::{Error, Result};
use crate::models::{EmbedNet, TsvadNet};
use crate::synth::SPEAKER_TONES_HZ;

/// Maps a stretch of audio to a speaker embedding.
pub trait Embedder: Sync {
    fn embed(&self, buf: &AudioBuffer) -> Result<Embedding>;
}

/// Per-frame probability that each target speaker is active.
pub trait TargetDetector: Sync {
    /// One track per target, each aligned to 10 ms STFT frames of `buf`.
    fn tracks(&self, buf: &AudioBuffer, targets: &[Embedding]) -> Result<Vec<Vec<f64>>>;
}

impl Embedder for EmbedNet {
    fn embed(&self, buf: &AudioBuffer) -> Result<Embedding> {
        self.embed_audio(buf)
    }
}

impl TargetDetector for TsvadNet {
    fn tracks(&self, buf: &AudioBuffer, targets: &[Embedding]) -> Result<Vec<Vec<f64>>> {
        let f = mean_normalize(&log_mel(buf, self.config().embed.bins)?);
        // the identity sequence does not depend on the target
        let ids = self.identity_sequence(&f)?;
        targets.iter().map(|t| self.track_from_identity(&ids, t)).collect()
    }
}

/// Embedding width of the tone stand-ins.
pub const TONE_DIM: usize = 128;
/// Half-width of the band read around each tone and harmonic.
const BAND_HALF_HZ: f64 = 15.625;
/// Share of each code vector on the axis a tone family shares with its partner.
const AXIS_SHARE: f64 = 0.8;
const NOISE_FLOOR_FACTOR: f64 = 2.0;

/// Mean magnitude within `BAND_HALF_HZ` of `f0` and of `2 * f0`.
fn family_energy(spec: &Spectrogram, frame: &[f64], f0: f64) -> f64 {
    [f0, 2.0 * f0]
        .iter()
        .map(|&f| {
            let (mut sum, mut n) = (0.0, 0usize);
            for (k, &m) in frame.iter().enumerate() {
                if (k as f64 * spec.bin_hz - f).abs() <= BAND_HALF_HZ {
                    sum += m;
                    n += 1;
                }
            }
            if n == 0 { 0.0 } else { sum / n as f64 }
        })
        .sum()
}

/// Energy share of each tone family in one magnitude frame; `None` when silent.
/// Twice the median magnitude is taken off every bin first, which removes a
/// broadband noise floor and leaves sparse tonal spectra untouched.
fn family_shares(spec: &Spectrogram, frame: &[f64]) -> Option<[f64; 8]> {
    let mut sorted = frame.to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = NOISE_FLOOR_FACTOR * sorted[sorted.len() / 2];
    let clean: Vec<f64> = frame.iter().map(|m| (m - floor).max(0.0)).collect();
    let mut e = [0.0; 8];
    for (v, &f0) in e.iter_mut().zip(&SPEAKER_TONES_HZ) {
        *v = family_energy(spec, &clean, f0);
    }
    let total: f64 = e.iter().sum();
    if total < 1e-9 {
        return None;
    }
    e.iter_mut().for_each(|v| *v /= total);
    Some(e)
}

/// Unit code of tone family `k`. Families `2j` and `2j + 1` share axis `j` with
/// opposite signs (cosine -0.8 between them); each also owns a private axis, so
/// a 50/50 mix still resembles both.
pub fn tone_code(k: usize) -> Vec<f64> {
    let mut v = vec![0.0; TONE_DIM];
    v[k / 2] = if k % 2 == 0 { AXIS_SHARE.sqrt() } else { -AXIS_SHARE.sqrt() };
    v[4 + k] = (1.0 - AXIS_SHARE).sqrt();
    v
}

/// Family energy shares of the time-averaged spectrum, mapped through
/// [`tone_code`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ToneEmbedder;

impl Embedder for ToneEmbedder {
    fn embed(&self, buf: &AudioBuffer) -> Result<Embedding> {
        let spec = stft_magnitude(buf)?;
        let mut mean = vec![0.0; spec.bins];
        for t in 0..spec.frames {
            mean.iter_mut().zip(spec.frame(t)).for_each(|(m, v)| *m += v);
        }
        let n = spec.frames as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let shares = family_shares(&spec, &mean).ok_or(Error::ZeroVector)?;
        let mut v = vec![0.0; TONE_DIM];
        for (k, w) in shares.iter().enumerate() {
            v.iter_mut().zip(tone_code(k)).for_each(|(x, c)| *x += w * c);
        }
        Embedding::new(v)
    }
}

/// Decodes the target's tone family (the code it is most similar to) and scores
/// each frame as `sigmoid(sharpness * (share of that family - offset))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneDetector {
    pub sharpness: f64,
    pub offset: f64,
}

impl Default for ToneDetector {
    fn default() -> Self {
        ToneDetector {
            sharpness: 10.0,
            offset: 0.3,
        }
    }
}

impl TargetDetector for ToneDetector {
    fn tracks(&self, buf: &AudioBuffer, targets: &[Embedding]) -> Result<Vec<Vec<f64>>> {
        if let Some(t) = targets.iter().find(|t| t.dim() != TONE_DIM) {
            return Err(Error::Shape(format!("target dim {} vs {TONE_DIM}", t.dim())));
        }
        let spec = stft_magnitude(buf)?;
        let shares: Vec<Option<[f64; 8]>> = (0..spec.frames).map(|t| family_shares(&spec, spec.frame(t))).collect();
        targets
            .iter()
            .map(|target| {
                let mut family = 0;
                let mut best = f64::NEG_INFINITY;
                for k in 0..SPEAKER_TONES_HZ.len() {
                    let c = cosine_similarity(target.as_slice(), &tone_code(k))?;
                    if c > best {
                        (family, best) = (k, c);
                    }
                }
                Ok(shares
                    .iter()
                    .map(|s| {
                        let share = s.map_or(0.0, |s| s[family]);
                        1.0 / (1.0 + (-self.sharpness * (share - self.offset)).exp())
                    })
                    .collect())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tones(freqs: &[f64], secs: f64, sr: u32) -> AudioBuffer {
        let n = (secs * sr as f64) as usize;
        let s = (0..n)
            .map(|i| {
                let t = i as f64 / sr as f64;
                freqs.iter().map(|f| 0.2 * (2.0 * PI * f * t).sin()).sum()
            })
            .collect();
        AudioBuffer::new(s, sr).unwrap()
    }

    #[test]
    fn tone_embeddings_separate_families() {
        let e = ToneEmbedder;
        let a1 = e.embed(&tones(&[200.0, 400.0], 0.5, 8000)).unwrap();
        let a2 = e.embed(&tones(&[200.0, 400.0], 0.7, 8000)).unwrap();
        let b = e.embed(&tones(&[1190.0, 2380.0], 0.5, 8000)).unwrap();
        let ab = e.embed(&tones(&[200.0, 400.0, 1190.0, 2380.0], 0.5, 8000)).unwrap();
        let cos = |x: &Embedding, y: &Embedding| cosine_similarity(x.as_slice(), y.as_slice()).unwrap();
        assert_eq!(a1.dim(), 128);
        assert!(cos(&a1, &a2) > 0.99);
        assert!((cos(&a1, &b) + 0.8).abs() < 0.05);
        assert!(cos(&ab, &a1) > 0.2 && cos(&ab, &b) > 0.2);
    }

    #[test]
    fn same_profile_at_16k_and_8k() {
        let e = ToneEmbedder;
        let lo = e.embed(&tones(&[530.0, 1060.0], 0.5, 8000)).unwrap();
        let hi = e.embed(&tones(&[530.0, 1060.0], 0.5, 16000)).unwrap();
        assert!(cosine_similarity(lo.as_slice(), hi.as_slice()).unwrap() > 0.9);
    }

    #[test]
    fn silence_has_no_embedding() {
        let z = AudioBuffer::new(vec![0.0; 4000], 8000).unwrap();
        assert!(matches!(ToneEmbedder.embed(&z), Err(Error::ZeroVector)));
    }

    #[test]
    fn detector_tracks_follow_the_target() {
        let buf = tones(&[200.0, 400.0], 1.0, 8000);
        let e = ToneEmbedder;
        let a = e.embed(&buf).unwrap();
        let b = e.embed(&tones(&[1190.0, 2380.0], 1.0, 8000)).unwrap();
        let tr = ToneDetector::default().tracks(&buf, &[a, b]).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr[0].len(), tr[1].len());
        assert!(tr[0].iter().all(|&p| p > 0.99));
        assert!(tr[1].iter().all(|&p| p < 0.05));
    }

    #[test]
    fn silent_frames_score_at_cosine_zero() {
        let buf = AudioBuffer::new(vec![0.0; 800], 8000).unwrap();
        let a = ToneEmbedder.embed(&tones(&[200.0, 400.0], 0.5, 8000)).unwrap();
        let tr = ToneDetector::default().tracks(&buf, &[a]).unwrap();
        let expect = 1.0 / (1.0 + 3.0f64.exp());
        assert!(tr[0].iter().all(|&p| (p - expect).abs() < 1e-12));
    }
}
