use std::f64::consts::PI;

use super::AudioBuffer;
use crate::error::{Error, Result};

pub const ANTI_ALIAS_CUTOFF_HZ: f64 = 3800.0;
pub const ANTI_ALIAS_TAPS: usize = 161;
// Kaiser beta for ~60 dB stopband attenuation.
const KAISER_BETA: f64 = 5.653;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn lowpass_taps(cutoff_hz: f64, sample_rate: f64, n_taps: usize) -> Vec<f64> {
    let fc = cutoff_hz / sample_rate;
    let mid = (n_taps - 1) as f64 / 2.0;
    let denom = bessel_i0(KAISER_BETA);
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|i| {
            let t = i as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let r = t / mid;
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / denom;
            sinc * w
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= gain;
    }
    taps
}

/// Downsample 16 kHz audio to 8 kHz: Kaiser-windowed-sinc low-pass, then keep every
/// second sample. Output length is `ceil(n / 2)`; the filter is zero-phase with
/// zero padding at the edges.
pub fn resample_to_8k(buf: &AudioBuffer) -> Result<AudioBuffer> {
    if buf.sample_rate() != 16000 {
        return Err(Error::Precondition(format!(
            "resample_to_8k expects 16000 Hz input, got {}",
            buf.sample_rate()
        )));
    }
    let taps = lowpass_taps(ANTI_ALIAS_CUTOFF_HZ, 16000.0, ANTI_ALIAS_TAPS);
    let half = (ANTI_ALIAS_TAPS / 2) as isize;
    let x = buf.samples();
    let n = x.len() as isize;
    let out_len = x.len().div_ceil(2);
    let out = (0..out_len)
        .map(|m| {
            let centre = 2 * m as isize;
            let mut acc = 0.0;
            for (k, &h) in taps.iter().enumerate() {
                let idx = centre + half - k as isize;
                if idx >= 0 && idx < n {
                    acc += h * x[idx as usize];
                }
            }
            acc.clamp(-1.0, 1.0)
        })
        .collect();
    Ok(AudioBuffer::from_parts_unchecked(out, 8000))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64, sr: u32, amp: f64) -> AudioBuffer {
        let n = (secs * sr as f64) as usize;
        AudioBuffer::new(
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / sr as f64).sin())
                .collect(),
            sr,
        )
        .unwrap()
    }

    /// Naive single-bin DFT magnitude, scaled to sinusoid amplitude.
    fn dft_amplitude(x: &[f64], bin: usize) -> f64 {
        let n = x.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            let ph = 2.0 * PI * bin as f64 * i as f64 / n;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        2.0 * (re * re + im * im).sqrt() / n
    }

    fn energy(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn bessel_matches_known_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-12);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-9);
    }

    #[test]
    fn one_khz_tone_survives() {
        let out = resample_to_8k(&tone(1000.0, 1.0, 16000, 0.999)).unwrap();
        assert_eq!(out.len(), 8000);
        assert_eq!(out.sample_rate(), 8000);
        // 8000-point DFT at 8 kHz has 1 Hz bins
        let amps: Vec<f64> = (1..4000).map(|b| dft_amplitude(out.samples(), b)).collect();
        let (peak_bin, peak) = amps
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &a)| if a > acc.1 { (i + 1, a) } else { acc });
        assert_eq!(peak_bin, 1000);
        assert!((peak - 0.999).abs() / 0.999 < 0.01, "amplitude {peak}");
    }

    #[test]
    fn aliasing_band_is_suppressed() {
        let input = tone(7500.0, 1.0, 16000, 0.9);
        let out = resample_to_8k(&input).unwrap();
        // compare per-sample power (output has half as many samples)
        let ratio = (energy(out.samples()) / out.len() as f64)
            / (energy(input.samples()) / input.len() as f64);
        assert!(ratio < 0.01, "ratio {ratio}");
    }

    #[test]
    fn zeros_stay_zero_and_odd_lengths_round_up() {
        let out = resample_to_8k(&AudioBuffer::new(vec![0.0; 1001], 16000).unwrap()).unwrap();
        assert_eq!(out.len(), 501);
        assert!(out.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn wrong_rate_is_rejected() {
        let err = resample_to_8k(&AudioBuffer::new(vec![0.0; 10], 8000).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn low_tones_keep_their_frequency() {
        for &f in &[250.0, 1700.0, 3100.0, 3450.0] {
            let out = resample_to_8k(&tone(f, 0.5, 16000, 0.5)).unwrap();
            // 4000-point DFT at 8 kHz: 2 Hz bins
            let bins: Vec<f64> = (1..2000).map(|b| dft_amplitude(out.samples(), b)).collect();
            let peak = bins
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| (i + 1) as f64 * 2.0)
                .unwrap();
            assert!((peak - f).abs() <= 2.0, "{f} -> {peak}");
        }
    }
}
