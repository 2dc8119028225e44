//! Synthetic conversations with exact references: embedding streams for the
//! clustering stages and tone-coded audio for end-to-end runs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::cluster::random_orthogonal;
use crate::dsp::AudioBuffer;
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::segment::{Diarization, Segment, Turn};
use crate::segmenter::{uniform_segments, EmbeddedSegment};

/// Fundamental of each tone-coded speaker; each also carries its second harmonic.
pub const SPEAKER_TONES_HZ: [f64; 8] = [200.0, 1190.0, 530.0, 1450.0, 660.0, 1710.0, 790.0, 920.0];
pub const SYNTH_SAMPLE_RATE: u32 = 16000;
const FUNDAMENTAL_AMP: f64 = 0.25;
const HARMONIC_AMP: f64 = 0.125;
const FADE_S: f64 = 0.010;
/// Segmentation of turns in embedding streams.
const STREAM_WIN_S: f64 = 1.5;
const STREAM_SHIFT_S: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_speakers: usize,
    pub duration_s: f64,
    /// Share of speech time (union over speakers) with two speakers active.
    pub overlap_fraction: f64,
    pub turn_min_s: f64,
    pub turn_max_s: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_speakers: 2,
            duration_s: 60.0,
            overlap_fraction: 0.1,
            turn_min_s: 2.0,
            turn_max_s: 5.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_speakers >= 1
            && self.duration_s > 0.0
            && (0.0..1.0).contains(&self.overlap_fraction)
            && self.turn_min_s > 0.0
            && self.turn_max_s >= self.turn_min_s
            && self.noise_sigma >= 0.0
            && self.duration_s.is_finite()
            && self.turn_max_s.is_finite()
            && self.noise_sigma.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid synthesis spec {self:?}")))
        }
    }
}

pub fn speaker_name(k: usize) -> String {
    format!("spk{:02}", k + 1)
}

/// Alternating turns. Every odd transition overlaps the previous turn (when
/// `overlap_fraction > 0` and there are two or more speakers); the others leave
/// a 0.2 to 0.8 s silence. Returns `(speaker index, segment)` in time order.
fn plan_turns(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<(usize, Segment)> {
    let f = spec.overlap_fraction;
    // overlapping half of the transitions by this share of the new turn gives
    // overlap / union close to f
    let share = 2.0 * f / (1.0 + f);
    let mut out: Vec<(usize, Segment)> = Vec::new();
    let mut k = 0usize;
    loop {
        let len = rng.random_range(spec.turn_min_s..=spec.turn_max_s);
        let (speaker, start) = match out.last() {
            None => (rng.random_range(0..spec.n_speakers), rng.random_range(0.0..0.5)),
            Some(&(prev, seg)) => {
                let next = if spec.n_speakers == 1 {
                    0
                } else {
                    (prev + rng.random_range(1..spec.n_speakers)) % spec.n_speakers
                };
                let start = if k % 2 == 1 && f > 0.0 && spec.n_speakers > 1 {
                    seg.end_s - (share * len).min(0.5 * seg.duration().min(len))
                } else {
                    seg.end_s + rng.random_range(0.2..0.8)
                };
                (next, start)
            }
        };
        if start + spec.turn_min_s > spec.duration_s {
            break;
        }
        let end = (start + len).min(spec.duration_s);
        out.push((speaker, Segment { start_s: start, end_s: end }));
        k += 1;
    }
    out
}

fn reference(turns: &[(usize, Segment)], recording_id: &str) -> Diarization {
    let mut d = Diarization::new(recording_id);
    d.turns = turns
        .iter()
        .map(|&(s, segment)| Turn {
            segment,
            speaker: speaker_name(s),
        })
        .collect();
    d.sort();
    d
}

/// Embedded segments with the true speaker index of each, plus the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStream {
    pub segments: Vec<EmbeddedSegment>,
    pub speakers: Vec<usize>,
    pub reference: Diarization,
}

/// Orthonormal 128-dim prototypes; each turn is cut into 1.5 s windows with a
/// 0.75 s shift and every window gets its speaker's prototype plus N(0, sigma)
/// noise per dimension.
pub fn gen_embedding_stream(spec: &SynthSpec) -> Result<EmbeddingStream> {
    spec.validate()?;
    const DIM: usize = 128;
    if spec.n_speakers > DIM {
        return Err(Error::Parameter(format!("at most {DIM} speakers, asked for {}", spec.n_speakers)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let q = random_orthogonal(DIM, &mut rng);
    let protos: Vec<Vec<f64>> = (0..spec.n_speakers).map(|k| (0..DIM).map(|i| q[i * DIM + k]).collect()).collect();
    let turns = plan_turns(spec, &mut rng);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut segments = Vec::new();
    let mut speakers = Vec::new();
    for &(s, seg) in &turns {
        for w in uniform_segments(&[seg], STREAM_WIN_S, STREAM_SHIFT_S)? {
            let v = protos[s].iter().map(|p| p + rng.sample(noise)).collect();
            segments.push(EmbeddedSegment {
                segment: w,
                embedding: Embedding::new(v)?,
            });
            speakers.push(s);
        }
    }
    Ok(EmbeddingStream {
        segments,
        speakers,
        reference: reference(&turns, "synth"),
    })
}

/// Speaker `k` sings `SPEAKER_TONES_HZ[k]` and its octave inside each of their
/// turns (10 ms raised-cosine fades), silent elsewhere; optional N(0, sigma)
/// noise on top, then clipping to `[-1, 1]`. 16 kHz.
pub fn gen_audio_conversation(spec: &SynthSpec, recording_id: &str) -> Result<(AudioBuffer, Diarization)> {
    spec.validate()?;
    if spec.n_speakers > SPEAKER_TONES_HZ.len() {
        return Err(Error::Parameter(format!(
            "at most {} tone-coded speakers, asked for {}",
            SPEAKER_TONES_HZ.len(),
            spec.n_speakers
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let turns = plan_turns(spec, &mut rng);
    let sr = SYNTH_SAMPLE_RATE as f64;
    let n = (spec.duration_s * sr).round() as usize;
    let mut x = vec![0.0; n];
    let fade = (FADE_S * sr).round() as usize;
    for &(s, seg) in &turns {
        let f0 = SPEAKER_TONES_HZ[s];
        let lo = (seg.start_s * sr).round() as usize;
        let hi = ((seg.end_s * sr).round() as usize).min(n);
        let len = hi - lo;
        for (i, v) in x[lo..hi].iter_mut().enumerate() {
            let t = (lo + i) as f64 / sr;
            let edge = i.min(len - 1 - i);
            let gain = if edge < fade { 0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos() } else { 1.0 };
            *v += gain * (FUNDAMENTAL_AMP * (2.0 * PI * f0 * t).sin() + HARMONIC_AMP * (4.0 * PI * f0 * t).sin());
        }
    }
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        x.iter_mut().for_each(|v| *v += rng.sample(noise));
    }
    Ok((AudioBuffer::clipped(x, SYNTH_SAMPLE_RATE)?, reference(&turns, recording_id)))
}

/// Fraction of speech time (union) covered by two or more speakers, on a 1 ms grid.
pub fn overlap_fraction(d: &Diarization) -> f64 {
    let n = (d.end_s() * 1000.0).ceil() as usize + 1;
    let mut count = vec![0u8; n];
    for t in &d.turns {
        let lo = (t.segment.start_s * 1000.0).round() as usize;
        let hi = ((t.segment.end_s * 1000.0).round() as usize).min(n);
        count[lo..hi].iter_mut().for_each(|c| *c = c.saturating_add(1));
    }
    let speech = count.iter().filter(|&&c| c > 0).count();
    let over = count.iter().filter(|&&c| c > 1).count();
    if speech == 0 {
        0.0
    } else {
        over as f64 / speech as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::{classify_bandwidth, Band};
    use crate::embedding::cosine_similarity;

    fn spec(n: usize, sigma: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            n_speakers: n,
            duration_s: 40.0,
            noise_sigma: sigma,
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn noiseless_stream_is_prototypes() {
        let s = gen_embedding_stream(&spec(3, 0.0, 1)).unwrap();
        assert!(!s.segments.is_empty());
        for (a, sa) in s.segments.iter().zip(&s.speakers) {
            for (b, sb) in s.segments.iter().zip(&s.speakers) {
                let c = cosine_similarity(a.embedding.as_slice(), b.embedding.as_slice()).unwrap();
                if sa == sb {
                    assert_eq!(a.embedding, b.embedding);
                } else {
                    assert!(c.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn low_noise_keeps_a_margin() {
        let s = gen_embedding_stream(&spec(2, 0.05, 2)).unwrap();
        let (mut within, mut cross) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..s.segments.len() {
            for j in i + 1..s.segments.len() {
                let c = cosine_similarity(s.segments[i].embedding.as_slice(), s.segments[j].embedding.as_slice()).unwrap();
                if s.speakers[i] == s.speakers[j] {
                    within = within.min(c);
                } else {
                    cross = cross.max(c);
                }
            }
        }
        assert!(within > cross, "{within} vs {cross}");
    }

    #[test]
    fn generators_are_pure_in_the_seed() {
        assert_eq!(gen_embedding_stream(&spec(4, 0.1, 3)).unwrap(), gen_embedding_stream(&spec(4, 0.1, 3)).unwrap());
        assert_eq!(gen_audio_conversation(&spec(2, 0.1, 3), "r").unwrap(), gen_audio_conversation(&spec(2, 0.1, 3), "r").unwrap());
        assert_ne!(gen_embedding_stream(&spec(4, 0.1, 3)).unwrap(), gen_embedding_stream(&spec(4, 0.1, 4)).unwrap());
    }

    #[test]
    fn too_many_speakers_rejected() {
        assert!(gen_embedding_stream(&spec(129, 0.0, 0)).is_err());
        assert!(gen_audio_conversation(&spec(9, 0.0, 0), "r").is_err());
        let bad = SynthSpec {
            overlap_fraction: 1.0,
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn references_are_consistent_and_overlap_near_target() {
        for seed in 0..10 {
            let s = SynthSpec {
                duration_s: 120.0,
                seed,
                ..SynthSpec::default()
            };
            let (_, r) = gen_audio_conversation(&s, "r").unwrap();
            assert!(r.is_consistent());
            let f = overlap_fraction(&r);
            assert!((0.05..0.15).contains(&f), "seed {seed}: {f}");
        }
    }

    #[test]
    fn single_speaker_sound_stays_inside_turns() {
        let s = SynthSpec {
            n_speakers: 1,
            duration_s: 20.0,
            ..SynthSpec::default()
        };
        let (buf, r) = gen_audio_conversation(&s, "r").unwrap();
        let sr = SYNTH_SAMPLE_RATE as f64;
        let inside = |i: usize| {
            let t = i as f64 / sr;
            r.turns.iter().any(|x| t >= x.segment.start_s - 0.01 && t < x.segment.end_s + 0.01)
        };
        for (i, v) in buf.samples().iter().enumerate() {
            if *v != 0.0 {
                assert!(inside(i), "sample {i} sounds outside every turn");
            }
        }
        // and the turns are audible
        for t in &r.turns {
            let mid = ((t.segment.start_s + t.segment.end_s) / 2.0 * sr) as usize;
            assert!(buf.samples()[mid..mid + 200].iter().any(|v| v.abs() > 0.1));
        }
    }

    #[test]
    fn tones_are_narrowband_and_noise_is_not() {
        let (clean, _) = gen_audio_conversation(&spec(8, 0.0, 5), "r").unwrap();
        assert_eq!(classify_bandwidth(&clean).unwrap().band, Band::Cts);
        let (noisy, _) = gen_audio_conversation(&spec(2, 0.3, 5), "r").unwrap();
        assert_eq!(classify_bandwidth(&noisy).unwrap().band, Band::Ncts);
    }
}
