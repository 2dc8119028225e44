//! Target-speaker VAD inference: enrol each speaker from a first-pass
//! diarization, track them frame by frame, smooth, threshold, repeat.

use crate::backend::{Embedder, TargetDetector};
use crate::dsp::AudioBuffer;
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::segment::{frames_mask, mask_to_segments, union, Diarization, Segment, Turn, FRAME_SHIFT_S};

/// Least speech a speaker needs before an embedding is extracted.
pub const MIN_TARGET_SPEECH_S: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct TsvadParams {
    pub threshold: f64,
    pub median_taps: usize,
    pub max_rounds: usize,
    /// Audio budget per target embedding, seconds.
    pub max_target_s: f64,
}

impl Default for TsvadParams {
    fn default() -> Self {
        TsvadParams {
            threshold: 0.65,
            median_taps: 11,
            max_rounds: 4,
            max_target_s: 8.0,
        }
    }
}

/// Per-speaker probability tracks on a common 10 ms frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerTracks {
    pub speakers: Vec<String>,
    pub tracks: Vec<Vec<f64>>,
    pub frame_shift_s: f64,
}

impl SpeakerTracks {
    pub fn new(speakers: Vec<String>, tracks: Vec<Vec<f64>>) -> Result<Self> {
        if speakers.len() != tracks.len() {
            return Err(Error::Shape(format!("{} speakers, {} tracks", speakers.len(), tracks.len())));
        }
        if let Some(t) = tracks.first() {
            if tracks.iter().any(|x| x.len() != t.len()) {
                return Err(Error::Shape("tracks of unequal length".into()));
            }
        }
        if tracks.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Input("track value outside [0, 1]".into()));
        }
        Ok(SpeakerTracks {
            speakers,
            tracks,
            frame_shift_s: FRAME_SHIFT_S,
        })
    }

    pub fn frames(&self) -> usize {
        self.tracks.first().map_or(0, Vec::len)
    }
}

/// Frames of `FRAME_SHIFT_S` needed to cover the recording.
pub fn recording_frames(buf: &AudioBuffer) -> usize {
    (buf.duration_s() / FRAME_SHIFT_S - 1e-9).ceil().max(0.0) as usize
}

/// Each speaker's regions, in time order, concatenated up to `max_s` seconds and
/// embedded.
pub fn extract_target_embeddings(
    buf: &AudioBuffer,
    regions: &[(String, Vec<Segment>)],
    embedder: &dyn Embedder,
    max_s: f64,
) -> Result<Vec<Embedding>> {
    let sr = buf.sample_rate() as f64;
    let budget = (max_s * sr).round() as usize;
    let x = buf.samples();
    regions
        .iter()
        .map(|(speaker, segs)| {
            let mut cat = Vec::new();
            for s in union(segs) {
                let lo = ((s.start_s * sr).round() as usize).min(x.len());
                let hi = ((s.end_s * sr).round() as usize).min(x.len());
                let take = (hi - lo).min(budget - cat.len());
                cat.extend_from_slice(&x[lo..lo + take]);
                if cat.len() == budget {
                    break;
                }
            }
            let available_s = cat.len() as f64 / sr;
            if available_s < MIN_TARGET_SPEECH_S {
                return Err(Error::InsufficientSpeech {
                    speaker: speaker.clone(),
                    available_s,
                });
            }
            embedder.embed(&AudioBuffer::new(cat, buf.sample_rate())?)
        })
        .collect()
}

/// One detector pass per target, each track padded (edge value) or cut to
/// [`recording_frames`].
pub fn run_tsvad(
    detector: &dyn TargetDetector,
    buf: &AudioBuffer,
    targets: &[(String, Embedding)],
) -> Result<SpeakerTracks> {
    if targets.is_empty() {
        return Err(Error::EmptyInput("no target speakers".into()));
    }
    let embs: Vec<Embedding> = targets.iter().map(|(_, e)| e.clone()).collect();
    let raw = detector.tracks(buf, &embs)?;
    if raw.len() != targets.len() {
        return Err(Error::Shape(format!("{} tracks for {} targets", raw.len(), targets.len())));
    }
    let n = recording_frames(buf);
    let tracks = raw
        .into_iter()
        .map(|mut t| {
            let last = *t.last().ok_or_else(|| Error::EmptyInput("detector returned an empty track".into()))?;
            t.resize(n, last);
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    SpeakerTracks::new(targets.iter().map(|(s, _)| s.clone()).collect(), tracks)
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

/// Sliding median with reflection at the edges (`x[-1] = x[1]`).
pub fn median_filter(x: &[f64], taps: usize) -> Result<Vec<f64>> {
    if taps % 2 == 0 {
        return Err(Error::Parameter(format!("median filter needs an odd tap count, got {taps}")));
    }
    let half = (taps / 2) as isize;
    let mut window = vec![0.0; taps];
    Ok((0..x.len() as isize)
        .map(|i| {
            for (k, w) in window.iter_mut().enumerate() {
                *w = x[reflect(i - half + k as isize, x.len())];
            }
            window.sort_by(f64::total_cmp);
            window[taps / 2]
        })
        .collect())
}

/// Frame-level speaker assignment: `out[s][t]`.
///
/// Within speech every frame goes to each speaker whose filtered value reaches
/// `threshold`, or to the single highest speaker (lowest index on ties) when
/// none does. Frames outside speech stay unassigned.
pub fn assign_frames(tracks: &SpeakerTracks, speech: &[Segment], threshold: f64, taps: usize) -> Result<Vec<Vec<bool>>> {
    let n = tracks.frames();
    let filtered = tracks
        .tracks
        .iter()
        .map(|t| median_filter(t, taps))
        .collect::<Result<Vec<_>>>()?;
    let in_speech = frames_mask(speech, n, tracks.frame_shift_s);
    let mut out = vec![vec![false; n]; filtered.len()];
    for t in (0..n).filter(|&t| in_speech[t]) {
        let mut any = false;
        for (s, f) in filtered.iter().enumerate() {
            if f[t] >= threshold {
                out[s][t] = true;
                any = true;
            }
        }
        if !any {
            let mut best = 0;
            for s in 1..filtered.len() {
                if filtered[s][t] > filtered[best][t] {
                    best = s;
                }
            }
            out[best][t] = true;
        }
    }
    Ok(out)
}

fn frames_to_diarization(recording_id: &str, speakers: &[String], frames: &[Vec<bool>], shift_s: f64) -> Diarization {
    let mut d = Diarization::new(recording_id);
    for (spk, mask) in speakers.iter().zip(frames) {
        d.turns.extend(mask_to_segments(mask, shift_s).into_iter().map(|segment| Turn {
            segment,
            speaker: spk.clone(),
        }));
    }
    d.sort();
    d
}

/// Median filter, threshold and argmax fallback, then runs of frames as turns.
pub fn postprocess(
    tracks: &SpeakerTracks,
    speech: &[Segment],
    threshold: f64,
    taps: usize,
    recording_id: &str,
) -> Result<Diarization> {
    let frames = assign_frames(tracks, speech, threshold, taps)?;
    Ok(frames_to_diarization(recording_id, &tracks.speakers, &frames, tracks.frame_shift_s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundsOutcome {
    pub diarization: Diarization,
    /// Rounds whose output was kept.
    pub rounds: usize,
    /// Output of every kept round, in order.
    pub history: Vec<Diarization>,
    /// Set when a round was discarded and the previous result kept.
    pub warning: Option<String>,
}

/// Re-enrol speakers from the latest result and rerun TSVAD until a round
/// reproduces its predecessor frame for frame, or `max_rounds` is hit.
pub fn run_rounds(
    buf: &AudioBuffer,
    initial: &Diarization,
    speech: &[Segment],
    detector: &dyn TargetDetector,
    embedder: &dyn Embedder,
    params: &TsvadParams,
) -> Result<RoundsOutcome> {
    if params.max_rounds == 0 {
        return Err(Error::Parameter("max_rounds must be at least 1".into()));
    }
    let speakers = initial.speakers();
    if speakers.is_empty() {
        return Err(Error::EmptyInput("initial diarization has no speakers".into()));
    }
    let mut current = initial.clone();
    let mut previous: Option<Vec<Vec<bool>>> = None;
    let mut history = Vec::new();
    let mut warning = None;
    for round in 1..=params.max_rounds {
        let by = current.by_speaker();
        let regions: Vec<(String, Vec<Segment>)> = speakers
            .iter()
            .map(|s| (s.clone(), by.get(s).cloned().unwrap_or_default()))
            .collect();
        let targets = match extract_target_embeddings(buf, &regions, embedder, params.max_target_s) {
            Ok(t) => t,
            Err(e @ Error::InsufficientSpeech { .. }) if round > 1 => {
                warning = Some(format!("round {round}: {e}; keeping round {}", round - 1));
                break;
            }
            Err(e) => return Err(e),
        };
        let named: Vec<(String, Embedding)> = speakers.iter().cloned().zip(targets).collect();
        let tracks = run_tsvad(detector, buf, &named)?;
        let frames = assign_frames(&tracks, speech, params.threshold, params.median_taps)?;
        if let Some(s) = frames.iter().position(|f| !f.contains(&true)) {
            warning = Some(format!(
                "round {round}: speaker {} received no frames; keeping {}",
                speakers[s],
                if round == 1 { "the initial diarization".to_string() } else { format!("round {}", round - 1) }
            ));
            break;
        }
        current = frames_to_diarization(&initial.recording_id, &speakers, &frames, tracks.frame_shift_s);
        history.push(current.clone());
        if previous.as_ref() == Some(&frames) {
            break;
        }
        previous = Some(frames);
    }
    Ok(RoundsOutcome {
        diarization: current,
        rounds: history.len(),
        history,
        warning,
    })
}
