//! Time intervals and speaker-labelled diarizations.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Frame shift shared by every frame-level track in the toolkit.
pub const FRAME_SHIFT_S: f64 = 0.010;

/// A half-open time interval `[start_s, end_s)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
}

impl Segment {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self> {
        if !(start_s.is_finite() && end_s.is_finite()) || start_s < 0.0 || start_s >= end_s {
            return Err(Error::Input(format!(
                "invalid segment [{start_s}, {end_s}]"
            )));
        }
        Ok(Segment { start_s, end_s })
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Segment covering frames `first..=last` at the given shift.
    pub fn from_frames(first: usize, last: usize, shift_s: f64) -> Self {
        Segment {
            start_s: first as f64 * shift_s,
            end_s: (last + 1) as f64 * shift_s,
        }
    }

    /// Whether the centre of frame `idx` falls inside this segment.
    pub fn contains_frame(&self, idx: usize, shift_s: f64) -> bool {
        let centre = (idx as f64 + 0.5) * shift_s;
        centre >= self.start_s && centre < self.end_s
    }
}

/// Sort segments and merge any that overlap or touch.
pub fn union(segs: &[Segment]) -> Vec<Segment> {
    let mut sorted: Vec<Segment> = segs.to_vec();
    sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let mut out: Vec<Segment> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if s.start_s <= last.end_s => last.end_s = last.end_s.max(s.end_s),
            _ => out.push(s),
        }
    }
    out
}

/// Frame mask of length `n_frames` marking frames whose centre lies in any segment.
pub fn frames_mask(segs: &[Segment], n_frames: usize, shift_s: f64) -> Vec<bool> {
    let mut mask = vec![false; n_frames];
    for s in segs {
        // one frame of slack on each side, then the exact centre test
        let lo = ((s.start_s / shift_s) - 1.5).floor().max(0.0) as usize;
        let hi = (((s.end_s / shift_s) + 0.5).ceil().max(0.0) as usize).min(n_frames);
        for (idx, m) in mask.iter_mut().enumerate().take(hi).skip(lo) {
            if s.contains_frame(idx, shift_s) {
                *m = true;
            }
        }
    }
    mask
}

/// Runs of `true` in a mask, as segments.
pub fn mask_to_segments(mask: &[bool], shift_s: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut run_start = None;
    for (i, &on) in mask.iter().enumerate() {
        match (on, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                out.push(Segment::from_frames(s, i - 1, shift_s));
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        out.push(Segment::from_frames(s, mask.len() - 1, shift_s));
    }
    out
}

/// One speaker-attributed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub segment: Segment,
    pub speaker: String,
}

/// "Who spoke when" for one recording.
///
/// Turns of the same speaker never overlap; turns of different speakers may.
#[derive(Debug, Clone, PartialEq)]
pub struct Diarization {
    pub recording_id: String,
    pub turns: Vec<Turn>,
}

impl Diarization {
    pub fn new(recording_id: impl Into<String>) -> Self {
        Diarization {
            recording_id: recording_id.into(),
            turns: Vec::new(),
        }
    }

    /// Build from per-speaker segment lists; each speaker's segments are unioned.
    pub fn from_speaker_segments<S: AsRef<str>>(
        recording_id: impl Into<String>,
        per_speaker: &[(S, Vec<Segment>)],
    ) -> Self {
        let mut d = Diarization::new(recording_id);
        for (spk, segs) in per_speaker {
            for seg in union(segs) {
                d.turns.push(Turn {
                    segment: seg,
                    speaker: spk.as_ref().to_string(),
                });
            }
        }
        d.sort();
        d
    }

    pub fn sort(&mut self) {
        self.turns.sort_by(|a, b| {
            a.segment
                .start_s
                .total_cmp(&b.segment.start_s)
                .then(a.segment.end_s.total_cmp(&b.segment.end_s))
                .then(a.speaker.cmp(&b.speaker))
        });
    }

    /// Speaker names in sorted order.
    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.turns.iter().map(|t| t.speaker.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn by_speaker(&self) -> BTreeMap<String, Vec<Segment>> {
        let mut m: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
        for t in &self.turns {
            m.entry(t.speaker.clone()).or_default().push(t.segment);
        }
        m
    }

    pub fn end_s(&self) -> f64 {
        self.turns
            .iter()
            .map(|t| t.segment.end_s)
            .fold(0.0, f64::max)
    }

    /// True when no two turns of one speaker overlap and every segment is valid.
    pub fn is_consistent(&self) -> bool {
        self.by_speaker().values().all(|segs| {
            let mut s = segs.clone();
            s.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
            s.iter().all(|x| x.start_s >= 0.0 && x.start_s < x.end_s)
                && s.windows(2).all(|w| w[0].end_s <= w[1].start_s)
        })
    }
}
