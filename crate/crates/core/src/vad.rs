//! Windowed speech detection and binarisation into speech regions.

use crate::dsp::{log_mel, AudioBuffer, FeatureMatrix};
use crate::error::{Error, Result};
use crate::models::VadNet;
use crate::segment::{Segment, FRAME_SHIFT_S};
use crate::tensor::sigmoid;
use crate::tensor::Tensor;

/// Anything that maps a block of log-Mel frames to per-frame speech probabilities.
pub trait SpeechScorer: Sync {
    /// Number of Mel bins the scorer consumes.
    fn bins(&self) -> usize;

    /// One probability per input frame.
    fn frame_probs(&self, f: &FeatureMatrix) -> Result<Vec<f64>>;
}

impl SpeechScorer for VadNet {
    fn bins(&self) -> usize {
        self.config().bins
    }

    fn frame_probs(&self, f: &FeatureMatrix) -> Result<Vec<f64>> {
        self.forward(f)
    }
}

/// Energy detector: `sigmoid(slope * (max_bin_log_energy - floor))` per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyVad {
    pub bins: usize,
    pub floor: f64,
    pub slope: f64,
}

impl Default for EnergyVad {
    fn default() -> Self {
        EnergyVad {
            bins: 32,
            floor: -8.0,
            slope: 2.0,
        }
    }
}

impl SpeechScorer for EnergyVad {
    fn bins(&self) -> usize {
        self.bins
    }

    fn frame_probs(&self, f: &FeatureMatrix) -> Result<Vec<f64>> {
        let z: Vec<f64> = (0..f.frames)
            .map(|t| {
                let peak = f.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                self.slope * (peak - self.floor)
            })
            .collect();
        let n = z.len();
        Ok(sigmoid(&Tensor::new(vec![n], z)?).into_data())
    }
}

/// Per-frame speech probabilities at a 10 ms shift.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechMask {
    pub probs: Vec<f64>,
    pub frame_shift_s: f64,
}

impl SpeechMask {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Input("speech probabilities must lie in [0, 1]".into()));
        }
        Ok(SpeechMask {
            probs,
            frame_shift_s: FRAME_SHIFT_S,
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadParams {
    pub window_s: f64,
    pub shift_s: f64,
    pub threshold: f64,
    pub min_dur_s: f64,
    pub min_gap_s: f64,
}

impl Default for VadParams {
    fn default() -> Self {
        VadParams {
            window_s: 4.0,
            shift_s: 2.0,
            threshold: 0.5,
            min_dur_s: 0.1,
            min_gap_s: 0.1,
        }
    }
}

/// Window start frames over `frames`: every `shift` while the window fits, plus a
/// final window ending at the last frame. A single window when `frames <= win`.
pub fn window_starts(frames: usize, win: usize, shift: usize) -> Vec<usize> {
    if frames <= win {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..).map(|k| k * shift).take_while(|s| s + win <= frames).collect();
    if starts.last().map(|s| s + win) != Some(frames) {
        starts.push(frames - win);
    }
    starts
}

fn to_frames(secs: f64, what: &str) -> Result<usize> {
    let n = (secs / FRAME_SHIFT_S).round();
    if !(n >= 1.0) {
        return Err(Error::Parameter(format!("{what} of {secs}s is under one frame")));
    }
    Ok(n as usize)
}

/// Averaged window predictions over a whole recording.
pub fn predict_speech(scorer: &dyn SpeechScorer, buf: &AudioBuffer, params: &VadParams) -> Result<SpeechMask> {
    if buf.is_empty() {
        return Err(Error::EmptyInput("no audio samples".into()));
    }
    let win = to_frames(params.window_s, "VAD window")?;
    let shift = to_frames(params.shift_s, "VAD shift")?;
    let f = log_mel(buf, scorer.bins())?;
    let mut sum = vec![0.0; f.frames];
    let mut count = vec![0usize; f.frames];
    for start in window_starts(f.frames, win, shift) {
        let end = (start + win).min(f.frames);
        let p = scorer.frame_probs(&f.slice_frames(start, end))?;
        if p.len() != end - start {
            return Err(Error::Shape(format!(
                "scorer returned {} values for {} frames",
                p.len(),
                end - start
            )));
        }
        for (i, v) in p.into_iter().enumerate() {
            sum[start + i] += v;
            count[start + i] += 1;
        }
    }
    SpeechMask::new(
        sum.into_iter()
            .zip(count)
            .map(|(s, c)| (s / c as f64).clamp(0.0, 1.0))
            .collect(),
    )
}

/// Threshold, close gaps shorter than `min_gap_s`, drop runs shorter than `min_dur_s`.
pub fn binarize(mask: &SpeechMask, threshold: f64, min_dur_s: f64, min_gap_s: f64) -> Vec<Segment> {
    let shift = mask.frame_shift_s;
    let min_dur = (min_dur_s / shift).round() as usize;
    let min_gap = (min_gap_s / shift).round() as usize;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, &p) in mask.probs.iter().chain(std::iter::once(&-1.0)).enumerate() {
        match (p >= threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for (s, e) in runs {
        match merged.last_mut() {
            Some(last) if s - last.1 < min_gap => last.1 = e,
            _ => merged.push((s, e)),
        }
    }
    merged
        .into_iter()
        .filter(|(s, e)| e - s >= min_dur.max(1))
        .map(|(s, e)| Segment::from_frames(s, e - 1, shift))
        .collect()
}

/// Parse `<start> <end>` lines (seconds) into sorted, merged speech regions.
pub fn parse_speech_regions(text: &str) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("'{s}' is not a number"),
            })
        };
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected '<start> <end>', got {} fields", fields.len()),
            });
        }
        let seg = Segment::new(parse(fields[0])?, parse(fields[1])?).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(seg);
    }
    Ok(crate::segment::union(&out))
}
