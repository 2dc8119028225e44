//! End-to-end diarization of one recording.
//!
//! Narrowband: 8 kHz, speech regions, short windows, neighbour merging, AHC,
//! two-speaker selection with overlap, then TSVAD rounds.
//! Wideband: speech regions, longer windows, pairwise scoring, spectral clustering.

use std::time::Instant;

use log::{debug, warn};

use crate::backend::{Embedder, TargetDetector, ToneDetector, ToneEmbedder};
use crate::bandwidth::{classify_bandwidth_with, Band};
use crate::cluster::{
    ahc, assign_with_overlap, cosine_similarity_matrix, select_two_speakers, spectral_cluster, v2s_similarity_matrix,
    PairScorer,
};
use crate::config::{PairScoring, PipelineConfig};
use crate::dsp::{resample_to_8k, AudioBuffer};
use crate::error::{Error, Result};
use crate::models::{EmbedConfig, EmbedNet, TsvadConfig, TsvadNet, V2sConfig, V2sScorer, VadConfig, VadNet};
use crate::segment::{Diarization, Segment, Turn};
use crate::segmenter::{recursive_merge, trim_to_midpoints, uniform_segments, EmbeddedSegment};
use crate::synth::speaker_name;
use crate::tensor::load_weights;
use crate::tsvad::run_rounds;
use crate::vad::{binarize, predict_speech, EnergyVad, SpeechScorer};

/// Models resolved from a configuration, shared read-only across recordings.
pub struct Backends {
    pub vad: Option<Box<dyn SpeechScorer>>,
    pub embedder: Box<dyn Embedder>,
    pub detector: Box<dyn TargetDetector>,
    /// `None` selects clipped cosine similarity.
    pub pair_scorer: Option<Box<dyn PairScorer>>,
    /// Short names of what was loaded, for run reports.
    pub names: Vec<String>,
}

fn require<'a>(p: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a std::path::PathBuf> {
    p.as_ref()
        .ok_or_else(|| Error::Config(format!("{key} is not set; pass weights or run with stub embeddings")))
}

impl Backends {
    /// Trained networks from the configured weight files, or with `stub` the
    /// weight-free tone stand-ins and an energy VAD. No VAD is loaded unless
    /// `need_vad`.
    pub fn load(cfg: &PipelineConfig, stub: bool, need_vad: bool) -> Result<Self> {
        let mut names = Vec::new();
        if stub {
            names.extend(["embedder=tone".to_string(), "detector=tone".into(), "pair_scorer=cosine".into()]);
            let vad: Option<Box<dyn SpeechScorer>> = need_vad.then(|| Box::new(EnergyVad::default()) as Box<dyn SpeechScorer>);
            if need_vad {
                names.push("vad=energy".into());
            }
            return Ok(Backends {
                vad,
                embedder: Box::new(ToneEmbedder),
                detector: Box::new(ToneDetector::default()),
                pair_scorer: None,
                names,
            });
        }
        let vad = if need_vad {
            names.push("vad=network".into());
            Some(load_vad(cfg, false)?)
        } else {
            None
        };
        let store = load_weights(require(&cfg.embed_weights, "embed_weights")?)?;
        let embedder = Box::new(EmbedNet::from_store(&EmbedConfig::default(), &store)?);
        let store = load_weights(require(&cfg.tsvad_weights, "tsvad_weights")?)?;
        let detector = Box::new(TsvadNet::from_store(&TsvadConfig::default(), &store)?);
        names.extend(["embedder=network".to_string(), "detector=network".into()]);
        let pair_scorer: Option<Box<dyn PairScorer>> = match cfg.ncts_scorer {
            PairScoring::Cosine => {
                names.push("pair_scorer=cosine".into());
                None
            }
            PairScoring::V2s => {
                let store = load_weights(require(&cfg.v2s_weights, "v2s_weights")?)?;
                names.push("pair_scorer=v2s".into());
                Some(Box::new(V2sScorer::from_store(&V2sConfig::default(), &store)?))
            }
        };
        Ok(Backends {
            vad,
            embedder,
            detector,
            pair_scorer,
            names,
        })
    }
}

/// The configured VAD network, or with `stub` the energy VAD.
pub fn load_vad(cfg: &PipelineConfig, stub: bool) -> Result<Box<dyn SpeechScorer>> {
    if stub {
        return Ok(Box::new(EnergyVad::default()));
    }
    let store = load_weights(require(&cfg.vad_weights, "vad_weights")?)?;
    Ok(Box::new(VadNet::from_store(&VadConfig::default(), &store)?))
}

/// Everything learned about one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingOutcome {
    pub diarization: Diarization,
    pub band: Band,
    /// `None` when the input was already 8 kHz and not classified.
    pub peak_above_4k: Option<f64>,
    pub speech: Vec<Segment>,
    pub segments: usize,
    /// Segments dropped because the embedder could not use them.
    pub skipped_segments: usize,
    pub clusters: usize,
    pub rounds: usize,
    pub round_history: Vec<Diarization>,
    pub warnings: Vec<String>,
    /// Seconds spent per stage, in pipeline order.
    pub timings: Vec<(String, f64)>,
}

struct Stopwatch {
    last: Instant,
    laps: Vec<(String, f64)>,
}

impl Stopwatch {
    fn new() -> Self {
        Stopwatch {
            last: Instant::now(),
            laps: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.laps.push((stage.into(), (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

/// Speech regions from the configured VAD.
pub fn detect_speech(buf: &AudioBuffer, cfg: &PipelineConfig, vad: &dyn SpeechScorer) -> Result<Vec<Segment>> {
    let mask = predict_speech(vad, buf, &cfg.vad)?;
    Ok(binarize(&mask, cfg.vad.threshold, cfg.vad.min_dur_s, cfg.vad.min_gap_s))
}

/// Embed every window; windows the embedder rejects as too short or silent are
/// skipped and counted.
fn embed_windows(buf: &AudioBuffer, windows: &[Segment], embedder: &dyn Embedder) -> Result<(Vec<EmbeddedSegment>, usize)> {
    let mut out = Vec::with_capacity(windows.len());
    let mut skipped = 0;
    for w in windows {
        match embedder.embed(&buf.slice_s(w.start_s, w.end_s)) {
            Ok(embedding) => out.push(EmbeddedSegment { segment: *w, embedding }),
            Err(Error::TooShort { .. } | Error::EmptyInput(_) | Error::ZeroVector) => {
                debug!("skipping unusable window [{:.3}, {:.3}]", w.start_s, w.end_s);
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((out, skipped))
}

/// Labelled, time-sorted segments to a diarization: overlapping neighbours meet
/// at their midpoint, and each piece goes to every speaker listed for it.
fn labelled_to_diarization(recording_id: &str, segs: &[Segment], speakers: &[Vec<usize>]) -> Diarization {
    let trimmed = trim_to_midpoints(segs);
    let n = speakers.iter().flatten().max().map_or(0, |m| m + 1);
    let mut per: Vec<(String, Vec<Segment>)> = (0..n).map(|k| (speaker_name(k), Vec::new())).collect();
    for (t, spk) in trimmed.iter().zip(speakers) {
        if let Some(t) = t {
            for &k in spk {
                per[k].1.push(*t);
            }
        }
    }
    per.retain(|(_, s)| !s.is_empty());
    Diarization::from_speaker_segments(recording_id, &per)
}

fn single_speaker(recording_id: &str, speech: &[Segment]) -> Diarization {
    let mut d = Diarization::new(recording_id);
    d.turns = speech
        .iter()
        .map(|&segment| Turn {
            segment,
            speaker: speaker_name(0),
        })
        .collect();
    d
}

/// Band of a recording: 16 kHz input is classified, 8 kHz input is narrowband
/// by construction (no peak is measured). Other rates are rejected.
pub fn partition(buf: &AudioBuffer, cfg: &PipelineConfig) -> Result<(Band, Option<f64>)> {
    match buf.sample_rate() {
        16000 => {
            let c = classify_bandwidth_with(buf, cfg.bandwidth_threshold, cfg.bandwidth_horizon_s)?;
            Ok((c.band, Some(c.peak_above_4k)))
        }
        8000 => Ok((Band::Cts, None)),
        sr => Err(Error::UnsupportedFormat(format!("{sr} Hz audio; expected 8000 or 16000"))),
    }
}

/// The signal the rest of the pipeline sees: narrowband audio at 8 kHz,
/// wideband audio untouched.
pub fn working_audio(buf: &AudioBuffer, band: Band) -> Result<AudioBuffer> {
    if band == Band::Cts && buf.sample_rate() == 16000 {
        resample_to_8k(buf)
    } else {
        Ok(buf.clone())
    }
}

/// Diarize one recording. `speech`, when given, replaces the VAD.
pub fn diarize(
    buf: &AudioBuffer,
    recording_id: &str,
    cfg: &PipelineConfig,
    backends: &Backends,
    speech: Option<&[Segment]>,
) -> Result<RecordingOutcome> {
    cfg.validate()?;
    let mut clock = Stopwatch::new();
    let (band, peak) = partition(buf, cfg)?;
    clock.lap("partition");
    let audio = working_audio(buf, band)?;
    clock.lap("resample");
    let speech: Vec<Segment> = match speech {
        Some(s) => s.to_vec(),
        None => {
            let vad = backends
                .vad
                .as_deref()
                .ok_or_else(|| Error::Config("no speech regions given and no VAD loaded".into()))?;
            detect_speech(&audio, cfg, vad)?
        }
    };
    clock.lap("vad");
    let mut out = RecordingOutcome {
        diarization: Diarization::new(recording_id),
        band,
        peak_above_4k: peak,
        speech: speech.clone(),
        segments: 0,
        skipped_segments: 0,
        clusters: 0,
        rounds: 0,
        round_history: Vec::new(),
        warnings: Vec::new(),
        timings: Vec::new(),
    };
    match band {
        Band::Cts => diarize_cts(&audio, recording_id, cfg, backends, &speech, &mut out, &mut clock)?,
        Band::Ncts => diarize_ncts(&audio, recording_id, cfg, backends, &speech, &mut out, &mut clock)?,
    }
    for w in &out.warnings {
        warn!("{recording_id}: {w}");
    }
    out.timings = clock.laps;
    Ok(out)
}

fn diarize_cts(
    audio: &AudioBuffer,
    recording_id: &str,
    cfg: &PipelineConfig,
    backends: &Backends,
    speech: &[Segment],
    out: &mut RecordingOutcome,
    clock: &mut Stopwatch,
) -> Result<()> {
    let windows = uniform_segments(speech, cfg.cts_window_s, cfg.cts_shift_s)?;
    let (embedded, skipped) = embed_windows(audio, &windows, backends.embedder.as_ref())?;
    out.segments = windows.len();
    out.skipped_segments = skipped;
    clock.lap("embed");
    let merged = recursive_merge(&embedded, cfg.merge_threshold)?;
    clock.lap("merge");
    let embs: Vec<_> = merged.iter().map(|s| s.embedding.clone()).collect();
    let clustering = ahc(&embs, cfg.ahc_threshold)?;
    out.clusters = clustering.num_clusters();
    clock.lap("cluster");
    if clustering.num_clusters() < 2 {
        out.warnings
            .push(format!("{} cluster(s) found; labelling all speech as one speaker", clustering.num_clusters()));
        out.diarization = single_speaker(recording_id, speech);
        return Ok(());
    }
    let durations: Vec<f64> = merged.iter().map(|s| s.segment.duration()).collect();
    let sel = select_two_speakers(&clustering, &durations)?;
    let parts = assign_with_overlap(&merged, &sel.center_a, &sel.center_b, cfg.overlap_threshold)?;
    let segs: Vec<Segment> = merged.iter().map(|s| s.segment).collect();
    let speakers: Vec<Vec<usize>> = segs
        .iter()
        .map(|s| (0..2).filter(|&k| parts[k].contains(s)).collect())
        .collect();
    let initial = labelled_to_diarization(recording_id, &segs, &speakers);
    clock.lap("assign");
    match run_rounds(
        audio,
        &initial,
        speech,
        backends.detector.as_ref(),
        backends.embedder.as_ref(),
        &cfg.tsvad,
    ) {
        Ok(r) => {
            out.rounds = r.rounds;
            out.round_history = r.history;
            out.warnings.extend(r.warning);
            out.diarization = r.diarization;
        }
        Err(e @ Error::InsufficientSpeech { .. }) => {
            out.warnings.push(format!("TSVAD skipped: {e}"));
            out.diarization = initial;
        }
        Err(e) => return Err(e),
    }
    clock.lap("tsvad");
    Ok(())
}

fn diarize_ncts(
    audio: &AudioBuffer,
    recording_id: &str,
    cfg: &PipelineConfig,
    backends: &Backends,
    speech: &[Segment],
    out: &mut RecordingOutcome,
    clock: &mut Stopwatch,
) -> Result<()> {
    let windows = uniform_segments(speech, cfg.ncts_window_s, cfg.ncts_shift_s)?;
    let (embedded, skipped) = embed_windows(audio, &windows, backends.embedder.as_ref())?;
    out.segments = windows.len();
    out.skipped_segments = skipped;
    clock.lap("embed");
    let segs: Vec<Segment> = embedded.iter().map(|s| s.segment).collect();
    if embedded.len() < 2 {
        out.clusters = embedded.len();
        out.diarization = labelled_to_diarization(recording_id, &segs, &vec![vec![0]; segs.len()]);
        return Ok(());
    }
    let embs: Vec<_> = embedded.iter().map(|s| s.embedding.clone()).collect();
    let s = match &backends.pair_scorer {
        Some(p) => v2s_similarity_matrix(&embs, p.as_ref())?,
        None => cosine_similarity_matrix(&embs)?.clipped_nonnegative(),
    };
    clock.lap("score");
    let r = spectral_cluster(&s, cfg.max_speakers, None, cfg.kmeans_restarts, cfg.seed)?;
    out.clusters = r.k;
    clock.lap("cluster");
    let speakers: Vec<Vec<usize>> = r.labels.iter().map(|&l| vec![l]).collect();
    out.diarization = labelled_to_diarization(recording_id, &segs, &speakers);
    Ok(())
}
