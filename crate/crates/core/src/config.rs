//! Pipeline constants as a flat `key = value` file.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tsvad::TsvadParams;
use crate::vad::VadParams;

/// Similarity used before spectral clustering on wideband audio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairScoring {
    Cosine,
    V2s,
}

impl FromStr for PairScoring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(PairScoring::Cosine),
            "v2s" => Ok(PairScoring::V2s),
            _ => Err(Error::Config(format!("ncts_scorer must be cosine or v2s, got {s:?}"))),
        }
    }
}

impl PairScoring {
    fn as_str(&self) -> &'static str {
        match self {
            PairScoring::Cosine => "cosine",
            PairScoring::V2s => "v2s",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub bandwidth_threshold: f64,
    pub bandwidth_horizon_s: f64,
    pub vad: VadParams,
    pub cts_window_s: f64,
    pub cts_shift_s: f64,
    pub ncts_window_s: f64,
    pub ncts_shift_s: f64,
    pub merge_threshold: f64,
    pub ahc_threshold: f64,
    pub overlap_threshold: f64,
    pub tsvad: TsvadParams,
    pub max_speakers: usize,
    pub kmeans_restarts: usize,
    pub ncts_scorer: PairScoring,
    pub seed: u64,
    pub vad_weights: Option<PathBuf>,
    pub embed_weights: Option<PathBuf>,
    pub v2s_weights: Option<PathBuf>,
    pub tsvad_weights: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bandwidth_threshold: 0.07,
            bandwidth_horizon_s: 100.0,
            vad: VadParams::default(),
            cts_window_s: 0.5,
            cts_shift_s: 0.25,
            ncts_window_s: 1.5,
            ncts_shift_s: 0.25,
            merge_threshold: 0.6,
            ahc_threshold: 0.6,
            overlap_threshold: 0.0,
            tsvad: TsvadParams::default(),
            max_speakers: 8,
            kmeans_restarts: 20,
            ncts_scorer: PairScoring::V2s,
            seed: 0,
            vad_weights: None,
            embed_weights: None,
            v2s_weights: None,
            tsvad_weights: None,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 26] = [
        "bandwidth_threshold",
        "bandwidth_horizon_s",
        "vad_threshold",
        "vad_window_s",
        "vad_shift_s",
        "vad_min_dur_s",
        "vad_min_gap_s",
        "cts_window_s",
        "cts_shift_s",
        "ncts_window_s",
        "ncts_shift_s",
        "merge_threshold",
        "ahc_threshold",
        "overlap_threshold",
        "tsvad_threshold",
        "median_taps",
        "tsvad_max_rounds",
        "target_max_s",
        "max_speakers",
        "kmeans_restarts",
        "ncts_scorer",
        "seed",
        "vad_weights",
        "embed_weights",
        "v2s_weights",
        "tsvad_weights",
    ];

    /// Set one key from its text form. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "bandwidth_threshold" => self.bandwidth_threshold = num(key, v)?,
            "bandwidth_horizon_s" => self.bandwidth_horizon_s = num(key, v)?,
            "vad_threshold" => self.vad.threshold = num(key, v)?,
            "vad_window_s" => self.vad.window_s = num(key, v)?,
            "vad_shift_s" => self.vad.shift_s = num(key, v)?,
            "vad_min_dur_s" => self.vad.min_dur_s = num(key, v)?,
            "vad_min_gap_s" => self.vad.min_gap_s = num(key, v)?,
            "cts_window_s" => self.cts_window_s = num(key, v)?,
            "cts_shift_s" => self.cts_shift_s = num(key, v)?,
            "ncts_window_s" => self.ncts_window_s = num(key, v)?,
            "ncts_shift_s" => self.ncts_shift_s = num(key, v)?,
            "merge_threshold" => self.merge_threshold = num(key, v)?,
            "ahc_threshold" => self.ahc_threshold = num(key, v)?,
            "overlap_threshold" => self.overlap_threshold = num(key, v)?,
            "tsvad_threshold" => self.tsvad.threshold = num(key, v)?,
            "median_taps" => self.tsvad.median_taps = num(key, v)?,
            "tsvad_max_rounds" => self.tsvad.max_rounds = num(key, v)?,
            "target_max_s" => self.tsvad.max_target_s = num(key, v)?,
            "max_speakers" => self.max_speakers = num(key, v)?,
            "kmeans_restarts" => self.kmeans_restarts = num(key, v)?,
            "ncts_scorer" => self.ncts_scorer = v.parse()?,
            "seed" => self.seed = num(key, v)?,
            "vad_weights" => self.vad_weights = path(v),
            "embed_weights" => self.embed_weights = path(v),
            "v2s_weights" => self.v2s_weights = path(v),
            "tsvad_weights" => self.tsvad_weights = path(v),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Defaults overridden by each `key = value` line; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            c.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("bandwidth_threshold", self.bandwidth_threshold.to_string());
        put("bandwidth_horizon_s", self.bandwidth_horizon_s.to_string());
        put("vad_threshold", self.vad.threshold.to_string());
        put("vad_window_s", self.vad.window_s.to_string());
        put("vad_shift_s", self.vad.shift_s.to_string());
        put("vad_min_dur_s", self.vad.min_dur_s.to_string());
        put("vad_min_gap_s", self.vad.min_gap_s.to_string());
        put("cts_window_s", self.cts_window_s.to_string());
        put("cts_shift_s", self.cts_shift_s.to_string());
        put("ncts_window_s", self.ncts_window_s.to_string());
        put("ncts_shift_s", self.ncts_shift_s.to_string());
        put("merge_threshold", self.merge_threshold.to_string());
        put("ahc_threshold", self.ahc_threshold.to_string());
        put("overlap_threshold", self.overlap_threshold.to_string());
        put("tsvad_threshold", self.tsvad.threshold.to_string());
        put("median_taps", self.tsvad.median_taps.to_string());
        put("tsvad_max_rounds", self.tsvad.max_rounds.to_string());
        put("target_max_s", self.tsvad.max_target_s.to_string());
        put("max_speakers", self.max_speakers.to_string());
        put("kmeans_restarts", self.kmeans_restarts.to_string());
        put("ncts_scorer", self.ncts_scorer.as_str().to_string());
        put("seed", self.seed.to_string());
        put("vad_weights", show(&self.vad_weights));
        put("embed_weights", show(&self.embed_weights));
        put("v2s_weights", show(&self.v2s_weights));
        put("tsvad_weights", show(&self.tsvad_weights));
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_horizon_s", self.bandwidth_horizon_s),
            ("vad_window_s", self.vad.window_s),
            ("vad_shift_s", self.vad.shift_s),
            ("cts_window_s", self.cts_window_s),
            ("cts_shift_s", self.cts_shift_s),
            ("ncts_window_s", self.ncts_window_s),
            ("ncts_shift_s", self.ncts_shift_s),
            ("target_max_s", self.tsvad.max_target_s),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{k} must be positive, got {v}")));
        }
        if self.tsvad.median_taps % 2 == 0 {
            return Err(Error::Config(format!("median_taps must be odd, got {}", self.tsvad.median_taps)));
        }
        if self.tsvad.max_rounds == 0 || self.max_speakers == 0 || self.kmeans_restarts == 0 {
            return Err(Error::Config("tsvad_max_rounds, max_speakers and kmeans_restarts must be at least 1".into()));
        }
        Ok(())
    }
}
