//! RTTM and UEM exchange formats, diarization error rate, and VAD accuracy.

use std::collections::BTreeMap;

use pathfinding::prelude::{kuhn_munkres, Matrix};

use crate::error::{Error, Result};
use crate::segment::{Diarization, Segment, Turn};

/// One `SPEAKER` line of an RTTM file.
#[derive(Debug, Clone, PartialEq)]
pub struct RttmTurn {
    pub file_id: String,
    pub onset_s: f64,
    pub duration_s: f64,
    pub speaker: String,
}

fn field<'a>(fields: &[&'a str], i: usize, line: usize, what: &str) -> Result<&'a str> {
    fields.get(i).copied().ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })
}

fn number(s: &str, line: usize, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("bad {what} {s:?}"),
        })
}

/// `SPEAKER` lines only; blank lines, `#` comments and other record types are skipped.
pub fn parse_rttm(text: &str) -> Result<Vec<RttmTurn>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let f: Vec<&str> = raw.split_whitespace().collect();
        if f.first() != Some(&"SPEAKER") {
            continue;
        }
        let file_id = field(&f, 1, line, "file id")?.to_string();
        let onset_s = number(field(&f, 3, line, "onset")?, line, "onset")?;
        let duration_s = number(field(&f, 4, line, "duration")?, line, "duration")?;
        let speaker = field(&f, 7, line, "speaker name")?.to_string();
        if onset_s < 0.0 || duration_s <= 0.0 {
            return Err(Error::Parse {
                line,
                message: format!("onset {onset_s} / duration {duration_s}; need onset >= 0 and duration > 0"),
            });
        }
        out.push(RttmTurn {
            file_id,
            onset_s,
            duration_s,
            speaker,
        });
    }
    Ok(out)
}

pub fn emit_rttm(turns: &[RttmTurn]) -> String {
    turns
        .iter()
        .map(|t| {
            format!(
                "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>\n",
                t.file_id, t.onset_s, t.duration_s, t.speaker
            )
        })
        .collect()
}

pub fn diarization_to_rttm(d: &Diarization) -> Vec<RttmTurn> {
    d.turns
        .iter()
        .map(|t| RttmTurn {
            file_id: d.recording_id.clone(),
            onset_s: t.segment.start_s,
            duration_s: t.segment.duration(),
            speaker: t.speaker.clone(),
        })
        .collect()
}

/// Group turns by file id.
pub fn rttm_to_diarizations(turns: &[RttmTurn]) -> BTreeMap<String, Diarization> {
    let mut out: BTreeMap<String, Diarization> = BTreeMap::new();
    for t in turns {
        out.entry(t.file_id.clone())
            .or_insert_with(|| Diarization::new(t.file_id.clone()))
            .turns
            .push(Turn {
                segment: Segment {
                    start_s: t.onset_s,
                    end_s: t.onset_s + t.duration_s,
                },
                speaker: t.speaker.clone(),
            });
    }
    out.values_mut().for_each(Diarization::sort);
    out
}

/// UEM lines `<file-id> <channel> <start> <end>`, grouped by file id.
pub fn parse_uem(text: &str) -> Result<BTreeMap<String, Vec<Segment>>> {
    let mut out: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, got {}", f.len()),
            });
        }
        let start = number(f[2], line, "start")?;
        let end = number(f[3], line, "end")?;
        let seg = Segment::new(start, end).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        out.entry(f[0].to_string()).or_default().push(seg);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerOptions {
    /// Half-width of the unscored zone around every reference boundary.
    pub collar_s: f64,
    /// Whether frames with more than one reference speaker are scored.
    pub score_overlap: bool,
    pub frame_s: f64,
}

impl Default for DerOptions {
    fn default() -> Self {
        DerOptions {
            collar_s: 0.0,
            score_overlap: true,
            frame_s: 0.001,
        }
    }
}

/// Error fractions are relative to total reference speaker time, where a
/// frame with two reference speakers counts twice.
#[derive(Debug, Clone, PartialEq)]
pub struct DerReport {
    pub der: f64,
    pub miss: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub total_ref_s: f64,
    pub miss_s: f64,
    pub false_alarm_s: f64,
    pub confusion_s: f64,
    /// Hypothesis speaker to the reference speaker it was matched with.
    pub mapping: BTreeMap<String, String>,
}

impl DerReport {
    fn from_seconds(total_ref_s: f64, miss_s: f64, false_alarm_s: f64, confusion_s: f64, mapping: BTreeMap<String, String>) -> Result<Self> {
        let errors = miss_s + false_alarm_s + confusion_s;
        if total_ref_s <= 0.0 {
            if errors > 0.0 {
                return Err(Error::Input("no reference speaker time to score against".into()));
            }
            return Ok(DerReport {
                der: 0.0,
                miss: 0.0,
                false_alarm: 0.0,
                confusion: 0.0,
                total_ref_s,
                miss_s,
                false_alarm_s,
                confusion_s,
                mapping,
            });
        }
        Ok(DerReport {
            der: errors / total_ref_s,
            miss: miss_s / total_ref_s,
            false_alarm: false_alarm_s / total_ref_s,
            confusion: confusion_s / total_ref_s,
            total_ref_s,
            miss_s,
            false_alarm_s,
            confusion_s,
            mapping,
        })
    }

    /// Time-weighted pooling over recordings; the mapping is left empty.
    pub fn aggregate(reports: &[DerReport]) -> Result<DerReport> {
        let sum = |f: fn(&DerReport) -> f64| reports.iter().map(f).sum::<f64>();
        DerReport::from_seconds(
            sum(|r| r.total_ref_s),
            sum(|r| r.miss_s),
            sum(|r| r.false_alarm_s),
            sum(|r| r.confusion_s),
            BTreeMap::new(),
        )
    }
}

/// Boolean activity per speaker on a frame grid of `n` frames.
fn rasterize(d: &Diarization, names: &[String], n: usize, frame_s: f64) -> Vec<Vec<bool>> {
    let by = d.by_speaker();
    names
        .iter()
        .map(|name| {
            let mut m = vec![false; n];
            for s in &by[name] {
                let lo = ((s.start_s / frame_s).round() as usize).min(n);
                let hi = ((s.end_s / frame_s).round() as usize).min(n);
                m[lo..hi].iter_mut().for_each(|x| *x = true);
            }
            m
        })
        .collect()
}

/// Best total of `w[h][r]` over one-to-one matchings; the first optimum in
/// lexicographic permutation order wins. Returns `assign[h]`, `None` when `h`
/// is left unmatched.
fn best_mapping(w: &[Vec<u64>], n_ref: usize) -> Vec<Option<usize>> {
    let n_hyp = w.len();
    let n = n_hyp.max(n_ref);
    if n == 0 {
        return vec![];
    }
    let weight = |h: usize, r: usize| if h < n_hyp && r < n_ref { w[h][r] } else { 0 };
    let perm: Vec<usize> = if n <= 8 {
        fn search(
            h: usize,
            n: usize,
            used: &mut [bool],
            cur: &mut Vec<usize>,
            total: u64,
            best: &mut (u64, Vec<usize>),
            weight: &dyn Fn(usize, usize) -> u64,
        ) {
            if h == n {
                if best.1.is_empty() || total > best.0 {
                    *best = (total, cur.clone());
                }
                return;
            }
            for r in 0..n {
                if !used[r] {
                    used[r] = true;
                    cur.push(r);
                    search(h + 1, n, used, cur, total + weight(h, r), best, weight);
                    cur.pop();
                    used[r] = false;
                }
            }
        }
        let mut best = (0, Vec::new());
        search(0, n, &mut vec![false; n], &mut Vec::with_capacity(n), 0, &mut best, &weight);
        best.1
    } else {
        let data = (0..n * n).map(|i| weight(i / n, i % n) as i64).collect();
        let m = Matrix::from_vec(n, n, data).expect("square weight matrix");
        kuhn_munkres(&m).1
    };
    (0..n_hyp).map(|h| (perm[h] < n_ref).then_some(perm[h])).collect()
}

/// Frame-based DER with the optimal one-to-one speaker mapping. `uem`, when
/// given, restricts scoring to those regions.
pub fn compute_der(reference: &Diarization, hypothesis: &Diarization, opts: &DerOptions, uem: Option<&[Segment]>) -> Result<DerReport> {
    if reference.recording_id != hypothesis.recording_id {
        return Err(Error::Input(format!(
            "reference is {:?} but hypothesis is {:?}",
            reference.recording_id, hypothesis.recording_id
        )));
    }
    if !(opts.frame_s > 0.0 && opts.collar_s >= 0.0) {
        return Err(Error::Parameter("frame_s must be positive and collar_s non-negative".into()));
    }
    let f = opts.frame_s;
    let uem_end = uem.map_or(0.0, |u| u.iter().map(|s| s.end_s).fold(0.0, f64::max));
    let n = ((reference.end_s().max(hypothesis.end_s()).max(uem_end) / f).round() as usize) + 1;
    let ref_names = reference.speakers();
    let hyp_names = hypothesis.speakers();
    let r = rasterize(reference, &ref_names, n, f);
    let h = rasterize(hypothesis, &hyp_names, n, f);

    let mut scored = match uem {
        Some(u) => {
            let mut m = vec![false; n];
            for s in u {
                let lo = ((s.start_s / f).round() as usize).min(n);
                let hi = ((s.end_s / f).round() as usize).min(n);
                m[lo..hi].iter_mut().for_each(|x| *x = true);
            }
            m
        }
        None => vec![true; n],
    };
    if opts.collar_s > 0.0 {
        for t in &reference.turns {
            for b in [t.segment.start_s, t.segment.end_s] {
                let lo = (((b - opts.collar_s) / f).round().max(0.0) as usize).min(n);
                let hi = (((b + opts.collar_s) / f).round().max(0.0) as usize).min(n);
                scored[lo..hi].iter_mut().for_each(|x| *x = false);
            }
        }
    }

    let (mut ref_frames, mut miss, mut fa, mut matched) = (0u64, 0u64, 0u64, 0u64);
    let mut overlap = vec![vec![0u64; ref_names.len()]; hyp_names.len()];
    for k in 0..n {
        if !scored[k] {
            continue;
        }
        let nr = r.iter().filter(|s| s[k]).count() as u64;
        if !opts.score_overlap && nr > 1 {
            continue;
        }
        let nh = h.iter().filter(|s| s[k]).count() as u64;
        ref_frames += nr;
        miss += nr.saturating_sub(nh);
        fa += nh.saturating_sub(nr);
        matched += nr.min(nh);
        if nr > 0 && nh > 0 {
            for (hi, hs) in h.iter().enumerate() {
                if hs[k] {
                    for (ri, rs) in r.iter().enumerate() {
                        if rs[k] {
                            overlap[hi][ri] += 1;
                        }
                    }
                }
            }
        }
    }
    let assign = best_mapping(&overlap, ref_names.len());
    let mut correct = 0u64;
    let mut mapping = BTreeMap::new();
    for (hi, a) in assign.iter().enumerate() {
        if let Some(ri) = *a {
            correct += overlap[hi][ri];
            if overlap[hi][ri] > 0 {
                mapping.insert(hyp_names[hi].clone(), ref_names[ri].clone());
            }
        }
    }
    let secs = |frames: u64| frames as f64 * f;
    DerReport::from_seconds(secs(ref_frames), secs(miss), secs(fa), secs(matched - correct), mapping)
}

/// Fraction of frames on which two speech/non-speech masks agree.
pub fn vad_frame_accuracy(reference: &[bool], hypothesis: &[bool]) -> Result<f64> {
    if reference.len() != hypothesis.len() {
        return Err(Error::Input(format!(
            "mask lengths differ: {} vs {}",
            reference.len(),
            hypothesis.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput("empty masks".into()));
    }
    let same = reference.iter().zip(hypothesis).filter(|(a, b)| a == b).count();
    Ok(same as f64 / reference.len() as f64)
}
