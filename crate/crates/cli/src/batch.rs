//! Per-recording commands run over a worker pool. A failing recording becomes
//! an `error` record in the report; the others still complete.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use diarkit::config::{PairScoring, PipelineConfig};
use diarkit::dsp::read_wav;
use diarkit::eval::{diarization_to_rttm, emit_rttm, rttm_to_diarizations};
use diarkit::pipeline::{self, detect_speech, load_vad, partition as classify, working_audio, Backends};
use diarkit::segment::{union, Segment};
use diarkit::tsvad::run_rounds;
use diarkit::vad::parse_speech_regions;
use log::info;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::files::{read_rttm_tree, recording_id, wav_inputs, write_atomic};
use crate::Common;

/// Apply `f` to every input in the pool and collect one record per input, in
/// input order.
fn run_all<F>(inputs: &[PathBuf], common: &Common, f: F) -> anyhow::Result<Vec<Value>>
where
    F: Fn(&Path, &str) -> anyhow::Result<Value> + Sync,
{
    let pool = common.pool()?;
    Ok(pool.install(|| {
        inputs
            .par_iter()
            .map(|p| {
                let id = recording_id(p);
                let mut rec = match f(p, &id) {
                    Ok(v) => v,
                    Err(e) => {
                        log::error!("{id}: {e:#}");
                        json!({ "status": "error", "error": format!("{e:#}") })
                    }
                };
                rec["recording"] = json!(id);
                if rec.get("status").is_none() {
                    rec["status"] = json!("ok");
                }
                rec
            })
            .collect()
    }))
}

fn all_ok(records: &[Value]) -> bool {
    records.iter().all(|r| r["status"] == "ok")
}

fn write_report(path: &Path, records: &[Value]) -> anyhow::Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

fn report_path(common: &Common, out_dir: &Path) -> PathBuf {
    common.report.clone().unwrap_or_else(|| out_dir.join("report.jsonl"))
}

fn speech_seconds(speech: &[Segment]) -> f64 {
    speech.iter().map(Segment::duration).sum()
}

fn read_regions(dir: &Path, id: &str) -> anyhow::Result<Vec<Segment>> {
    let p = dir.join(format!("{id}.lab"));
    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
    Ok(parse_speech_regions(&text).with_context(|| format!("in {}", p.display()))?)
}

fn regions_text(speech: &[Segment]) -> String {
    speech.iter().map(|s| format!("{:.3} {:.3}\n", s.start_s, s.end_s)).collect()
}

fn timings(t: &[(String, f64)]) -> Value {
    Value::Object(t.iter().map(|(k, v)| (k.clone(), json!(v))).collect())
}

/// Prints `<id>\t<CTS|NCTS>\t<peak>` per recording; 8 kHz input is narrowband
/// without measurement and shows `NA`.
pub fn partition(input: &Path, common: &Common) -> anyhow::Result<bool> {
    let cfg = common.pipeline_config()?;
    let inputs = wav_inputs(input)?;
    let records = run_all(&inputs, common, |p, _| {
        let buf = read_wav(p)?;
        let (band, peak) = classify(&buf, &cfg)?;
        Ok(json!({ "class": band.to_string(), "peak_above_4k": peak, "sample_rate": buf.sample_rate() }))
    })?;
    for r in &records {
        let id = r["recording"].as_str().unwrap_or_default();
        match r["class"].as_str() {
            Some(class) => {
                let peak = r["peak_above_4k"].as_f64().map_or("NA".to_string(), |p| format!("{p:.6}"));
                println!("{id}\t{class}\t{peak}");
            }
            None => eprintln!("{id}: {}", r["error"].as_str().unwrap_or("failed")),
        }
    }
    if let Some(p) = &common.report {
        write_report(p, &records)?;
    }
    Ok(all_ok(&records))
}

/// Prints `<id> <start> <end>` per speech region and writes `<id>.lab`
/// (`<start> <end>` lines) for reuse as external speech regions.
pub fn vad(input: &Path, out_dir: &Path, common: &Common) -> anyhow::Result<bool> {
    let cfg = common.pipeline_config()?;
    let scorer = load_vad(&cfg, common.stub_embeddings)?;
    std::fs::create_dir_all(out_dir)?;
    let inputs = wav_inputs(input)?;
    let records = run_all(&inputs, common, |p, id| {
        let buf = read_wav(p)?;
        let (band, _) = classify(&buf, &cfg)?;
        let speech = detect_speech(&working_audio(&buf, band)?, &cfg, scorer.as_ref())?;
        let out = out_dir.join(format!("{id}.lab"));
        write_atomic(&out, regions_text(&speech).as_bytes())?;
        Ok(json!({
            "class": band.to_string(),
            "speech": speech.iter().map(|s| [s.start_s, s.end_s]).collect::<Vec<_>>(),
            "regions": speech.len(),
            "speech_s": speech_seconds(&speech),
            "output": out.display().to_string(),
        }))
    })?;
    for r in &records {
        let id = r["recording"].as_str().unwrap_or_default();
        for seg in r["speech"].as_array().into_iter().flatten() {
            println!("{id} {:.3} {:.3}", seg[0].as_f64().unwrap_or(0.0), seg[1].as_f64().unwrap_or(0.0));
        }
    }
    write_report(&report_path(common, out_dir), &records)?;
    Ok(all_ok(&records))
}

/// Task 1 when `speech_dir` supplies the speech regions, task 2 otherwise.
pub fn diarize(input: &Path, out_dir: &Path, speech_dir: Option<&Path>, common: &Common) -> anyhow::Result<bool> {
    let cfg = common.pipeline_config()?;
    let backends = Backends::load(&cfg, common.stub_embeddings, speech_dir.is_none())?;
    std::fs::create_dir_all(out_dir)?;
    let inputs = wav_inputs(input)?;
    info!("diarizing {} recording(s) with {}", inputs.len(), backends.names.join(", "));
    let records = run_all(&inputs, common, |p, id| {
        let buf = read_wav(p)?;
        let speech = speech_dir.map(|d| read_regions(d, id)).transpose()?;
        let out = pipeline::diarize(&buf, id, &cfg, &backends, speech.as_deref())?;
        let path = out_dir.join(format!("{id}.rttm"));
        write_atomic(&path, emit_rttm(&diarization_to_rttm(&out.diarization)).as_bytes())?;
        Ok(json!({
            "task": if speech_dir.is_some() { 1 } else { 2 },
            "class": out.band.to_string(),
            "peak_above_4k": out.peak_above_4k,
            "sample_rate": buf.sample_rate(),
            "duration_s": buf.duration_s(),
            "vad_loaded": backends.vad.is_some(),
            "backends": backends.names,
            "speech_s": speech_seconds(&out.speech),
            "segments": out.segments,
            "skipped_segments": out.skipped_segments,
            "clusters": out.clusters,
            "speakers": out.diarization.speakers().len(),
            "rounds": out.rounds,
            "warnings": out.warnings,
            "timings": timings(&out.timings),
            "output": path.display().to_string(),
        }))
    })?;
    write_report(&report_path(common, out_dir), &records)?;
    Ok(all_ok(&records))
}

pub fn tsvad(input: &Path, init: &Path, out_dir: &Path, speech_dir: Option<&Path>, common: &Common) -> anyhow::Result<bool> {
    let mut cfg: PipelineConfig = common.pipeline_config()?;
    // only the embedder and the detector are used here
    cfg.ncts_scorer = PairScoring::Cosine;
    let backends = Backends::load(&cfg, common.stub_embeddings, false)?;
    let initial: BTreeMap<_, _> = read_rttm_tree(init)?
        .into_values()
        .flat_map(|turns| rttm_to_diarizations(&turns))
        .collect();
    std::fs::create_dir_all(out_dir)?;
    let inputs = wav_inputs(input)?;
    let records = run_all(&inputs, common, |p, id| {
        let first = initial
            .get(id)
            .ok_or_else(|| anyhow!("no initial RTTM turns for {id}"))?;
        let buf = read_wav(p)?;
        // TSVAD runs on narrowband audio whatever the source rate
        let audio = working_audio(&buf, diarkit::bandwidth::Band::Cts)?;
        let speech = match speech_dir {
            Some(d) => read_regions(d, id)?,
            None => union(&first.turns.iter().map(|t| t.segment).collect::<Vec<_>>()),
        };
        let out = run_rounds(&audio, first, &speech, backends.detector.as_ref(), backends.embedder.as_ref(), &cfg.tsvad)?;
        let path = out_dir.join(format!("{id}.rttm"));
        write_atomic(&path, emit_rttm(&diarization_to_rttm(&out.diarization)).as_bytes())?;
        Ok(json!({
            "backends": backends.names,
            "speakers": out.diarization.speakers().len(),
            "rounds": out.rounds,
            "warnings": out.warning.into_iter().collect::<Vec<_>>(),
            "output": path.display().to_string(),
        }))
    })?;
    write_report(&report_path(common, out_dir), &records)?;
    Ok(all_ok(&records))
}
