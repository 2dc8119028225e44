use std::io::{Cursor, Read};
use std::path::Path;

use super::AudioBuffer;
use crate::error::{Error, Result};

const PCM16_SCALE: f64 = 32768.0;

/// Read a RIFF/WAVE file holding 16-bit mono PCM at 8 or 16 kHz.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_wav_bytes(&bytes)
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<AudioBuffer> {
    decode(Cursor::new(bytes))
}

fn decode<R: Read>(reader: R) -> Result<AudioBuffer> {
    let reader = hound::WavReader::new(reader).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels; only mono is accepted",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{:?} {}-bit samples; only 16-bit PCM is accepted",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.sample_rate != 8000 && spec.sample_rate != 16000 {
        return Err(Error::UnsupportedFormat(format!(
            "sample rate {} Hz; expected 8000 or 16000",
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM16_SCALE).map_err(map_hound))
        .collect::<Result<Vec<f64>>>()?;
    Ok(AudioBuffer::from_parts_unchecked(samples, spec.sample_rate))
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Format(format!("truncated or unreadable data: {io}")),
        hound::Error::FormatError(msg) => Error::Format(msg.to_string()),
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported WAVE encoding".into()),
        other => Error::Format(other.to_string()),
    }
}

/// Write 16-bit mono PCM. Samples are rounded and saturated to the i16 range.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(other.to_string()),
    })?;
    for &s in audio.samples() {
        let v = (s * PCM16_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer
            .write_sample(v)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    writer
        .finalize()
        .map_err(|e| Error::Format(e.to_string()))
}
