use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use diarkit::eval::{parse_rttm, RttmTurn};

/// WAV files named by `input`: the file itself, or a directory's `*.wav` in name order.
pub fn wav_inputs(input: &Path) -> anyhow::Result<Vec<PathBuf>> {
    files_with_ext(input, "wav")
}

pub fn files_with_ext(input: &Path, ext: &str) -> anyhow::Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        bail!("{} does not exist", input.display());
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("listing {}", input.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    out.retain(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)));
    out.sort();
    Ok(out)
}

/// Recording id: the file name without its extension.
pub fn recording_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Write through a temporary file in the same directory and rename into place,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = parent_dir(path);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_wav_atomic(path: &Path, audio: &diarkit::dsp::AudioBuffer) -> anyhow::Result<()> {
    let tmp = tempfile::Builder::new()
        .suffix(".wav")
        .tempfile_in(parent_dir(path))?
        .into_temp_path();
    diarkit::dsp::write_wav(&tmp, audio)?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// All RTTM turns under `path` (a file or a directory of `*.rttm`), grouped by recording.
pub fn read_rttm_tree(path: &Path) -> anyhow::Result<BTreeMap<String, Vec<RttmTurn>>> {
    let mut out: BTreeMap<String, Vec<RttmTurn>> = BTreeMap::new();
    for f in files_with_ext(path, "rttm")? {
        let text = std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        for t in parse_rttm(&text).with_context(|| format!("in {}", f.display()))? {
            out.entry(t.file_id.clone()).or_default().push(t);
        }
    }
    Ok(out)
}
