use std::path::PathBuf;

use clap::Args;
use diarkit::eval::{diarization_to_rttm, emit_rttm};
use diarkit::segment::union;
use diarkit::synth::{gen_audio_conversation, SynthSpec};

use crate::files::{write_atomic, write_wav_atomic};

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of recordings.
    #[arg(long, default_value_t = 4)]
    count: usize,
    /// Seed of the first recording; recording i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    speakers: usize,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Target share of speech time with two speakers active.
    #[arg(long, default_value_t = 0.1)]
    overlap: f64,
    /// Standard deviation of added white noise (0 keeps the audio narrowband).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value = "synth")]
    prefix: String,
}

/// Writes `<prefix><i>.wav`, its reference `.rttm` and its speech `.lab`.
pub fn run(args: &SynthArgs) -> anyhow::Result<bool> {
    std::fs::create_dir_all(&args.out_dir)?;
    for i in 0..args.count {
        let id = format!("{}{:03}", args.prefix, i);
        let spec = SynthSpec {
            n_speakers: args.speakers,
            duration_s: args.duration,
            overlap_fraction: args.overlap,
            noise_sigma: args.noise,
            seed: args.seed + i as u64,
            ..SynthSpec::default()
        };
        let (audio, reference) = gen_audio_conversation(&spec, &id)?;
        let speech = union(&reference.turns.iter().map(|t| t.segment).collect::<Vec<_>>());
        let lab: String = speech.iter().map(|s| format!("{:.3} {:.3}\n", s.start_s, s.end_s)).collect();
        write_wav_atomic(&args.out_dir.join(format!("{id}.wav")), &audio)?;
        write_atomic(&args.out_dir.join(format!("{id}.rttm")), emit_rttm(&diarization_to_rttm(&reference)).as_bytes())?;
        write_atomic(&args.out_dir.join(format!("{id}.lab")), lab.as_bytes())?;
    }
    Ok(true)
}
