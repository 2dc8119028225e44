mod batch;
mod files;
mod score;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use diarkit::config::PipelineConfig;

/// Speaker diarization: bandwidth partition, VAD, clustering, TSVAD rounds and
/// DER scoring.
#[derive(Parser)]
#[command(name = "diarkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify recordings as narrowband (CTS) or wideband (NCTS).
    Partition {
        /// A WAV file or a directory of them.
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Detect speech and write `<id>.lab` region files.
    Vad {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Full diarization; writes `<id>.rttm` per recording plus a JSON-lines report.
    Diarize {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Directory of `<id>.lab` speech regions; when given, no VAD is run.
        #[arg(long)]
        speech_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Refine existing RTTM output with TSVAD rounds.
    Tsvad {
        input: PathBuf,
        /// Initial RTTM: one file or a directory of them.
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Speech regions; defaults to the union of the initial turns.
        #[arg(long)]
        speech_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Diarization error rate of hypothesis RTTM against reference RTTM.
    Score(score::ScoreArgs),
    /// Write synthetic tone-coded conversations as WAV + RTTM + LAB triples.
    Synth(synth::SynthArgs),
}

#[derive(Args, Clone)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Use weight-free tone stand-ins instead of trained networks.
    #[arg(long)]
    stub_embeddings: bool,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Report path; defaults to `report.jsonl` in the output directory.
    #[arg(long)]
    report: Option<PathBuf>,
}

impl Common {
    fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                PipelineConfig::from_text(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => PipelineConfig::default(),
        };
        for o in &self.overrides {
            let Some((k, v)) = o.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {o:?}");
            };
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn pool(&self) -> anyhow::Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.jobs).build()?)
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Partition { input, common } => batch::partition(&input, &common),
        Command::Vad { input, out_dir, common } => batch::vad(&input, &out_dir, &common),
        Command::Diarize {
            input,
            out_dir,
            speech_dir,
            common,
        } => batch::diarize(&input, &out_dir, speech_dir.as_deref(), &common),
        Command::Tsvad {
            input,
            init,
            out_dir,
            speech_dir,
            common,
        } => batch::tsvad(&input, &init, &out_dir, speech_dir.as_deref(), &common),
        Command::Score(args) => score::run(&args),
        Command::Synth(args) => synth::run(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        // some recordings failed; the rest were written
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
