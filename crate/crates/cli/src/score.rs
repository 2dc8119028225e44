use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use diarkit::eval::{compute_der, parse_uem, rttm_to_diarizations, DerOptions, DerReport};
use diarkit::segment::{Diarization, Segment};
use log::warn;

use crate::files::read_rttm_tree;

#[derive(Args)]
pub struct ScoreArgs {
    /// Reference RTTM file or directory.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Hypothesis RTTM file or directory.
    #[arg(long)]
    hyp: PathBuf,
    /// Restrict scoring to the listed regions.
    #[arg(long)]
    uem: Option<PathBuf>,
    /// Unscored half-width around reference boundaries, in seconds.
    #[arg(long, default_value_t = 0.0)]
    collar: f64,
    /// Ignore frames where the reference has overlapping speakers.
    #[arg(long)]
    skip_overlap: bool,
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn line(name: &str, r: &DerReport) -> String {
    format!(
        "{name}\tDER {}\tmiss {}\tfa {}\tconf {}\tref {:.2}s",
        pct(r.der),
        pct(r.miss),
        pct(r.false_alarm),
        pct(r.confusion),
        r.total_ref_s
    )
}

fn diarizations(path: &PathBuf) -> anyhow::Result<BTreeMap<String, Diarization>> {
    Ok(read_rttm_tree(path)?
        .into_values()
        .flat_map(|t| rttm_to_diarizations(&t))
        .collect())
}

/// Every reference recording is scored; a recording with no hypothesis turns
/// scores as all miss. Returns false when any recording could not be scored.
pub fn run(args: &ScoreArgs) -> anyhow::Result<bool> {
    let opts = DerOptions {
        collar_s: args.collar,
        score_overlap: !args.skip_overlap,
        ..DerOptions::default()
    };
    let refs = diarizations(&args.reference)?;
    let hyps = diarizations(&args.hyp)?;
    let uem: Option<BTreeMap<String, Vec<Segment>>> = match &args.uem {
        Some(p) => Some(parse_uem(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
        None => None,
    };
    for id in hyps.keys().filter(|id| !refs.contains_key(*id)) {
        warn!("{id}: hypothesis has no reference; ignored");
    }
    let mut reports = Vec::new();
    let mut ok = true;
    for (id, r) in &refs {
        let empty = Diarization::new(id.as_str());
        let h = hyps.get(id).unwrap_or(&empty);
        let region = match &uem {
            Some(u) => match u.get(id) {
                Some(s) => Some(s.as_slice()),
                None => {
                    eprintln!("{id}: not in UEM");
                    ok = false;
                    continue;
                }
            },
            None => None,
        };
        match compute_der(r, h, &opts, region) {
            Ok(rep) => {
                println!("{}", line(id, &rep));
                reports.push(rep);
            }
            Err(e) => {
                eprintln!("{id}: {e}");
                ok = false;
            }
        }
    }
    if !reports.is_empty() {
        println!("{}", line("OVERALL", &DerReport::aggregate(&reports)?));
    }
    Ok(ok)
}
