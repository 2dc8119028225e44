use std::path::Path;
use std::process::{Command, Output};

fn diarkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diarkit")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, count: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--out-dir", s(dir), "--count", count, "--duration", "15"];
    args.extend_from_slice(extra);
    assert!(diarkit(&args).status.success());
}

fn report(dir: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(dir.join("report.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn empty_directory_is_a_successful_empty_run() {
    let t = tempfile::tempdir().unwrap();
    let input = t.path().join("in");
    std::fs::create_dir(&input).unwrap();
    let out = t.path().join("out");
    let r = diarkit(&["diarize", s(&input), "--out-dir", s(&out), "--stub-embeddings"]);
    assert!(r.status.success());
    assert_eq!(std::fs::read_to_string(out.join("report.jsonl")).unwrap(), "");
}

#[test]
fn missing_weights_is_a_configuration_error() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "1", &[]);
    let r = diarkit(&["diarize", s(t.path()), "--out-dir", s(&t.path().join("o"))]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("configuration error"));
}

#[test]
fn bad_file_fails_alone_with_exit_code_2() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "1", &[]);
    std::fs::write(t.path().join("broken.wav"), b"not a wave file").unwrap();
    let out = t.path().join("o");
    let r = diarkit(&["diarize", s(t.path()), "--out-dir", s(&out), "--stub-embeddings"]);
    assert_eq!(r.status.code(), Some(2));
    let rep = report(&out);
    assert_eq!(rep.len(), 2);
    assert_eq!(rep[0]["recording"], "broken");
    assert_eq!(rep[0]["status"], "error");
    assert_eq!(rep[1]["status"], "ok");
    assert!(out.join("synth000.rttm").exists());
    assert!(!out.join("broken.rttm").exists());
}

#[test]
fn task1_loads_no_vad_and_report_says_so() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "1", &["--seed", "5"]);
    let out = t.path().join("o");
    let r = diarkit(&["diarize", s(t.path()), "--out-dir", s(&out), "--stub-embeddings", "--speech-dir", s(t.path())]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rep = report(&out);
    assert_eq!(rep[0]["task"], 1);
    assert_eq!(rep[0]["vad_loaded"], false);
    assert!(!rep[0]["backends"].as_array().unwrap().iter().any(|b| b.as_str().unwrap().starts_with("vad=")));
    assert_eq!(rep[0]["class"], "CTS");
    assert!(rep[0]["rounds"].as_u64().unwrap() >= 1);
}

#[test]
fn task1_with_the_vad_mask_matches_task2() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("d");
    synth(&data, "2", &["--seed", "8"]);
    let (vad, a, b) = (t.path().join("vad"), t.path().join("a"), t.path().join("b"));
    assert!(diarkit(&["vad", s(&data), "--out-dir", s(&vad), "--stub-embeddings"]).status.success());
    assert!(diarkit(&["diarize", s(&data), "--out-dir", s(&a), "--stub-embeddings"]).status.success());
    // the .lab files carry 3 decimals, which is what the VAD produces on a 10 ms grid
    assert!(diarkit(&["diarize", s(&data), "--out-dir", s(&b), "--stub-embeddings", "--speech-dir", s(&vad)]).status.success());
    for id in ["synth000", "synth001"] {
        let f = format!("{id}.rttm");
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{id}");
    }
}

#[test]
fn score_prints_two_decimal_percentages_and_respects_uem() {
    let t = tempfile::tempdir().unwrap();
    let (r, h, u) = (t.path().join("ref.rttm"), t.path().join("hyp.rttm"), t.path().join("x.uem"));
    std::fs::write(&r, "SPEAKER rec 1 0.000 10.000 <NA> <NA> A <NA> <NA>\n").unwrap();
    std::fs::write(&h, "SPEAKER rec 1 0.000 8.000 <NA> <NA> Z <NA> <NA>\n").unwrap();
    std::fs::write(&u, "rec 1 0.0 8.0\n").unwrap();
    let out = diarkit(&["score", "--ref", s(&r), "--hyp", s(&h)]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("rec\tDER 20.00%\tmiss 20.00%"), "{text}");
    assert!(text.contains("OVERALL\tDER 20.00%"));
    let out = diarkit(&["score", "--ref", s(&r), "--hyp", s(&h), "--uem", s(&u)]);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("rec\tDER 0.00%"));
}

#[test]
fn overrides_are_validated() {
    let t = tempfile::tempdir().unwrap();
    synth(t.path(), "1", &[]);
    let o = s(t.path());
    for bad in ["median_taps=10", "no_such_key=1", "seed"] {
        let r = diarkit(&["diarize", o, "--out-dir", o, "--stub-embeddings", "--set", bad]);
        assert_eq!(r.status.code(), Some(1), "{bad}");
    }
    let cfg = t.path().join("c.conf");
    std::fs::write(&cfg, "tsvad_max_rounds = 1 # one pass\n").unwrap();
    let out = t.path().join("out");
    let r = diarkit(&["diarize", o, "--out-dir", s(&out), "--stub-embeddings", "--config", s(&cfg)]);
    assert!(r.status.success());
    assert_eq!(report(&out)[0]["rounds"], 1);
}

#[test]
fn partition_and_tsvad_subcommands() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("d");
    synth(&data, "1", &[]);
    synth(&data, "1", &["--noise", "0.5", "--prefix", "wide"]);
    let out = diarkit(&["partition", s(&data)]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("synth000\tCTS\t"));
    assert!(lines[1].starts_with("wide000\tNCTS\t"));

    // refine the reference itself: TSVAD should keep it close
    let tsv = t.path().join("ts");
    let clean = t.path().join("clean");
    std::fs::create_dir(&clean).unwrap();
    for ext in ["wav", "rttm"] {
        std::fs::copy(data.join(format!("synth000.{ext}")), clean.join(format!("synth000.{ext}"))).unwrap();
    }
    let r = diarkit(&["tsvad", s(&clean), "--init", s(&clean), "--out-dir", s(&tsv), "--stub-embeddings"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let score = diarkit(&["score", "--ref", s(&clean), "--hyp", s(&tsv)]);
    let text = String::from_utf8(score.stdout).unwrap();
    let der: f64 = text.split("DER ").nth(1).unwrap().split('%').next().unwrap().parse().unwrap();
    assert!(der < 5.0, "{text}");
}
