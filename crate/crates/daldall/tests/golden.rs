//! Replaying the recorded LLM exchanges reproduces the golden reports.
//! `DALDALL_UPDATE_GOLDEN=1` regenerates them from a synthetic-client run.

mod common;

use std::fs;
use std::path::PathBuf;

use common::Style;

const FILES: [&str; 3] = ["transcripts.jsonl", "report.txt", "report.json"];

fn golden_dir(style: Style) -> PathBuf {
    common::fixtures().join("golden").join(style.name())
}

fn regenerate(style: Style) {
    let dir = common::scratch(&format!("golden-record-{}", style.name()));
    let ws = common::pipeline(&dir, style, &style.config());
    let out = golden_dir(style);
    fs::create_dir_all(&out).unwrap();
    fs::copy(ws.join("transcripts/transcripts.jsonl"), out.join(FILES[0])).unwrap();
    fs::copy(ws.join("reports/report.txt"), out.join(FILES[1])).unwrap();
    fs::copy(ws.join("reports/report.json"), out.join(FILES[2])).unwrap();
}

fn replay_matches(style: Style) {
    if std::env::var_os("DALDALL_UPDATE_GOLDEN").is_some() {
        regenerate(style);
    }
    let golden = golden_dir(style);
    let dir = common::scratch(&format!("golden-replay-{}", style.name()));
    let cfg = common::replay_config(&dir, style, &golden.join(FILES[0]));
    let ws = common::pipeline(&dir, style, &cfg);
    for (name, got) in [
        ("report.txt", ws.join("reports/report.txt")),
        ("report.json", ws.join("reports/report.json")),
        ("transcripts.jsonl", ws.join("transcripts/transcripts.jsonl")),
    ] {
        let want = fs::read_to_string(golden.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(fs::read_to_string(got).unwrap(), want, "{} {name} drifted", style.name());
    }
}

#[test]
fn coliee_replay_reproduces_golden() {
    replay_matches(Style::Coliee);
}

#[test]
fn clerc_replay_reproduces_golden() {
    replay_matches(Style::Clerc);
}
