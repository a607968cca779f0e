//! Helpers shared by the integration tests: running the binary, building
//! mini-corpus workspaces and count-based reference scoring.

#![allow(dead_code)]

pub mod checks;
#[path = "../../../core/tests/oracles/mod.rs"]
pub mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// A scratch directory under the target dir, emptied first.
pub fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn daldall<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_daldall")).args(args).output().unwrap();
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Runs the binary and panics with its stderr on a non-zero exit.
pub fn ok<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    let out = daldall(args);
    assert_eq!(out.code, 0, "daldall {:?} failed:\n{}", args.iter().map(|a| a.as_ref().to_owned()).collect::<Vec<_>>(), out.stderr);
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Style {
    Coliee,
    Clerc,
}

impl Style {
    pub fn name(self) -> &'static str {
        match self {
            Style::Coliee => "coliee",
            Style::Clerc => "clerc",
        }
    }

    pub fn source_format(self) -> &'static str {
        match self {
            Style::Coliee => "coliee_like",
            Style::Clerc => "clerc_like",
        }
    }

    pub fn config(self) -> PathBuf {
        fixtures().join("mini").join(format!("{}.toml", self.name()))
    }
}

/// Writes the seed-42 mini-corpus in the style's source layout.
pub fn mini_source(dir: &Path, style: Style) -> PathBuf {
    let src = dir.join("src");
    ok(&[
        "gen-minicorpus".as_ref(),
        "--out".as_ref(),
        src.as_os_str(),
        "--style".as_ref(),
        style.source_format().as_ref(),
        "--format".as_ref(),
        style.source_format().as_ref(),
    ]);
    src
}

/// Copy of the style's config with the LLM client switched to replay over
/// `transcripts`.
pub fn replay_config(dir: &Path, style: Style, transcripts: &Path) -> PathBuf {
    let mut table: toml::Table = fs::read_to_string(style.config()).unwrap().parse().unwrap();
    let llm = table.get_mut("llm").unwrap().as_table_mut().unwrap();
    llm.insert("client".into(), "replay".into());
    llm.insert("transcripts".into(), transcripts.to_str().unwrap().into());
    llm.insert("few_shot".into(), fixtures().join("few_shot.json").to_str().unwrap().into());
    let path = dir.join("replay.toml");
    fs::write(&path, toml::to_string(&table).unwrap()).unwrap();
    path
}

/// Runs the whole pipeline and returns the workspace.
pub fn pipeline(dir: &Path, style: Style, config: &Path) -> PathBuf {
    let src = mini_source(dir, style);
    let ws = dir.join("ws");
    ok(&[
        "pipeline".as_ref(),
        "-q".as_ref(),
        "-w".as_ref(),
        ws.as_os_str(),
        "-c".as_ref(),
        config.as_os_str(),
        "--in".as_ref(),
        src.as_os_str(),
    ]);
    ws
}

pub fn read_jsonl(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// BM25 reference over precomputed term counts. Every query token
/// occurrence contributes `idf * tf (k1 + 1) / (tf + k1 (1 - b + b |d| / avgdl))`.
pub struct CountBm25 {
    pub ids: Vec<String>,
    pub tf: Vec<BTreeMap<String, usize>>,
    pub len: Vec<usize>,
    pub df: BTreeMap<String, usize>,
}

impl CountBm25 {
    pub fn new(docs: &[(String, Vec<String>)]) -> Self {
        let mut tf = Vec::new();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for (_, toks) in docs {
            let mut m: BTreeMap<String, usize> = BTreeMap::new();
            for t in toks {
                *m.entry(t.clone()).or_default() += 1;
            }
            for t in m.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            tf.push(m);
        }
        Self {
            ids: docs.iter().map(|d| d.0.clone()).collect(),
            len: docs.iter().map(|d| d.1.len()).collect(),
            tf,
            df,
        }
    }

    pub fn scores(&self, query: &[String], k1: f64, b: f64) -> Vec<f64> {
        let n = self.ids.len() as f64;
        let avgdl = self.len.iter().sum::<usize>() as f64 / n;
        (0..self.ids.len())
            .map(|d| {
                let mut s = 0.0;
                for t in query {
                    let Some(&tf) = self.tf[d].get(t) else { continue };
                    let df = self.df[t] as f64;
                    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                    let tf = tf as f64;
                    s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * self.len[d] as f64 / avgdl));
                }
                s
            })
            .collect()
    }

    /// Ids by descending score, ties by ascending id; zero scores dropped.
    pub fn ranking(&self, query: &[String]) -> Vec<(String, f64)> {
        let scores = self.scores(query, 1.2, 0.75);
        let mut all: Vec<(String, f64)> =
            self.ids.iter().cloned().zip(scores).filter(|(_, s)| *s > 0.0).collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        all
    }
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}
