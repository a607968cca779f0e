use std::io;
use std::path::{Path, PathBuf};

use daldall_core::augment::AugmentError;
use daldall_core::bm25::Bm25Error;
use daldall_core::chunk::ChunkError;
use daldall_core::corpus::CorpusError;
use daldall_core::diversity::DiversityError;
use daldall_core::embed::EmbedError;
use daldall_core::eval::EvalError;
use daldall_core::scoring::ScoreError;
use daldall_core::triplets::TripletError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage} needs {needed} to be completed first")]
    Prerequisite { stage: String, needed: String },
    #[error("{stage}: {quarantined} of {total} queries quarantined (threshold {threshold})")]
    QuarantineThreshold {
        stage: String,
        quarantined: usize,
        total: usize,
        threshold: f64,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Malformed { path: PathBuf, line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("workspace {} is locked by another run (remove {} if stale)", .0.display(), .0.join(crate::workspace::LOCK_FILE).display())]
    Locked(PathBuf),
    #[error("nothing to report: no metric or evaluation stage has completed")]
    NothingToReport,
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Bm25(#[from] Bm25Error),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Triplet(#[from] TripletError),
    #[error(transparent)]
    Diversity(#[from] DiversityError),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Prerequisite { .. } | Error::NothingToReport => 3,
            Error::QuarantineThreshold { .. } => 4,
            _ => 1,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }
}
