//! Workspace pipeline, file formats, model clients and CLI around
//! `daldall-core`.

pub mod cli;
pub mod config;
pub mod embedders;
pub mod error;
pub mod formats;
pub mod ingest;
pub mod llm;
pub mod minicorpus;
pub mod report;
pub mod stages;
pub mod workspace;

pub use error::{Error, Result};
