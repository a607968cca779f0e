//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use daldall_core::augment::{GenerationMode, Method};
use daldall_core::corpus::Split;
use daldall_core::diversity::Grouping;
use daldall_core::scoring::ScoreMethod;
use daldall_core::triplets::{ConfigName, NegativePolicy};
use serde::de::DeserializeOwned;

use crate::config::{ClientKind, Config, ProviderKind};
use crate::error::{Error, Result};
use crate::formats;
use crate::ingest::{self, SourceFormat};
use crate::minicorpus::{self, MiniStyle};
use crate::stages::{self, Outcome, QuerySet, RunOptions, Stage};
use crate::workspace::Workspace;

/// Snapshot of the effective config, reused when `--config` is omitted.
pub const CONFIG_SNAPSHOT: &str = "config.json";

/// Parses a snake_case serde enum name; dashes are accepted for underscores.
fn serde_name<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown value {s:?}"))
}

fn parse_grouping(s: &str) -> std::result::Result<Grouping, String> {
    serde_name(s)
}
fn parse_mode(s: &str) -> std::result::Result<GenerationMode, String> {
    serde_name(s)
}
fn parse_client(s: &str) -> std::result::Result<ClientKind, String> {
    serde_name(s)
}
fn parse_provider(s: &str) -> std::result::Result<ProviderKind, String> {
    serde_name(s)
}
fn parse_split(s: &str) -> std::result::Result<Split, String> {
    serde_name(s)
}
fn parse_query_set(s: &str) -> std::result::Result<QuerySet, String> {
    serde_name(s)
}
fn parse_style(s: &str) -> std::result::Result<MiniStyle, String> {
    serde_name(s)
}

#[derive(Debug, Parser)]
#[command(name = "daldall", version, about = "Persona-conditioned legal query augmentation and retrieval evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Workspace directory.
    #[arg(long, short = 'w', visible_alias = "out")]
    pub workspace: PathBuf,
    /// Config file (TOML). Defaults to the workspace snapshot, then built-in defaults.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Rerun even when the stage is up to date.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress progress notices.
    #[arg(long, short = 'q')]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a source corpus into the workspace in canonical form.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        format: Option<SourceFormat>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
        /// Keep a uniform sample of N queries.
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Cut documents and queries into token windows.
    Chunk {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        overlap: Option<usize>,
        /// Keep each query as a single chunk.
        #[arg(long)]
        whole_queries: bool,
    },
    /// Extract the essentials of every query.
    Essentials {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Generate rewrites of every query.
    Augment {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        llm: LlmArgs,
        #[arg(long, value_delimiter = ',')]
        method: Vec<Method>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        persona_set: Option<usize>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<GenerationMode>,
    },
    /// Diversity metrics over the augmentations.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_grouping)]
        group: Option<Grouping>,
        #[arg(long)]
        sections: Option<usize>,
    },
    /// Build the BM25 index.
    #[command(name = "index-sparse", visible_alias = "index")]
    IndexSparse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
    },
    /// BM25 retrieval and recall.
    EvalSparse {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_query_set)]
        queries: Vec<QuerySet>,
    },
    /// Embed every chunk and augmentation.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_provider)]
        provider: Option<ProviderKind>,
        #[arg(long)]
        dim: Option<usize>,
        /// Embedding file for the file provider.
        #[arg(long)]
        path: Option<PathBuf>,
    },
    /// Dense retrieval and recall.
    EvalDense {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<ScoreMethod>,
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_query_set)]
        queries: Vec<QuerySet>,
    },
    /// Build training triplets. `--config` takes training configuration
    /// names here as well as the config file.
    Triplets {
        #[arg(long, short = 'w')]
        workspace: PathBuf,
        /// Config file or training configuration name; repeatable.
        #[arg(long, short = 'c', value_delimiter = ',')]
        config: Vec<String>,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short = 'q')]
        quiet: bool,
        #[arg(long)]
        i: Option<usize>,
        #[arg(long)]
        negatives: Option<NegativePolicy>,
        #[arg(long)]
        target_size: Option<usize>,
        /// Also write the export here (one configuration only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate whatever the workspace has evaluated.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// Run every stage in order.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        format: Option<SourceFormat>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Validate an embedding file.
    CheckEmbeddings { file: PathBuf },
    /// Write the seeded synthetic mini-corpus in a source layout.
    GenMinicorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_parser = parse_style, default_value = "coliee_like")]
        style: MiniStyle,
        #[arg(long, default_value = "canonical")]
        format: SourceFormat,
    },
}

#[derive(Debug, Clone, Args)]
pub struct LlmArgs {
    #[arg(long, value_parser = parse_client)]
    pub client: Option<ClientKind>,
    /// Transcript file for the replay client.
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
}

fn load_config(workspace: &Path, file: Option<&Path>) -> Result<Config> {
    if let Some(f) = file {
        return Config::load(f);
    }
    let snap = workspace.join(CONFIG_SNAPSHOT);
    if snap.exists() {
        let text = formats::read_to_string(&snap)?;
        let c: Config = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", snap.display())))?;
        c.validate()?;
        return Ok(c);
    }
    Ok(Config::default())
}

fn save_snapshot(ws: &Workspace, cfg: &Config) -> Result<()> {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    formats::write_atomic(&ws.path(CONFIG_SNAPSHOT), s.as_bytes())
}

fn apply_llm(cfg: &mut Config, llm: &LlmArgs) {
    if let Some(c) = llm.client {
        cfg.llm.client = c;
    }
    if let Some(t) = &llm.transcripts {
        cfg.llm.transcripts = Some(t.clone());
    }
}

fn run_in_workspace(common: &Common, stage: Option<Stage>, edit: impl FnOnce(&mut Config), opts: RunOptions) -> Result<()> {
    let mut cfg = load_config(&common.workspace, common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    edit(&mut cfg);
    cfg.validate()?;
    let mut ws = Workspace::open(&common.workspace)?;
    save_snapshot(&ws, &cfg)?;
    let opts = RunOptions {
        force: common.force,
        quiet: common.quiet,
        ..opts
    };
    match stage {
        Some(s) => {
            stages::run_stage(&mut ws, &cfg, s, &opts)?;
        }
        None => {
            let done = stages::run_pipeline(&mut ws, &cfg, &opts)?;
            if !common.quiet {
                let ran = done.iter().filter(|(_, o)| *o == Outcome::Ran).count();
                eprintln!("pipeline: {ran} stage(s) ran, {} skipped", done.len() - ran);
            }
        }
    }
    if stage == Some(Stage::Report) && !common.quiet {
        print!("{}", formats::read_to_string(&ws.path(stages::REPORT_TXT))?);
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            common,
            format,
            input,
            name,
            split,
            sample,
        } => run_in_workspace(
            &common,
            Some(Stage::Ingest),
            |c| {
                if let Some(f) = format {
                    c.corpus.format = f;
                }
                if let Some(i) = input {
                    c.corpus.source = Some(i);
                }
                if name.is_some() {
                    c.corpus.name = name;
                }
                if let Some(s) = split {
                    c.corpus.split = s;
                }
                if sample.is_some() {
                    c.corpus.sample = sample;
                }
            },
            RunOptions::default(),
        ),
        Command::Chunk {
            common,
            size,
            overlap,
            whole_queries,
        } => run_in_workspace(
            &common,
            Some(Stage::Chunk),
            |c| {
                if let Some(s) = size {
                    c.chunk.size = s;
                }
                if let Some(o) = overlap {
                    c.chunk.overlap = o;
                }
                if whole_queries {
                    c.chunk.chunk_queries = false;
                }
            },
            RunOptions::default(),
        ),
        Command::Essentials { common, llm } => {
            run_in_workspace(&common, Some(Stage::Essentials), |c| apply_llm(c, &llm), RunOptions::default())
        }
        Command::Augment {
            common,
            llm,
            method,
            count,
            persona_set,
            mode,
        } => run_in_workspace(
            &common,
            Some(Stage::Augment),
            |c| {
                apply_llm(c, &llm);
                if !method.is_empty() {
                    c.augment.methods = method;
                }
                if let Some(n) = count {
                    c.augment.count = n;
                }
                if let Some(p) = persona_set {
                    c.augment.persona_set = p;
                }
                if let Some(m) = mode {
                    c.llm.mode = m;
                }
            },
            RunOptions::default(),
        ),
        Command::Metrics { common, group, sections } => run_in_workspace(
            &common,
            Some(Stage::Metrics),
            |c| {
                if let Some(g) = group {
                    c.metrics.group = g;
                }
                if let Some(s) = sections {
                    c.metrics.sections = s;
                }
            },
            RunOptions::default(),
        ),
        Command::IndexSparse { common, k1, b } => run_in_workspace(
            &common,
            Some(Stage::Index),
            |c| {
                if let Some(k) = k1 {
                    c.bm25.k1 = k;
                }
                if let Some(b) = b {
                    c.bm25.b = b;
                }
            },
            RunOptions::default(),
        ),
        Command::EvalSparse { common, ks, queries } => run_in_workspace(
            &common,
            Some(Stage::EvalSparse),
            |c| {
                if !ks.is_empty() {
                    c.sparse.ks = ks;
                }
            },
            RunOptions {
                query_sets: (!queries.is_empty()).then_some(queries),
                ..RunOptions::default()
            },
        ),
        Command::Embed {
            common,
            provider,
            dim,
            path,
        } => run_in_workspace(
            &common,
            Some(Stage::Embed),
            |c| {
                if let Some(p) = provider {
                    c.embed.provider = p;
                }
                if let Some(d) = dim {
                    c.embed.dim = d;
                }
                if path.is_some() {
                    c.embed.path = path;
                }
            },
            RunOptions::default(),
        ),
        Command::EvalDense {
            common,
            method,
            ks,
            queries,
        } => run_in_workspace(
            &common,
            Some(Stage::EvalDense),
            |c| {
                if let Some(m) = method {
                    c.dense.method = m;
                }
                if !ks.is_empty() {
                    c.dense.ks = ks;
                }
            },
            RunOptions {
                query_sets: (!queries.is_empty()).then_some(queries),
                ..RunOptions::default()
            },
        ),
        Command::Triplets {
            workspace,
            config,
            force,
            seed,
            quiet,
            i,
            negatives,
            target_size,
            out,
        } => {
            let (file, names) = split_config_args(&config)?;
            let common = Common {
                workspace,
                config: file,
                force,
                seed,
                quiet,
            };
            run_in_workspace(
                &common,
                Some(Stage::Triplets),
                |c| {
                    if !names.is_empty() {
                        c.triplets.configs = names;
                    }
                    if i.is_some() {
                        c.triplets.i = i;
                    }
                    if let Some(n) = negatives {
                        c.triplets.negatives = n;
                    }
                    if target_size.is_some() {
                        c.triplets.target_size = target_size;
                    }
                },
                RunOptions {
                    triplets_out: out,
                    ..RunOptions::default()
                },
            )
        }
        Command::Report { common } => run_in_workspace(&common, Some(Stage::Report), |_| {}, RunOptions::default()),
        Command::Pipeline { common, format, input } => run_in_workspace(
            &common,
            None,
            |c| {
                if let Some(f) = format {
                    c.corpus.format = f;
                }
                if let Some(i) = input {
                    c.corpus.source = Some(i);
                }
            },
            RunOptions::default(),
        ),
        Command::CheckEmbeddings { file } => {
            let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
            let summary = formats::check_embeddings(&bytes).map_err(|m| Error::Format(format!("{}: {m}", file.display())))?;
            println!("ok: {} vectors of dimension {}", summary.count, summary.dim);
            Ok(())
        }
        Command::GenMinicorpus {
            out,
            seed,
            style,
            format,
        } => {
            let (corpus, manifest) = minicorpus::generate(seed, style)?;
            ingest::write_source(&out, &corpus, format)?;
            let mut m = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            m.push('\n');
            formats::write_atomic(&out.join("minicorpus.json"), m.as_bytes())?;
            println!(
                "wrote {} documents and {} queries to {}",
                corpus.documents().len(),
                corpus.queries().len(),
                out.display()
            );
            Ok(())
        }
    }
}

/// Separates training configuration names from a config file path among
/// `--config` values given to `triplets`.
pub fn split_config_args(values: &[String]) -> Result<(Option<PathBuf>, Vec<ConfigName>)> {
    let mut file = None;
    let mut names = Vec::new();
    for v in values {
        match v.parse::<ConfigName>() {
            Ok(n) => names.push(n),
            Err(_) => {
                if file.replace(PathBuf::from(v)).is_some() {
                    return Err(Error::Config("more than one config file given".into()));
                }
            }
        }
    }
    Ok((file, names))
}
