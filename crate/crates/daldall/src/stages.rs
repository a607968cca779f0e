//! Pipeline stages over a workspace.
//!
//! Each stage derives a fingerprint from its effective settings and the
//! fingerprints of the stages it reads. A stage whose recorded fingerprint
//! matches is skipped unless forced.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Duration;

use daldall_core::augment::{
    augment, extract_essentials, AugmentError, AugmentedQuery, Essentials, LlmClient, Method, PromptSpec, Quarantine,
    RetryPolicy,
};
use daldall_core::bm25::{build_index, InvertedIndex};
use daldall_core::chunk::{chunk, Chunk};
use daldall_core::corpus::{Corpus, Split};
use daldall_core::diversity::{diversity_by_section, diversity_report, QueryAugmentations};
use daldall_core::embed::{aug_owner, doc_owner, embed, normalize, query_owner, EmbedInput, Embedder, EmbeddingStore, HashEmbedder};
use daldall_core::eval::{rank, recall_at_k, recall_per_source_first, Qrels, RecallTable, RetrievalRun};
use daldall_core::prompt::FewShotExample;
use daldall_core::scoring::{dense_run, DenseQuery};
use daldall_core::triplets::{anchor_counts, build_triplets, AnchorStyle, ConfigName, NegativePolicy, TrainConfig, TripletSources};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ClientKind, Config, ProviderKind, RecallAveraging};
use crate::embedders::{FileEmbedder, HttpEmbedder};
use crate::error::{Error, Result};
use crate::formats;
use crate::ingest::{self, SourceFormat};
use crate::llm::{HttpClient, Recorder, ReplayClient, SyntheticClient, Transcript};
use crate::report::{self, DiversitySummary, RecallRow, RecallSummary, TripletCounts, TripletSummary};
use crate::workspace::{StageRecord, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Chunk,
    Essentials,
    Augment,
    Metrics,
    Index,
    EvalSparse,
    Embed,
    EvalDense,
    Triplets,
    Report,
}

impl Stage {
    /// Pipeline order.
    pub const ALL: [Stage; 11] = [
        Stage::Ingest,
        Stage::Chunk,
        Stage::Essentials,
        Stage::Augment,
        Stage::Metrics,
        Stage::Index,
        Stage::EvalSparse,
        Stage::Embed,
        Stage::EvalDense,
        Stage::Triplets,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Chunk => "chunk",
            Stage::Essentials => "essentials",
            Stage::Augment => "augment",
            Stage::Metrics => "metrics",
            Stage::Index => "index",
            Stage::EvalSparse => "eval_sparse",
            Stage::Embed => "embed",
            Stage::EvalDense => "eval_dense",
            Stage::Triplets => "triplets",
            Stage::Report => "report",
        }
    }

    /// Stages that must have completed before this one runs.
    pub fn requires(&self) -> &'static [Stage] {
        match self {
            Stage::Ingest | Stage::Report => &[],
            Stage::Chunk | Stage::Essentials | Stage::Index => &[Stage::Ingest],
            Stage::Augment => &[Stage::Essentials],
            Stage::Metrics => &[Stage::Augment, Stage::Chunk],
            Stage::EvalSparse => &[Stage::Index],
            Stage::Embed => &[Stage::Chunk],
            Stage::EvalDense => &[Stage::Embed],
            Stage::Triplets => &[Stage::Embed],
        }
    }
}

/// Which queries an evaluation stage runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySet {
    Original,
    Vanilla,
    Persona,
}

impl QuerySet {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuerySet::Original => "original",
            QuerySet::Vanilla => "vanilla",
            QuerySet::Persona => "persona",
        }
    }

    fn method(&self) -> Option<Method> {
        match self {
            QuerySet::Original => None,
            QuerySet::Vanilla => Some(Method::Vanilla),
            QuerySet::Persona => Some(Method::Persona),
        }
    }
}

/// Per-invocation options that are not part of the config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub force: bool,
    /// Query sets for evaluation stages (all available when absent).
    pub query_sets: Option<Vec<QuerySet>>,
    /// Extra copy of the triplet export (single configuration only).
    pub triplets_out: Option<PathBuf>,
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

pub const CORPUS_DIR: &str = "corpus";
pub const DOC_CHUNKS: &str = "chunks/documents.jsonl";
pub const QUERY_CHUNKS: &str = "chunks/queries.jsonl";
pub const ESSENTIALS: &str = "essentials.jsonl";
pub const TRANSCRIPTS: &str = "transcripts/transcripts.jsonl";
pub const DIVERSITY_JSON: &str = "metrics/diversity.json";
pub const DIVERSITY_TXT: &str = "metrics/diversity.txt";
pub const INDEX: &str = "index/bm25.json";
pub const SPARSE_JSON: &str = "eval/sparse.json";
pub const DENSE_JSON: &str = "eval/dense.json";
pub const EMBEDDINGS: &str = "embeddings/baseline.emb";
pub const EMBED_INPUTS: &str = "embeddings/inputs.jsonl";
pub const TRIPLETS_JSON: &str = "triplets/summary.json";
pub const REPORT_TXT: &str = "reports/report.txt";
pub const REPORT_JSON: &str = "reports/report.json";

pub fn augmentations_file(method: Method) -> String {
    format!("augmentations/{}.jsonl", method.as_str())
}

pub fn quarantine_file(stage: &str) -> String {
    format!("quarantine/{stage}.jsonl")
}

pub fn triplets_file(config: ConfigName) -> String {
    format!("triplets/{}.jsonl", config.as_str())
}

struct Ctx<'a> {
    ws: &'a mut Workspace,
    cfg: &'a Config,
    opts: &'a RunOptions,
}

impl Ctx<'_> {
    fn note(&self, msg: &str) {
        if !self.opts.quiet {
            eprintln!("{msg}");
        }
    }

    fn require(&self, stage: Stage, needed: &str) -> Result<()> {
        if self.ws.is_complete(needed) {
            Ok(())
        } else {
            Err(Error::Prerequisite {
                stage: stage.name().into(),
                needed: needed.into(),
            })
        }
    }

    fn upstream(&self, names: &[&str]) -> BTreeMap<String, Option<String>> {
        names
            .iter()
            .map(|n| (n.to_string(), self.ws.fingerprint(n).map(str::to_string)))
            .collect()
    }

    fn fingerprint(&self, stage: Stage, settings: Value, upstream: &[&str]) -> String {
        let v = json!({
            "stage": stage.name(),
            "settings": settings,
            "upstream": self.upstream(upstream),
        });
        formats::sha256_hex(v.to_string().as_bytes())
    }

    /// True when the stage may be skipped.
    fn up_to_date(&self, stage: Stage, fp: &str) -> bool {
        if self.opts.force {
            return false;
        }
        match self.ws.stage(stage.name()) {
            Some(rec) if rec.fingerprint == fp => rec.artifacts.iter().all(|a| self.ws.path(a).exists()),
            _ => false,
        }
    }

    fn finish(&mut self, stage: Stage, fp: String, artifacts: Vec<String>, info: BTreeMap<String, Value>) -> Result<()> {
        self.ws.record(
            stage.name(),
            StageRecord {
                fingerprint: fp,
                artifacts,
                info,
            },
        )
    }

    fn info(&self, stage: &str, key: &str) -> Option<&Value> {
        self.ws.stage(stage).and_then(|s| s.info.get(key))
    }
}

pub fn run_stage(ws: &mut Workspace, cfg: &Config, stage: Stage, opts: &RunOptions) -> Result<Outcome> {
    cfg.validate()?;
    let mut ctx = Ctx { ws, cfg, opts };
    for needed in stage.requires() {
        ctx.require(stage, needed.name())?;
    }
    let outcome = match stage {
        Stage::Ingest => run_ingest(&mut ctx),
        Stage::Chunk => run_chunk(&mut ctx),
        Stage::Essentials => run_essentials(&mut ctx),
        Stage::Augment => run_augment(&mut ctx),
        Stage::Metrics => run_metrics(&mut ctx),
        Stage::Index => run_index(&mut ctx),
        Stage::EvalSparse => run_eval_sparse(&mut ctx),
        Stage::Embed => run_embed(&mut ctx),
        Stage::EvalDense => run_eval_dense(&mut ctx),
        Stage::Triplets => run_triplets(&mut ctx),
        Stage::Report => run_report(&mut ctx),
    }?;
    match outcome {
        Outcome::Skipped => ctx.note(&format!("{}: up to date, skipped (use --force to rerun)", stage.name())),
        Outcome::Ran => ctx.note(&format!("{}: done", stage.name())),
    }
    ctx.ws.manifest_mut().config_hash = Some(cfg.hash());
    ctx.ws.manifest_mut().seed = Some(cfg.seed);
    ctx.ws.save()?;
    Ok(outcome)
}

/// Runs every stage in order, stopping at the first failure.
pub fn run_pipeline(ws: &mut Workspace, cfg: &Config, opts: &RunOptions) -> Result<Vec<(Stage, Outcome)>> {
    let mut out = Vec::new();
    for stage in Stage::ALL {
        out.push((stage, run_stage(ws, cfg, stage, opts)?));
    }
    Ok(out)
}

// ---------------------------------------------------------------- loaders

pub fn load_corpus(ws: &Workspace) -> Result<Corpus> {
    let rec = ws.stage(Stage::Ingest.name()).ok_or_else(|| Error::Prerequisite {
        stage: "load corpus".into(),
        needed: "ingest".into(),
    })?;
    let name = rec.info.get("name").and_then(Value::as_str).unwrap_or("corpus");
    let split: Split = rec
        .info
        .get("split")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default();
    ingest::ingest(&ws.path(CORPUS_DIR), SourceFormat::Canonical, name, split)
}

fn group_chunks(chunks: Vec<Chunk>) -> BTreeMap<String, Vec<Chunk>> {
    let mut m: BTreeMap<String, Vec<Chunk>> = BTreeMap::new();
    for c in chunks {
        m.entry(c.parent_id.clone()).or_default().push(c);
    }
    for v in m.values_mut() {
        v.sort_by_key(|c| c.index);
    }
    m
}

/// Chunks by parent id, in chunk order.
pub type ChunksById = BTreeMap<String, Vec<Chunk>>;

/// Document and query chunks.
pub fn load_chunks(ws: &Workspace) -> Result<(ChunksById, ChunksById)> {
    Ok((
        group_chunks(formats::read_jsonl(&ws.path(DOC_CHUNKS))?),
        group_chunks(formats::read_jsonl(&ws.path(QUERY_CHUNKS))?),
    ))
}

fn augmented_methods(ws: &Workspace) -> Vec<Method> {
    ws.stage(Stage::Augment.name())
        .and_then(|s| s.info.get("methods"))
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default()
}

pub fn load_augmentations(ws: &Workspace, method: Method) -> Result<Vec<AugmentedQuery>> {
    formats::read_jsonl(&ws.path(&augmentations_file(method)))
}

fn load_all_augmentations(ws: &Workspace) -> Result<Vec<AugmentedQuery>> {
    let mut out = Vec::new();
    for m in augmented_methods(ws) {
        out.extend(load_augmentations(ws, m)?);
    }
    Ok(out)
}

fn load_index(ws: &Workspace) -> Result<InvertedIndex> {
    let p = ws.path(INDEX);
    serde_json::from_str(&formats::read_to_string(&p)?).map_err(|e| Error::malformed(&p, e.line(), e.to_string()))
}

fn read_json<T: for<'de> Deserialize<'de>>(ws: &Workspace, rel: &str) -> Result<T> {
    let p = ws.path(rel);
    serde_json::from_str(&formats::read_to_string(&p)?).map_err(|e| Error::malformed(&p, e.line(), e.to_string()))
}

fn write_json<T: Serialize>(ws: &Workspace, rel: &str, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializes");
    s.push('\n');
    formats::write_atomic(&ws.path(rel), s.as_bytes())
}

fn write_text(ws: &Workspace, rel: &str, text: &str) -> Result<()> {
    formats::write_atomic(&ws.path(rel), text.as_bytes())
}

fn env_key(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|k| !k.is_empty())
}

fn make_client(cfg: &Config) -> Result<Box<dyn LlmClient + Send + Sync>> {
    let l = &cfg.llm;
    Ok(match l.client {
        ClientKind::Synthetic => Box::new(SyntheticClient),
        ClientKind::Replay => {
            let p = l.transcripts.as_ref().ok_or_else(|| Error::Config("llm.transcripts not set".into()))?;
            Box::new(ReplayClient::from_file(p)?)
        }
        ClientKind::Http => Box::new(HttpClient::new(
            &l.endpoint,
            &l.model,
            env_key(&l.api_key_env),
            l.params.clone(),
            Duration::from_secs(l.timeout_secs),
            Duration::from_millis(l.backoff_ms),
        )),
    })
}

/// Settings that change what the client returns.
fn client_settings(cfg: &Config) -> Result<Value> {
    let l = &cfg.llm;
    let transcripts = match &l.transcripts {
        Some(p) if l.client == ClientKind::Replay => Some(formats::sha256_hex(&std::fs::read(p).map_err(|e| Error::io(p, e))?)),
        _ => None,
    };
    let few_shot = match &l.few_shot {
        Some(p) => Some(formats::sha256_hex(&std::fs::read(p).map_err(|e| Error::io(p, e))?)),
        None => None,
    };
    Ok(json!({
        "client": l.client,
        "endpoint": if l.client == ClientKind::Http { Some(&l.endpoint) } else { None },
        "model": if l.client == ClientKind::Http { Some(&l.model) } else { None },
        "params": l.params,
        "retries": l.retries,
        "transcripts": transcripts,
        "few_shot": few_shot,
    }))
}

fn make_embedder(cfg: &Config) -> Result<Box<dyn Embedder + Send + Sync>> {
    let e = &cfg.embed;
    Ok(match e.provider {
        ProviderKind::Hash => Box::new(HashEmbedder::new(e.dim, e.hash_seed)?),
        ProviderKind::File => {
            let p = e.path.as_ref().ok_or_else(|| Error::Config("embed.path not set".into()))?;
            let f = FileEmbedder::open(p)?;
            if f.dim() != e.dim {
                return Err(Error::Config(format!("embed.dim is {} but {} holds {}-d vectors", e.dim, p.display(), f.dim())));
            }
            Box::new(f)
        }
        ProviderKind::Http => Box::new(HttpEmbedder::new(
            &e.endpoint,
            &e.model,
            env_key(&e.api_key_env),
            e.dim,
            e.batch_size,
            Duration::from_secs(e.timeout_secs),
        )),
    })
}

fn embed_settings(cfg: &Config) -> Result<Value> {
    let e = &cfg.embed;
    let file = match (&e.provider, &e.path) {
        (ProviderKind::File, Some(p)) => Some(formats::sha256_hex(&std::fs::read(p).map_err(|err| Error::io(p, err))?)),
        _ => None,
    };
    Ok(json!({
        "provider": e.provider,
        "dim": e.dim,
        "hash_seed": if e.provider == ProviderKind::Hash { Some(e.hash_seed) } else { None },
        "file": file,
        "endpoint": if e.provider == ProviderKind::Http { Some(&e.endpoint) } else { None },
        "model": if e.provider == ProviderKind::Http { Some(&e.model) } else { None },
    }))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Adds `new` to the workspace transcript log, keyed and sorted by request.
fn merge_transcripts(ws: &Workspace, new: Vec<Transcript>) -> Result<()> {
    let path = ws.path(TRANSCRIPTS);
    let mut all: BTreeMap<String, Transcript> = BTreeMap::new();
    if path.exists() {
        for t in formats::read_jsonl::<Transcript>(&path)? {
            all.insert(t.key.clone(), t);
        }
    }
    for t in new {
        all.insert(t.key.clone(), t);
    }
    formats::write_jsonl(&path, &all.into_values().collect::<Vec<_>>())
}

fn check_quarantine(stage: &str, quarantined: usize, total: usize, threshold: f64) -> Result<()> {
    if total > 0 && quarantined as f64 / total as f64 > threshold {
        return Err(Error::QuarantineThreshold {
            stage: stage.into(),
            quarantined,
            total,
            threshold,
        });
    }
    Ok(())
}

// ----------------------------------------------------------------- stages

fn run_ingest(ctx: &mut Ctx) -> Result<Outcome> {
    let c = &ctx.cfg.corpus;
    let source = c
        .source
        .as_ref()
        .ok_or_else(|| Error::Config("corpus.source is not set (pass --in DIR)".into()))?;
    let name = c.name.clone().unwrap_or_else(|| {
        source
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("corpus")
            .to_string()
    });
    let mut corpus = ingest::ingest(source, c.format, &name, c.split)?;
    let sampled = match c.sample {
        Some(n) => Some(corpus.sample_queries(n, ctx.cfg.seed)?),
        None => None,
    };
    let (d, q, r) = ingest::export_canonical(&corpus);
    let fp = ctx.fingerprint(
        Stage::Ingest,
        json!({
            "name": name,
            "split": c.split,
            "sample": c.sample,
            "seed": c.sample.map(|_| ctx.cfg.seed),
            "content": formats::sha256_hex(format!("{d}\u{0}{q}\u{0}{r}").as_bytes()),
        }),
        &[],
    );
    if ctx.up_to_date(Stage::Ingest, &fp) {
        return Ok(Outcome::Skipped);
    }
    let paths = ingest::write_canonical(&ctx.ws.path(CORPUS_DIR), &corpus)?;
    let artifacts = paths
        .iter()
        .map(|p| format!("{CORPUS_DIR}/{}", p.file_name().unwrap().to_string_lossy()))
        .collect();
    ctx.ws.manifest_mut().sample_ids = sampled;
    let mut info = BTreeMap::new();
    info.insert("name".into(), json!(name));
    info.insert("split".into(), json!(c.split));
    info.insert("format".into(), json!(c.format.as_str()));
    info.insert("documents".into(), json!(corpus.documents().len()));
    info.insert("queries".into(), json!(corpus.queries().len()));
    ctx.finish(Stage::Ingest, fp, artifacts, info)?;
    Ok(Outcome::Ran)
}

fn run_chunk(ctx: &mut Ctx) -> Result<Outcome> {
    let dp = ctx.cfg.chunk.doc_policy()?;
    let qp = ctx.cfg.chunk.query_policy()?;
    let fp = ctx.fingerprint(
        Stage::Chunk,
        json!({
            "doc": [dp.chunk_size(), dp.overlap()],
            "query": [qp.chunk_size(), qp.overlap()],
        }),
        &["ingest"],
    );
    if ctx.up_to_date(Stage::Chunk, &fp) {
        return Ok(Outcome::Skipped);
    }
    let corpus = load_corpus(ctx.ws)?;
    let docs: Vec<Chunk> = corpus
        .documents()
        .par_iter()
        .flat_map_iter(|d| chunk(&d.doc_id, &d.text, &dp))
        .collect();
    let queries: Vec<Chunk> = corpus
        .queries()
        .par_iter()
        .flat_map_iter(|q| chunk(&q.query_id, &q.text, &qp))
        .collect();
    formats::write_jsonl(&ctx.ws.path(DOC_CHUNKS), &docs)?;
    formats::write_jsonl(&ctx.ws.path(QUERY_CHUNKS), &queries)?;
    let mut info = BTreeMap::new();
    info.insert("document_chunks".into(), json!(docs.len()));
    info.insert("query_chunks".into(), json!(queries.len()));
    ctx.finish(Stage::Chunk, fp, vec![DOC_CHUNKS.into(), QUERY_CHUNKS.into()], info)?;
    Ok(Outcome::Ran)
}

fn load_few_shot(cfg: &Config) -> Result<Vec<FewShotExample>> {
    #[derive(Deserialize)]
    struct Example {
        text: String,
        essentials: Essentials,
    }
    match &cfg.llm.few_shot {
        None => Ok(Vec::new()),
        Some(p) => {
            let text = formats::read_to_string(p)?;
            let ex: Vec<Example> = serde_json::from_str(&text).map_err(|e| Error::malformed(p, e.line(), e.to_string()))?;
            Ok(ex
                .into_iter()
                .map(|e| FewShotExample {
                    text: e.text,
                    essentials: e.essentials,
                })
                .collect())
        }
    }
}

/// Splits stage results into successes and quarantines; other errors abort.
fn partition<T>(results: Vec<std::result::Result<T, AugmentError>>) -> Result<(Vec<T>, Vec<Quarantine>)> {
    let mut ok = Vec::new();
    let mut quarantined = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(AugmentError::Quarantined(q)) => quarantined.push(q),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((ok, quarantined))
}

fn run_essentials(ctx: &mut Ctx) -> Result<Outcome> {
    let fp = ctx.fingerprint(Stage::Essentials, client_settings(ctx.cfg)?, &["ingest"]);
    if ctx.up_to_date(Stage::Essentials, &fp) {
        return Ok(Outcome::Skipped);
    }
    let corpus = load_corpus(ctx.ws)?;
    let few_shot = load_few_shot(ctx.cfg)?;
    let client = make_client(ctx.cfg)?;
    let recorder = Recorder::new(&*client);
    let retry = RetryPolicy {
        retries: ctx.cfg.llm.retries,
    };
    let results: Vec<_> = pool(ctx.cfg.llm.max_in_flight)?.install(|| {
        corpus
            .queries()
            .par_iter()
            .map(|q| extract_essentials(q, &recorder, &few_shot, retry))
            .collect()
    });
    let (essentials, quarantined) = partition(results)?;
    merge_transcripts(ctx.ws, recorder.transcripts())?;
    formats::write_jsonl(&ctx.ws.path(ESSENTIALS), &essentials)?;
    let qfile = quarantine_file("essentials");
    formats::write_jsonl(&ctx.ws.path(&qfile), &quarantined)?;
    check_quarantine("essentials", quarantined.len(), corpus.queries().len(), ctx.cfg.augment.quarantine_threshold)?;
    let mut info = BTreeMap::new();
    info.insert("extracted".into(), json!(essentials.len()));
    info.insert("quarantined".into(), json!(quarantined.len()));
    ctx.finish(Stage::Essentials, fp, vec![ESSENTIALS.into(), TRANSCRIPTS.into(), qfile], info)?;
    Ok(Outcome::Ran)
}

fn run_augment(ctx: &mut Ctx) -> Result<Outcome> {
    let a = &ctx.cfg.augment;
    let mut methods = a.methods.clone();
    methods.sort();
    methods.dedup();
    if methods.is_empty() {
        return Err(Error::Config("augment.methods is empty".into()));
    }
    let fp = ctx.fingerprint(
        Stage::Augment,
        json!({
            "client": client_settings(ctx.cfg)?,
            "methods": methods,
            "count": a.count,
            "persona_set": a.persona_set,
            "mode": ctx.cfg.llm.mode,
        }),
        &["essentials"],
    );
    if ctx.up_to_date(Stage::Augment, &fp) {
        return Ok(Outcome::Skipped);
    }
    let corpus = load_corpus(ctx.ws)?;
    let essentials: BTreeMap<String, Essentials> = formats::read_jsonl::<Essentials>(&ctx.ws.path(ESSENTIALS))?
        .into_iter()
        .map(|e| (e.source_query_id.clone(), e))
        .collect();
    let client = make_client(ctx.cfg)?;
    let recorder = Recorder::new(&*client);
    let retry = RetryPolicy {
        retries: ctx.cfg.llm.retries,
    };
    let mode = ctx.cfg.llm.mode;
    let pool = pool(ctx.cfg.llm.max_in_flight)?;
    let queries: Vec<_> = corpus
        .queries()
        .iter()
        .filter_map(|q| essentials.get(&q.query_id).map(|e| (q, e)))
        .collect();

    let mut artifacts = vec![TRANSCRIPTS.to_string()];
    let mut info = BTreeMap::new();
    let mut worst = 0usize;
    for method in &methods {
        let spec = match method {
            Method::Vanilla => PromptSpec::vanilla(a.count),
            Method::Persona => PromptSpec::persona(a.persona_set),
        };
        let results: Vec<_> = pool.install(|| {
            queries
                .par_iter()
                .map(|(q, e)| augment(q, e, &spec, &recorder, mode, retry))
                .collect()
        });
        let (groups, quarantined) = partition(results)?;
        let augs: Vec<AugmentedQuery> = groups.into_iter().flatten().collect();
        let file = augmentations_file(*method);
        formats::write_jsonl(&ctx.ws.path(&file), &augs)?;
        let qfile = quarantine_file(&format!("augment-{}", method.as_str()));
        formats::write_jsonl(&ctx.ws.path(&qfile), &quarantined)?;
        worst = worst.max(quarantined.len());
        info.insert(format!("{}_records", method.as_str()), json!(augs.len()));
        info.insert(format!("{}_quarantined", method.as_str()), json!(quarantined.len()));
        artifacts.push(file);
        artifacts.push(qfile);
    }
    merge_transcripts(ctx.ws, recorder.transcripts())?;
    check_quarantine("augment", worst, queries.len(), a.quarantine_threshold)?;
    info.insert("methods".into(), json!(methods));
    ctx.finish(Stage::Augment, fp, artifacts, info)?;
    Ok(Outcome::Ran)
}

/// Normalized mean of a query's chunk vectors.
fn mean_vector(vectors: &[&[f32]]) -> Vec<f32> {
    let dim = vectors.first().map_or(0, |v| v.len());
    let mut m = vec![0f32; dim];
    for v in vectors {
        for (a, b) in m.iter_mut().zip(v.iter()) {
            *a += b;
        }
    }
    normalize(&mut m);
    m
}

fn run_metrics(ctx: &mut Ctx) -> Result<Outcome> {
    let m = &ctx.cfg.metrics;
    let fp = ctx.fingerprint(
        Stage::Metrics,
        json!({ "group": m.group, "sections": m.sections, "max_n": m.max_n, "embed": embed_settings(ctx.cfg)? }),
        &["augment", "chunk"],
    );
    if ctx.up_to_date(Stage::Metrics, &fp) {
        return Ok(Outcome::Skipped);
    }
    let corpus = load_corpus(ctx.ws)?;
    let (_, query_chunks) = load_chunks(ctx.ws)?;
    let augs = load_all_augmentations(ctx.ws)?;
    let mut inputs: Vec<EmbedInput> = query_chunks
        .values()
        .flatten()
        .map(|c| EmbedInput::new(query_owner(&c.parent_id), c.index, c.text.clone()))
        .collect();
    inputs.extend(augs.iter().map(|a| EmbedInput::new(aug_owner(&a.aug_id), 0, a.text.clone())));
    let store = embed(&inputs, &*make_embedder(ctx.cfg)?)?;

    let mut per_method: Vec<(Method, Vec<QueryAugmentations>)> = Vec::new();
    for method in augmented_methods(ctx.ws) {
        let mut by_query: BTreeMap<&str, Vec<&AugmentedQuery>> = BTreeMap::new();
        for a in augs.iter().filter(|a| a.method == method) {
            by_query.entry(&a.source_query_id).or_default().push(a);
        }
        let groups = by_query
            .into_iter()
            .map(|(qid, list)| QueryAugmentations {
                query_id: qid.to_string(),
                original_vector: mean_vector(&store.chunks(&query_owner(qid))),
                texts: list.iter().map(|a| a.text.clone()).collect(),
                vectors: list
                    .iter()
                    .map(|a| store.get(&aug_owner(&a.aug_id), 0).expect("embedded above").to_vec())
                    .collect(),
            })
            .collect();
        per_method.push((method, groups));
    }
    let mut reports = Vec::new();
    for (method, groups) in &per_method {
        if !groups.is_empty() {
            reports.push(diversity_report(&corpus.name, *method, None, groups, m.group, m.max_n)?);
        }
    }
    let lengths: BTreeMap<String, usize> = corpus
        .queries()
        .iter()
        .map(|q| (q.query_id.clone(), q.token_count))
        .collect();
    reports.extend(diversity_by_section(&corpus.name, &lengths, &per_method, m.sections, m.group, m.max_n)?);
    let counts: Vec<usize> = corpus.queries().iter().map(|q| q.token_count).collect();
    let summary = DiversitySummary {
        corpus: corpus.name.clone(),
        grouping: m.group,
        sections: m.sections,
        original_avg_token_len: counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64,
        reports,
    };
    write_json(ctx.ws, DIVERSITY_JSON, &summary)?;
    write_text(ctx.ws, DIVERSITY_TXT, &report::diversity_text(&summary))?;
    ctx.finish(Stage::Metrics, fp, vec![DIVERSITY_JSON.into(), DIVERSITY_TXT.into()], BTreeMap::new())?;
    Ok(Outcome::Ran)
}

fn run_index(ctx: &mut Ctx) -> Result<Outcome> {
    let params = ctx.cfg.bm25.params();
    let fp = ctx.fingerprint(Stage::Index, json!({ "k1": params.k1, "b": params.b }), &["ingest"]);
    if ctx.up_to_date(Stage::Index, &fp) {
        return Ok(Outcome::Skipped);
    }
    let corpus = load_corpus(ctx.ws)?;
    let index = build_index(&corpus, params)?;
    formats::write_atomic(&ctx.ws.path(INDEX), serde_json::to_string(&index).expect("index serializes").as_bytes())?;
    let mut info = BTreeMap::new();
    info.insert("documents".into(), json!(index.num_docs()));
    info.insert("avg_doc_len".into(), json!(index.avg_doc_len()));
    info.insert("terms".into(), json!(index.terms().count()));
    ctx.finish(Stage::Index, fp, vec![INDEX.into()], info)?;
    Ok(Outcome::Ran)
}

/// Resolves requested query sets against what the workspace holds.
fn query_sets(ctx: &Ctx, stage: Stage) -> Result<Vec<QuerySet>> {
    let available = augmented_methods(ctx.ws);
    match &ctx.opts.query_sets {
        Some(sets) => {
            for s in sets {
                if let Some(m) = s.method() {
                    if !available.contains(&m) {
                        return Err(Error::Prerequisite {
                            stage: stage.name().into(),
                            needed: format!("augment (method {})", m.as_str()),
                        });
                    }
                }
            }
            let mut sets = sets.clone();
            sets.sort();
            sets.dedup();
            Ok(sets)
        }
        None => {
            let mut sets = vec![QuerySet::Original];
            for m in available {
                sets.push(match m {
                    Method::Vanilla => QuerySet::Vanilla,
                    Method::Persona => QuerySet::Persona,
                });
            }
            Ok(sets)
        }
    }
}

/// Query side of one evaluation set: `(id, text, relevant, source query)`.
fn eval_queries(corpus: &Corpus, augs: &[AugmentedQuery], set: QuerySet) -> Vec<(String, String, BTreeSet<String>, String)> {
    match set.method() {
        None => corpus
            .queries()
            .iter()
            .map(|q| (q.query_id.clone(), q.text.clone(), q.positives.clone(), q.query_id.clone()))
            .collect(),
        Some(m) => augs
            .iter()
            .filter(|a| a.method == m)
            .map(|a| (a.aug_id.clone(), a.text.clone(), a.positives.clone(), a.source_query_id.clone()))
            .collect(),
    }
}

fn recall_row(set: QuerySet, run: &RetrievalRun, qrels: &Qrels, ks: &[usize], sources: &BTreeMap<String, String>) -> Result<(RecallRow, RecallTable)> {
    let table = recall_at_k(run, qrels, ks)?;
    let grouped = recall_per_source_first(&table, sources);
    Ok((
        RecallRow {
            set: set.as_str().into(),
            n_queries: run.len(),
            n_sources: grouped.per_query.len(),
            macro_recall: table.mean.clone(),
            per_query_first: grouped.mean,
        },
        table,
    ))
}

fn run_eval_sparse(ctx: &mut Ctx) -> Result<Outcome> {
    let sets = query_sets(ctx, Stage::EvalSparse)?;
    let ks = ctx.cfg.sparse.ks.clone();
    let mut upstream = vec!["index"];
    if sets.iter().any(|s| s.method().is_some()) {
        upstream.push("augment");
    }
    let fp = ctx.fingerprint(
        Stage::EvalSparse,
        json!({ "ks": ks, "sets": sets, "averaging": ctx.cfg.sparse.averaging }),
        &upstream,
    );
    if ctx.up_to_date(Stage::EvalSparse, &fp) {
        return Ok(Outcome::Skipped);
    }
    let corpus = load_corpus(ctx.ws)?;
    let index = load_index(ctx.ws)?;
    let augs = load_all_augmentations(ctx.ws)?;
    let depth = *ks.iter().max().expect("validated nonempty");
    let mut rows = Vec::new();
    let mut artifacts = vec![SPARSE_JSON.to_string()];
    for set in &sets {
        let queries = eval_queries(&corpus, &augs, *set);
        let ranked: Vec<_> = queries
            .par_iter()
            .map(|(id, text, _, _)| (id.clone(), rank(index.score_all(text), Some(depth))))
            .collect();
        let mut run = RetrievalRun::default();
        for (id, r) in ranked {
            run.insert(id, r);
        }
        let qrels: Qrels = queries.iter().map(|(id, _, rel, _)| (id.clone(), rel.clone())).collect();
        let sources = queries.iter().map(|(id, _, _, s)| (id.clone(), s.clone())).collect();
        let (row, _) = recall_row(*set, &run, &qrels, &ks, &sources)?;
        rows.push(row);
        let file = format!("runs/bm25-{}.trec", set.as_str());
        write_text(ctx.ws, &file, &formats::format_run(&run, "bm25"))?;
        artifacts.push(file);
    }
    let summary = RecallSummary {
        system: "bm25".into(),
        corpus: corpus.name.clone(),
        ks,
        averaging: ctx.cfg.sparse.averaging,
        rows,
    };
    write_json(ctx.ws, SPARSE_JSON, &summary)?;
    ctx.finish(Stage::EvalSparse, fp, artifacts, BTreeMap::new())?;
    Ok(Outcome::Ran)
}

fn run_embed(ctx: &mut Ctx) -> Result<Outcome> {
    let with_augs = ctx.ws.is_complete(Stage::Augment.name());
    let upstream: &[&str] = if with_augs { &["chunk", "augment"] } else { &["chunk"] };
    let fp = ctx.fingerprint(Stage::Embed, embed_settings(ctx.cfg)?, upstream);
    if ctx.up_to_date(Stage::Embed, &fp) {
        return Ok(Outcome::Skipped);
    }
    let (doc_chunks, query_chunks) = load_chunks(ctx.ws)?;
    let mut inputs: Vec<EmbedInput> = Vec::new();
    for c in doc_chunks.values().flatten() {
        inputs.push(EmbedInput::new(doc_owner(&c.parent_id), c.index, c.text.clone()));
    }
    for c in query_chunks.values().flatten() {
        inputs.push(EmbedInput::new(query_owner(&c.parent_id), c.index, c.text.clone()));
    }
    let augs = if with_augs { load_all_augmentations(ctx.ws)? } else { Vec::new() };
    for a in &augs {
        inputs.push(EmbedInput::new(aug_owner(&a.aug_id), 0, a.text.clone()));
    }
    let store = embed(&inputs, &*make_embedder(ctx.cfg)?)?;
    formats::save_embeddings(&ctx.ws.path(EMBEDDINGS), &store)?;
    #[derive(Serialize)]
    struct InputRecord<'a> {
        owner_id: &'a str,
        chunk_index: usize,
        text: &'a str,
    }
    let records: Vec<InputRecord> = inputs
        .iter()
        .map(|i| InputRecord {
            owner_id: &i.owner_id,
            chunk_index: i.chunk_index,
            text: &i.text,
        })
        .collect();
    formats::write_jsonl(&ctx.ws.path(EMBED_INPUTS), &records)?;
    let mut info = BTreeMap::new();
    info.insert("vectors".into(), json!(store.len()));
    info.insert("dim".into(), json!(store.dim()));
    info.insert("augmentations_embedded".into(), json!(with_augs));
    ctx.finish(Stage::Embed, fp, vec![EMBEDDINGS.into(), EMBED_INPUTS.into()], info)?;
    Ok(Outcome::Ran)
}

fn augs_embedded(ctx: &Ctx) -> bool {
    ctx.info("embed", "augmentations_embedded").and_then(Value::as_bool) == Some(true)
}

fn run_eval_dense(ctx: &mut Ctx) -> Result<Outcome> {
    let sets = query_sets(ctx, Stage::EvalDense)?;
    let needs_augs = sets.iter().any(|s| s.method().is_some());
    if needs_augs && !augs_embedded(ctx) {
        return Err(Error::Prerequisite {
            stage: Stage::EvalDense.name().into(),
            needed: "embed (rerun after augment so augmentations are embedded)".into(),
        });
    }
    let d = &ctx.cfg.dense;
    let fp = ctx.fingerprint(
        Stage::EvalDense,
        json!({ "method": d.method, "ks": d.ks, "sets": sets, "averaging": d.averaging }),
        &["embed"],
    );
    if ctx.up_to_date(Stage::EvalDense, &fp) {
        return Ok(Outcome::Skipped);
    }
    let corpus = load_corpus(ctx.ws)?;
    let store = formats::load_embeddings(&ctx.ws.path(EMBEDDINGS))?;
    let augs = load_all_augmentations(ctx.ws)?;
    let depth = *d.ks.iter().max().expect("validated nonempty");
    let mut rows = Vec::new();
    let mut artifacts = vec![DENSE_JSON.to_string()];
    for set in &sets {
        let queries = eval_queries(&corpus, &augs, *set);
        let dq: Vec<DenseQuery> = queries
            .iter()
            .map(|(id, _, rel, _)| DenseQuery {
                query_id: id.clone(),
                owner_id: if set.method().is_some() { aug_owner(id) } else { query_owner(id) },
                relevant: rel.clone(),
            })
            .collect();
        let parts: Vec<_> = dq
            .par_chunks(8)
            .map(|part| dense_run(&store, &corpus, part, d.method, Some(depth)))
            .collect::<std::result::Result<_, _>>()?;
        let mut run = RetrievalRun::default();
        let mut qrels = Qrels::new();
        for (r, q) in parts {
            run.results.extend(r.results);
            qrels.extend(q);
        }
        let sources = queries.iter().map(|(id, _, _, s)| (id.clone(), s.clone())).collect();
        let (row, _) = recall_row(*set, &run, &qrels, &d.ks, &sources)?;
        rows.push(row);
        let file = format!("runs/dense-{}-{}.trec", d.method.as_str(), set.as_str());
        write_text(ctx.ws, &file, &formats::format_run(&run, d.method.as_str()))?;
        artifacts.push(file);
    }
    let summary = RecallSummary {
        system: format!("dense-{}", d.method.as_str()),
        corpus: corpus.name.clone(),
        ks: d.ks.clone(),
        averaging: d.averaging,
        rows,
    };
    write_json(ctx.ws, DENSE_JSON, &summary)?;
    ctx.finish(Stage::EvalDense, fp, artifacts, BTreeMap::new())?;
    Ok(Outcome::Ran)
}

fn run_triplets(ctx: &mut Ctx) -> Result<Outcome> {
    let t = &ctx.cfg.triplets;
    let mut configs = t.configs.clone();
    configs.sort();
    configs.dedup();
    let needs_augs = configs.iter().any(|c| c.method().is_some());
    if needs_augs {
        ctx.require(Stage::Triplets, "augment")?;
        if !augs_embedded(ctx) {
            return Err(Error::Prerequisite {
                stage: Stage::Triplets.name().into(),
                needed: "embed (rerun after augment so augmentations are embedded)".into(),
            });
        }
    }
    if t.negatives == NegativePolicy::Bm25Hard {
        ctx.require(Stage::Triplets, "index")?;
    }
    if ctx.opts.triplets_out.is_some() && configs.len() != 1 {
        return Err(Error::Config("--out needs exactly one training configuration".into()));
    }
    let i = ctx.cfg.pairs_per_query();
    let mut upstream = vec!["embed", "chunk"];
    if needs_augs {
        upstream.push("augment");
    }
    if t.negatives == NegativePolicy::Bm25Hard {
        upstream.push("index");
    }
    let fp = ctx.fingerprint(
        Stage::Triplets,
        json!({
            "configs": configs,
            "i": i,
            "negatives": t.negatives,
            "target_size": t.target_size,
            "seed": ctx.cfg.seed,
            "chunk_queries": ctx.cfg.chunk.chunk_queries,
        }),
        &upstream,
    );
    if ctx.up_to_date(Stage::Triplets, &fp) {
        if let Some(out) = &ctx.opts.triplets_out {
            copy_out(ctx, configs[0], out)?;
        }
        return Ok(Outcome::Skipped);
    }
    let corpus = load_corpus(ctx.ws)?;
    let (doc_chunks, query_chunks) = load_chunks(ctx.ws)?;
    let store: EmbeddingStore = formats::load_embeddings(&ctx.ws.path(EMBEDDINGS))?;
    let augs = if needs_augs { load_all_augmentations(ctx.ws)? } else { Vec::new() };
    let index = if t.negatives == NegativePolicy::Bm25Hard { Some(load_index(ctx.ws)?) } else { None };
    let sources = TripletSources {
        corpus: &corpus,
        query_chunks: &query_chunks,
        doc_chunks: &doc_chunks,
        augmentations: &augs,
        store: &store,
        index: index.as_ref(),
        style: if ctx.cfg.chunk.chunk_queries { AnchorStyle::Chunked } else { AnchorStyle::Whole },
    };
    let mut summary = TripletSummary {
        i,
        negatives: t.negatives,
        seed: ctx.cfg.seed,
        configs: BTreeMap::new(),
    };
    let mut artifacts = vec![TRIPLETS_JSON.to_string()];
    for name in &configs {
        let config = TrainConfig {
            name: *name,
            target_size: t.target_size,
            seed: ctx.cfg.seed,
        };
        let triplets = build_triplets(&sources, &config, t.negatives, i)?;
        let counts = anchor_counts(&triplets);
        let (orig, aug) = counts.values().fold((0, 0), |acc, (o, a)| (acc.0 + o, acc.1 + a));
        summary.configs.insert(
            name.as_str().to_string(),
            TripletCounts {
                triplets: triplets.len(),
                original_anchors: orig,
                augmentation_anchors: aug,
            },
        );
        if triplets.is_empty() {
            continue;
        }
        let file = triplets_file(*name);
        formats::write_atomic(&ctx.ws.path(&file), formats::export_triplets(&triplets)?.as_bytes())?;
        artifacts.push(file);
    }
    write_json(ctx.ws, TRIPLETS_JSON, &summary)?;
    ctx.finish(Stage::Triplets, fp, artifacts, BTreeMap::new())?;
    if let Some(out) = &ctx.opts.triplets_out {
        copy_out(ctx, configs[0], out)?;
    }
    Ok(Outcome::Ran)
}

fn copy_out(ctx: &Ctx, config: ConfigName, out: &std::path::Path) -> Result<()> {
    let src = ctx.ws.path(&triplets_file(config));
    let bytes = std::fs::read(&src).map_err(|e| Error::io(&src, e))?;
    formats::write_atomic(out, &bytes)
}

fn run_report(ctx: &mut Ctx) -> Result<Outcome> {
    let parts = ["metrics", "eval_sparse", "eval_dense", "triplets"];
    if !parts.iter().any(|p| ctx.ws.is_complete(p)) {
        return Err(Error::NothingToReport);
    }
    let fp = ctx.fingerprint(Stage::Report, json!({}), &parts);
    if ctx.up_to_date(Stage::Report, &fp) {
        return Ok(Outcome::Skipped);
    }
    let diversity: Option<DiversitySummary> =
        if ctx.ws.is_complete("metrics") { Some(read_json(ctx.ws, DIVERSITY_JSON)?) } else { None };
    let sparse: Option<RecallSummary> =
        if ctx.ws.is_complete("eval_sparse") { Some(read_json(ctx.ws, SPARSE_JSON)?) } else { None };
    let dense: Option<RecallSummary> =
        if ctx.ws.is_complete("eval_dense") { Some(read_json(ctx.ws, DENSE_JSON)?) } else { None };
    let triplets: Option<TripletSummary> =
        if ctx.ws.is_complete("triplets") { Some(read_json(ctx.ws, TRIPLETS_JSON)?) } else { None };
    let full = report::Report {
        diversity,
        sparse,
        dense,
        triplets,
    };
    write_text(ctx.ws, REPORT_TXT, &report::render(&full))?;
    write_json(ctx.ws, REPORT_JSON, &full)?;
    ctx.finish(Stage::Report, fp, vec![REPORT_TXT.into(), REPORT_JSON.into()], BTreeMap::new())?;
    Ok(Outcome::Ran)
}

/// Headline recall for a row under the configured averaging.
pub fn headline(row: &RecallRow, averaging: RecallAveraging) -> &[f64] {
    match averaging {
        RecallAveraging::Macro => &row.macro_recall,
        RecallAveraging::PerQueryFirst => &row.per_query_first,
    }
}
