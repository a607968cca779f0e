//! Pipeline configuration (TOML). Every field has a default; unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use daldall_core::augment::{GenerationMode, Method};
use daldall_core::bm25::Bm25Params;
use daldall_core::chunk::ChunkPolicy;
use daldall_core::corpus::Split;
use daldall_core::diversity::Grouping;
use daldall_core::persona::SET_SIZES;
use daldall_core::scoring::ScoreMethod;
use daldall_core::triplets::{ConfigName, NegativePolicy};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::formats;
use crate::ingest::SourceFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub chunk: ChunkConfig,
    pub llm: LlmConfig,
    pub augment: AugmentConfig,
    pub metrics: MetricsConfig,
    pub bm25: Bm25Config,
    pub sparse: SparseConfig,
    pub embed: EmbedConfig,
    pub dense: DenseConfig,
    pub triplets: TripletConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            corpus: CorpusConfig::default(),
            chunk: ChunkConfig::default(),
            llm: LlmConfig::default(),
            augment: AugmentConfig::default(),
            metrics: MetricsConfig::default(),
            bm25: Bm25Config::default(),
            sparse: SparseConfig::default(),
            embed: EmbedConfig::default(),
            dense: DenseConfig::default(),
            triplets: TripletConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub name: Option<String>,
    pub format: SourceFormat,
    /// Source directory; relative paths resolve against the config file.
    pub source: Option<PathBuf>,
    pub split: Split,
    /// Uniform sample of this many queries (all when absent).
    pub sample: Option<usize>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            name: None,
            format: SourceFormat::Canonical,
            source: None,
            split: Split::Test,
            sample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkConfig {
    pub size: usize,
    pub overlap: usize,
    /// Chunk queries like documents. When false, queries stay whole and
    /// triplet positives use the leading chunk of each document.
    pub chunk_queries: bool,
    pub query_size: Option<usize>,
    pub query_overlap: Option<usize>,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            size: 512,
            overlap: 80,
            chunk_queries: true,
            query_size: None,
            query_overlap: None,
        }
    }
}

impl ChunkConfig {
    pub fn doc_policy(&self) -> Result<ChunkPolicy> {
        ChunkPolicy::new(self.size, self.overlap).map_err(|e| Error::Config(format!("chunk: {e}")))
    }

    pub fn query_policy(&self) -> Result<ChunkPolicy> {
        if !self.chunk_queries {
            return Ok(ChunkPolicy::whole());
        }
        ChunkPolicy::new(self.query_size.unwrap_or(self.size), self.query_overlap.unwrap_or(self.overlap))
            .map_err(|e| Error::Config(format!("chunk (queries): {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Http,
    Replay,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub client: ClientKind,
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// Transcript file served by the replay client.
    pub transcripts: Option<PathBuf>,
    pub max_in_flight: usize,
    pub retries: usize,
    pub mode: GenerationMode,
    pub timeout_secs: u64,
    pub backoff_ms: u64,
    /// JSON file with few-shot examples (`[{"text", "essentials"}]`).
    pub few_shot: Option<PathBuf>,
    /// Passed through verbatim in the request body (temperature etc.).
    pub params: Map<String, Value>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            client: ClientKind::Synthetic,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-5-nano".into(),
            api_key_env: "DALDALL_API_KEY".into(),
            transcripts: None,
            max_in_flight: 4,
            retries: 2,
            mode: GenerationMode::PerCall,
            timeout_secs: 120,
            backoff_ms: 500,
            few_shot: None,
            params: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub methods: Vec<Method>,
    /// Vanilla rewrites per query.
    pub count: usize,
    /// Persona set size; persona rewrites per query equal its size.
    pub persona_set: usize,
    /// Fraction of queries a stage may quarantine before it fails.
    pub quarantine_threshold: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Vanilla, Method::Persona],
            count: 5,
            persona_set: 5,
            quarantine_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub group: Grouping,
    pub sections: usize,
    pub max_n: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            group: Grouping::PerQuery,
            sections: 7,
            max_n: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Config {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Config {
    fn default() -> Self {
        let p = Bm25Params::default();
        Self { k1: p.k1, b: p.b }
    }
}

impl Bm25Config {
    pub fn params(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallAveraging {
    /// Every augmentation counts once.
    #[default]
    Macro,
    /// Average augmentations of a query first, then over queries.
    PerQueryFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseConfig {
    pub ks: Vec<usize>,
    pub averaging: RecallAveraging,
}

impl Default for SparseConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 5, 10, 20, 50],
            averaging: RecallAveraging::Macro,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[serde(rename = "hash_test", alias = "hash")]
    Hash,
    File,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub provider: ProviderKind,
    pub dim: usize,
    /// Hash provider seed.
    pub hash_seed: u64,
    /// Embedding file for the file provider.
    pub path: Option<PathBuf>,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub batch_size: usize,
    pub timeout_secs: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Hash,
            dim: 384,
            hash_seed: 0,
            path: None,
            endpoint: "https://api.openai.com/v1/embeddings".into(),
            model: "text-embedding-3-small".into(),
            api_key_env: "DALDALL_API_KEY".into(),
            batch_size: 64,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenseConfig {
    pub method: ScoreMethod,
    pub ks: Vec<usize>,
    pub averaging: RecallAveraging,
}

impl Default for DenseConfig {
    fn default() -> Self {
        Self {
            method: ScoreMethod::GlobalMax,
            ks: vec![1, 5, 10, 20],
            averaging: RecallAveraging::Macro,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TripletConfig {
    pub configs: Vec<ConfigName>,
    /// Pairs per original query; defaults to the vanilla augmentation count.
    pub i: Option<usize>,
    pub negatives: NegativePolicy,
    /// Mix target size; defaults to the augmentation pool size.
    pub target_size: Option<usize>,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            configs: ConfigName::ALL.to_vec(),
            i: None,
            negatives: NegativePolicy::Bm25Hard,
            target_size: None,
        }
    }
}

impl Config {
    /// Parses TOML and resolves relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        resolve(&mut c.corpus.source);
        resolve(&mut c.llm.transcripts);
        resolve(&mut c.llm.few_shot);
        resolve(&mut c.embed.path);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = formats::read_to_string(path).map_err(|e| Error::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.chunk.doc_policy()?;
        self.chunk.query_policy()?;
        if self.augment.count == 0 {
            return bad("augment.count must be at least 1".into());
        }
        if !SET_SIZES.contains(&self.augment.persona_set) {
            return bad(format!("augment.persona_set must be one of {SET_SIZES:?}"));
        }
        if !(0.0..=1.0).contains(&self.augment.quarantine_threshold) {
            return bad("augment.quarantine_threshold must lie in [0, 1]".into());
        }
        if self.llm.max_in_flight == 0 {
            return bad("llm.max_in_flight must be at least 1".into());
        }
        if self.llm.client == ClientKind::Replay && self.llm.transcripts.is_none() {
            return bad("llm.client = \"replay\" needs llm.transcripts".into());
        }
        if self.metrics.sections == 0 {
            return bad("metrics.sections must be at least 1".into());
        }
        if self.metrics.max_n == 0 {
            return bad("metrics.max_n must be at least 1".into());
        }
        for (name, ks) in [("sparse.ks", &self.sparse.ks), ("dense.ks", &self.dense.ks)] {
            if ks.is_empty() || ks.contains(&0) {
                return bad(format!("{name} must be nonempty positive cutoffs"));
            }
        }
        if self.bm25.k1 < 0.0 || !(0.0..=1.0).contains(&self.bm25.b) {
            return bad("bm25: need k1 >= 0 and 0 <= b <= 1".into());
        }
        if self.embed.dim == 0 {
            return bad("embed.dim must be positive".into());
        }
        if self.embed.provider == ProviderKind::File && self.embed.path.is_none() {
            return bad("embed.provider = \"file\" needs embed.path".into());
        }
        if self.triplets.i == Some(0) {
            return bad("triplets.i must be at least 1".into());
        }
        Ok(())
    }

    pub fn pairs_per_query(&self) -> usize {
        self.triplets.i.unwrap_or(self.augment.count)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        formats::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
