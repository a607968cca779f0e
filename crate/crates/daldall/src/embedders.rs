//! Embedding providers beyond the core hash embedder: precomputed files and
//! an HTTP embeddings endpoint.

use std::path::Path;
use std::time::Duration;

use daldall_core::embed::{EmbedError, EmbedInput, Embedder, EmbeddingStore};
use serde_json::{json, Value};

use crate::error::Result;
use crate::formats;

/// Looks vectors up by `(owner_id, chunk_index)` in a loaded embedding file.
pub struct FileEmbedder {
    store: EmbeddingStore,
}

impl FileEmbedder {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            store: formats::load_embeddings(path)?,
        })
    }

    pub fn from_store(store: EmbeddingStore) -> Self {
        Self { store }
    }
}

impl Embedder for FileEmbedder {
    fn dim(&self) -> usize {
        self.store.dim()
    }

    fn embed(&self, inputs: &[EmbedInput]) -> std::result::Result<Vec<Vec<f32>>, EmbedError> {
        inputs
            .iter()
            .map(|i| {
                self.store
                    .get(&i.owner_id, i.chunk_index)
                    .map(<[f32]>::to_vec)
                    .ok_or_else(|| EmbedError::Provider(format!("no vector for {}#{} in file", i.owner_id, i.chunk_index)))
            })
            .collect()
    }
}

/// POSTs `{"model", "input": [texts]}` and accepts either an OpenAI-style
/// `{"data": [{"embedding": [...]}, ...]}` or a bare array of vectors.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    batch_size: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>, dim: usize, batch_size: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            dim,
            batch_size: batch_size.max(1),
        }
    }

    fn batch(&self, texts: Vec<&str>) -> std::result::Result<Vec<Vec<f32>>, EmbedError> {
        let fail = |m: String| EmbedError::Provider(format!("{}: {m}", self.endpoint));
        let mut req = self.agent.post(&self.endpoint);
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req
            .send_json(json!({ "model": self.model, "input": texts }))
            .map_err(|e| fail(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| fail(e.to_string()))?;
        if status != 200 {
            return Err(fail(format!("HTTP {status}")));
        }
        let v: Value = serde_json::from_str(&body).map_err(|e| fail(e.to_string()))?;
        parse_vectors(&v).ok_or_else(|| fail("unrecognized response shape".into()))
    }
}

fn as_vector(v: &Value) -> Option<Vec<f32>> {
    v.as_array()?.iter().map(|x| x.as_f64().map(|f| f as f32)).collect()
}

pub fn parse_vectors(v: &Value) -> Option<Vec<Vec<f32>>> {
    if let Some(data) = v.get("data").and_then(Value::as_array) {
        return data.iter().map(|d| d.get("embedding").and_then(as_vector)).collect();
    }
    v.as_array()?.iter().map(as_vector).collect()
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, inputs: &[EmbedInput]) -> std::result::Result<Vec<Vec<f32>>, EmbedError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.batch_size) {
            out.extend(self.batch(chunk.iter().map(|i| i.text.as_str()).collect())?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_shapes() {
        let a = json!({"data": [{"embedding": [1.0, 2.0]}, {"embedding": [0.5, 0.0]}]});
        assert_eq!(parse_vectors(&a).unwrap(), vec![vec![1.0, 2.0], vec![0.5, 0.0]]);
        let b = json!([[1.0], [2.0]]);
        assert_eq!(parse_vectors(&b).unwrap().len(), 2);
        assert!(parse_vectors(&json!({"x": 1})).is_none());
    }

    #[test]
    fn file_embedder_lookup() {
        let mut s = EmbeddingStore::new(2).unwrap();
        s.insert("d/x", 0, vec![3.0, 4.0]).unwrap();
        let f = FileEmbedder::from_store(s);
        let got = f.embed(&[EmbedInput::new("d/x", 0, "t")]).unwrap();
        assert!((got[0][0] - 0.6).abs() < 1e-6);
        assert!(f.embed(&[EmbedInput::new("d/y", 0, "t")]).is_err());
    }
}
