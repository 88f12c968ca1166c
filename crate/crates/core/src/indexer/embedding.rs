use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Instruction prepended to retrieval queries before embedding.
pub const QUERY_PREFIX: &str = "Represent this sentence for searching relevant passages: ";

pub const DETERMINISTIC_TEST_PROVIDER: &str = "deterministic-test";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedKind {
    Query,
    Passage,
}

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
}

/// A unit-length embedding. Inputs that embed to the zero vector stay zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn normalized(mut values: Vec<f32>) -> Self {
        let norm = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        Self { values }
    }

    pub fn dims(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &[f32]) -> f64 {
        self.values.iter().zip(other).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum()
    }
}

/// Anything that turns strings into fixed-width vectors. Providers must be
/// deterministic: equal inputs give equal outputs.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    /// Embeds texts exactly as given (prefixing is done by [`embed`]).
    fn embed_batch(&self, inputs: &[String], kind: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError>;

    fn max_batch(&self) -> usize {
        64
    }
}

/// Embeds `texts`, prefixing queries with [`QUERY_PREFIX`], batching per the
/// provider's limit and L2-normalizing every vector.
pub fn embed(
    texts: &[String],
    kind: EmbedKind,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let mut out = Vec::with_capacity(texts.len());
    let mut dims: Option<usize> = None;
    for batch in texts.chunks(provider.max_batch().max(1)) {
        let inputs: Vec<String> = match kind {
            EmbedKind::Query => batch.iter().map(|t| format!("{QUERY_PREFIX}{t}")).collect(),
            EmbedKind::Passage => batch.to_vec(),
        };
        let vectors = provider.embed_batch(&inputs, kind)?;
        if vectors.len() != inputs.len() {
            return Err(EmbedError::CountMismatch { expected: inputs.len(), got: vectors.len() });
        }
        for v in vectors {
            let expected = *dims.get_or_insert(v.len());
            if v.len() != expected || expected == 0 {
                return Err(EmbedError::DimensionMismatch { expected, got: v.len() });
            }
            out.push(EmbeddingVector::normalized(v));
        }
    }
    Ok(out)
}

/// Hashed bag-of-words projection used for offline tests.
///
/// Each lowercase alphanumeric run is hashed with 64-bit FNV-1a; the hash
/// modulo `dims` picks the bucket and the top bit picks the sign (+1 when 0).
/// The vector is the sum of the signed one-hot buckets.
#[derive(Debug, Clone)]
pub struct DeterministicTestProvider {
    dims: usize,
}

impl DeterministicTestProvider {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "dims must be positive");
        Self { dims }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn project(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dims];
        let lower = text.to_lowercase();
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let h = fnv1a64(word.as_bytes());
            let bucket = (h % self.dims as u64) as usize;
            v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        v
    }
}

impl Default for DeterministicTestProvider {
    fn default() -> Self {
        Self::new(64)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for DeterministicTestProvider {
    fn id(&self) -> &str {
        DETERMINISTIC_TEST_PROVIDER
    }

    fn embed_batch(&self, inputs: &[String], _kind: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(inputs.iter().map(|t| self.project(t)).collect())
    }

    fn max_batch(&self) -> usize {
        usize::MAX
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    inputs: &'a [String],
    kind: EmbedKind,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Remote provider speaking `POST {"inputs", "kind"} -> {"vectors"}`.
pub struct HttpEmbeddingProvider {
    id: String,
    endpoint: String,
    batch: usize,
    agent: ureq::Agent,
}

impl HttpEmbeddingProvider {
    pub fn new(id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self { id: id.into(), endpoint: endpoint.into(), batch: 32, agent }
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch.max(1);
        self
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed_batch(&self, inputs: &[String], kind: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError> {
        let unavailable = |e: ureq::Error| EmbedError::ProviderUnavailable(format!("{}: {e}", self.endpoint));
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { inputs, kind })
            .map_err(unavailable)?;
        let body: EmbedResponse = resp.body_mut().read_json().map_err(unavailable)?;
        Ok(body.vectors)
    }

    fn max_batch(&self) -> usize {
        self.batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Recording(Mutex<Vec<String>>);

    impl EmbeddingProvider for Recording {
        fn id(&self) -> &str {
            "recording"
        }
        fn embed_batch(&self, inputs: &[String], _: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError> {
            self.0.lock().unwrap().extend(inputs.iter().cloned());
            Ok(inputs.iter().map(|s| vec![s.len() as f32, 1.0]).collect())
        }
        fn max_batch(&self) -> usize {
            2
        }
    }

    fn cos(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
        a.dot(&b.values)
    }

    #[test]
    fn queries_are_prefixed_passages_are_not() {
        let p = Recording(Mutex::new(vec![]));
        let q = "What antibiotics is the patient taking?".to_string();
        embed(&[q.clone()], EmbedKind::Query, &p).unwrap();
        embed(&[q.clone()], EmbedKind::Passage, &p).unwrap();
        let seen = p.0.lock().unwrap();
        assert_eq!(seen[0], format!("Represent this sentence for searching relevant passages: {q}"));
        assert_eq!(seen[1], q);
    }

    #[test]
    fn batching_is_transparent_and_normalized() {
        let p = Recording(Mutex::new(vec![]));
        let texts: Vec<String> = (0..5).map(|i| "x".repeat(i + 1)).collect();
        let v = embed(&texts, EmbedKind::Passage, &p).unwrap();
        assert_eq!(v.len(), 5);
        for e in &v {
            let n: f64 = e.values.iter().map(|&x| f64::from(x).powi(2)).sum();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_provider_similarity_ordering() {
        let p = DeterministicTestProvider::new(64);
        let t = |s: &str| s.to_string();
        let v = embed(&[t("chest x-ray"), t("chest x-ray film"), t("insulin dosing")], EmbedKind::Passage, &p).unwrap();
        assert_eq!(v[0], embed(&[t("chest x-ray")], EmbedKind::Passage, &p).unwrap()[0]);
        let near = cos(&v[0], &v[1]);
        let far = cos(&v[0], &v[2]);
        assert!(near > far, "{near} vs {far}");
        // With no bucket collisions: 3 shared words, norms sqrt(3) and sqrt(4).
        assert!((near - 3.0 / 12f64.sqrt()).abs() < 1e-6, "{near}");
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    struct Ragged;
    impl EmbeddingProvider for Ragged {
        fn id(&self) -> &str {
            "ragged"
        }
        fn embed_batch(&self, inputs: &[String], _: EmbedKind) -> Result<Vec<Vec<f32>>, EmbedError> {
            Ok(inputs.iter().enumerate().map(|(i, _)| vec![1.0; i + 1]).collect())
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = embed(&["a".into(), "b".into()], EmbedKind::Passage, &Ragged).unwrap_err();
        assert!(matches!(err, EmbedError::DimensionMismatch { expected: 1, got: 2 }));
    }
}
