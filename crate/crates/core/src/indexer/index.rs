use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chunker::{chunk_note, Chunk, ChunkParams};
use super::embedding::{embed, EmbedError, EmbedKind, EmbeddingProvider, EmbeddingVector, QUERY_PREFIX};
use super::tokenizer::Tokenizer;
use crate::corpus::{Hospitalization, TaskKind};
use crate::hashing::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("index for encounter {0} holds no chunks")]
    EmptyIndex(String),
    #[error("retrieval needs n >= 1")]
    ZeroN,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("index cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub task: TaskKind,
    pub text: String,
    pub prefixed_text: String,
}

impl RetrievalQuery {
    pub fn new(task: TaskKind, text: impl Into<String>) -> Self {
        let text = text.into();
        let prefixed_text = format!("{QUERY_PREFIX}{text}");
        Self { task, text, prefixed_text }
    }

    /// The fixed per-task retrieval query.
    pub fn for_task(task: TaskKind) -> Self {
        let text = match task {
            TaskKind::Imaging => "X-ray, CT, MRI, ultrasound, NM imaging, echocardiogram, fluoroscopy",
            TaskKind::Antibiotics => "What antibiotics is the patient taking?",
            TaskKind::Diagnosis => "What are the patient's diagnoses?",
        };
        Self::new(task, text)
    }
}

/// Chunks of one hospitalization and their unit vectors, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkIndex {
    pub encounter_id: String,
    pub provider_id: String,
    pub dims: usize,
    pub chunks: Vec<Chunk>,
    vectors: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredChunk<'a> {
    pub chunk: &'a Chunk,
    pub score: f64,
}

impl ChunkIndex {
    pub fn build(
        h: &Hospitalization,
        tokenizer: &dyn Tokenizer,
        params: ChunkParams,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, IndexError> {
        let chunks: Vec<Chunk> = h
            .notes
            .par_iter()
            .map(|n| chunk_note(&h.encounter_id, n, tokenizer, params))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect();
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let embedded = embed(&texts, EmbedKind::Passage, provider)?;
        Self::from_parts(&h.encounter_id, provider.id(), chunks, embedded)
    }

    pub fn from_parts(
        encounter_id: &str,
        provider_id: &str,
        chunks: Vec<Chunk>,
        embedded: Vec<EmbeddingVector>,
    ) -> Result<Self, IndexError> {
        let dims = embedded.first().map_or(0, EmbeddingVector::dims);
        let mut vectors = Vec::with_capacity(dims * embedded.len());
        for v in &embedded {
            if v.dims() != dims {
                return Err(EmbedError::DimensionMismatch { expected: dims, got: v.dims() }.into());
            }
            vectors.extend_from_slice(&v.values);
        }
        Ok(Self { encounter_id: encounter_id.to_string(), provider_id: provider_id.to_string(), dims, chunks, vectors })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dims..(i + 1) * self.dims]
    }

    /// Embeds the query's text (the provider applies the prefix) and retrieves.
    pub fn retrieve(
        &self,
        query: &RetrievalQuery,
        n: usize,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Vec<ScoredChunk<'_>>, IndexError> {
        let qv = embed(std::slice::from_ref(&query.text), EmbedKind::Query, provider)?;
        self.retrieve_top_n(&qv[0], n)
    }

    /// Top-`n` chunks by cosine similarity. Ties go to the earlier note, then
    /// to the earlier token offset.
    pub fn retrieve_top_n(&self, query: &EmbeddingVector, n: usize) -> Result<Vec<ScoredChunk<'_>>, IndexError> {
        if n == 0 {
            return Err(IndexError::ZeroN);
        }
        if self.is_empty() {
            return Err(IndexError::EmptyIndex(self.encounter_id.clone()));
        }
        if query.dims() != self.dims {
            return Err(EmbedError::DimensionMismatch { expected: self.dims, got: query.dims() }.into());
        }
        let scores: Vec<f64> = (0..self.len()).map(|i| query.dot(self.vector(i)).clamp(-1.0, 1.0)).collect();
        let order = |&a: &usize, &b: &usize| self.rank_order(a, b, &scores);
        let mut ids: Vec<usize> = (0..self.len()).collect();
        let k = n.min(ids.len());
        if k < ids.len() {
            ids.select_nth_unstable_by(k - 1, order);
            ids.truncate(k);
        }
        ids.sort_unstable_by(order);
        Ok(ids.into_iter().map(|i| ScoredChunk { chunk: &self.chunks[i], score: scores[i] }).collect())
    }

    fn rank_order(&self, a: usize, b: usize, scores: &[f64]) -> Ordering {
        let (ca, cb) = (&self.chunks[a], &self.chunks[b]);
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| ca.note_timestamp.cmp(&cb.note_timestamp))
            .then_with(|| ca.token_span.0.cmp(&cb.token_span.0))
            .then_with(|| a.cmp(&b))
    }
}

/// On-disk cache of built indexes, one JSON file per key.
#[derive(Debug, Clone)]
pub struct IndexCache {
    dir: PathBuf,
}

/// Everything an index depends on besides the notes themselves.
#[derive(Debug, Clone, Serialize)]
pub struct IndexCacheKey<'a> {
    pub corpus_hash: &'a str,
    pub encounter_id: &'a str,
    pub task: TaskKind,
    pub tokenizer_id: &'a str,
    pub params: ChunkParams,
    pub provider_id: &'a str,
}

impl IndexCacheKey<'_> {
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("key serializes").as_bytes())
    }
}

impl IndexCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, key: &IndexCacheKey<'_>) -> PathBuf {
        self.dir.join(format!("{}-{}.json", sanitize(key.encounter_id), &key.digest()[..16]))
    }

    pub fn get(&self, key: &IndexCacheKey<'_>) -> Option<ChunkIndex> {
        let raw = fs::read(self.path(key)).ok()?;
        serde_json::from_slice(&raw).ok()
    }

    pub fn put(&self, key: &IndexCacheKey<'_>, index: &ChunkIndex) -> Result<PathBuf, IndexError> {
        fs::create_dir_all(&self.dir).map_err(|e| IndexError::Cache(e.to_string()))?;
        let path = self.path(key);
        let tmp = path.with_extension("tmp");
        let body = serde_json::to_vec(index).map_err(|e| IndexError::Cache(e.to_string()))?;
        fs::write(&tmp, body).map_err(|e| IndexError::Cache(e.to_string()))?;
        fs::rename(&tmp, &path).map_err(|e| IndexError::Cache(e.to_string()))?;
        Ok(path)
    }

    pub fn get_or_build(
        &self,
        key: &IndexCacheKey<'_>,
        build: impl FnOnce() -> Result<ChunkIndex, IndexError>,
    ) -> Result<ChunkIndex, IndexError> {
        if let Some(ix) = self.get(key) {
            return Ok(ix);
        }
        let ix = build()?;
        self.put(key, &ix)?;
        Ok(ix)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_timestamp, ClinicalNote, GoldSources, NoteType};
    use crate::indexer::embedding::DeterministicTestProvider;
    use crate::indexer::tokenizer::RuleTokenizer;

    fn hosp(texts: &[&str]) -> Hospitalization {
        Hospitalization {
            encounter_id: "E1".into(),
            admit_time: parse_timestamp("2024-01-01T00:00:00Z").unwrap(),
            discharge_time: parse_timestamp("2024-01-09T00:00:00Z").unwrap(),
            notes: texts
                .iter()
                .enumerate()
                .map(|(i, t)| ClinicalNote {
                    note_id: format!("n{i}"),
                    timestamp: parse_timestamp(&format!("2024-01-0{}T08:00:00Z", i + 1)).unwrap(),
                    note_type: NoteType::Progress,
                    raw_type: None,
                    author_service: None,
                    text: t.to_string(),
                })
                .collect(),
            gold: GoldSources::default(),
            truncation: None,
        }
    }

    #[test]
    fn saturates_and_ranks_self_first() {
        let p = DeterministicTestProvider::default();
        let h = hosp(&["chest x-ray shows opacity", "insulin sliding scale", "renal ultrasound today"]);
        let ix = ChunkIndex::build(&h, &RuleTokenizer, ChunkParams::default(), &p).unwrap();
        assert_eq!(ix.len(), 3);
        let q = EmbeddingVector { values: ix.vector(1).to_vec() };
        let hits = ix.retrieve_top_n(&q, 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].chunk.note_id, "n1");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ties_prefer_earlier_notes() {
        let p = DeterministicTestProvider::default();
        let h = hosp(&["same words here", "same words here", "different"]);
        let ix = ChunkIndex::build(&h, &RuleTokenizer, ChunkParams::default(), &p).unwrap();
        let q = EmbeddingVector { values: ix.vector(0).to_vec() };
        let hits = ix.retrieve_top_n(&q, 2).unwrap();
        assert_eq!(hits[0].chunk.note_id, "n0");
        assert_eq!(hits[1].chunk.note_id, "n1");
    }

    #[test]
    fn empty_index_and_zero_n() {
        let p = DeterministicTestProvider::default();
        let ix = ChunkIndex::build(&hosp(&[]), &RuleTokenizer, ChunkParams::default(), &p).unwrap();
        let q = EmbeddingVector::normalized(vec![1.0; 64]);
        assert!(matches!(ix.retrieve_top_n(&q, 3), Err(IndexError::EmptyIndex(_))));
        let ix = ChunkIndex::build(&hosp(&["a"]), &RuleTokenizer, ChunkParams::default(), &p).unwrap();
        assert!(matches!(ix.retrieve_top_n(&q, 0), Err(IndexError::ZeroN)));
    }

    #[test]
    fn query_prefix_text() {
        let q = RetrievalQuery::for_task(TaskKind::Antibiotics);
        assert_eq!(
            q.prefixed_text,
            "Represent this sentence for searching relevant passages: What antibiotics is the patient taking?"
        );
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = IndexCache::new(dir.path());
        let p = DeterministicTestProvider::default();
        let h = hosp(&["chest x-ray", "ct head"]);
        let key = IndexCacheKey {
            corpus_hash: "abc",
            encounter_id: "E1",
            task: TaskKind::Imaging,
            tokenizer_id: "rule-v1",
            params: ChunkParams::default(),
            provider_id: p.id(),
        };
        let built = cache
            .get_or_build(&key, || ChunkIndex::build(&h, &RuleTokenizer, ChunkParams::default(), &p))
            .unwrap();
        let again = cache.get_or_build(&key, || panic!("should hit cache")).unwrap();
        assert_eq!(built, again);
    }
}
