//! Tokenization, sliding-window chunking, embeddings and exact cosine retrieval.

pub mod chunker;
pub mod embedding;
pub mod index;
pub mod tokenizer;

pub use chunker::{chunk_note, Chunk, ChunkParams};
pub use embedding::{
    embed, DeterministicTestProvider, EmbedError, EmbedKind, EmbeddingProvider, EmbeddingVector,
    HttpEmbeddingProvider, DETERMINISTIC_TEST_PROVIDER, QUERY_PREFIX,
};
pub use index::{ChunkIndex, IndexCache, IndexCacheKey, IndexError, RetrievalQuery, ScoredChunk};
pub use tokenizer::{count_tokens, tokenizer_by_id, RuleTokenizer, Tokenizer, RULE_TOKENIZER_ID};
