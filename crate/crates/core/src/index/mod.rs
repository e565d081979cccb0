//! Sparse and dense indices over both corpora, hybrid retrieval and
//! re-ranking.
//!
//! Corpora at the target scale (up to about a thousand documents) are scored
//! exhaustively; there is no approximate nearest-neighbour structure. An
//! [`IndexBundle`] is immutable once built and is rebuilt whenever the corpus
//! version changes.

mod bm25;
mod embed;
mod hybrid;

pub use bm25::{Bm25Params, Posting, SparseIndex};
pub use embed::{cosine, Embedder, HashingEmbedder, DEFAULT_DIM};
pub use hybrid::{
    fuse, hybrid_score, min_max_normalize, HybridWeights, JaccardReranker, Reranker, ScoredCandidate,
};

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, CorpusVersion};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum IndexError {
    #[error("embedder {embedder} produces dimension {actual}, expected {expected}")]
    DimensionMismatch {
        embedder: String,
        expected: usize,
        actual: usize,
    },
    #[error("unknown document id {0}")]
    UnknownDoc(String),
    #[error("hybrid weights must be non-negative and sum to 1 (got {cosine}, {bm25}, {ce})")]
    InvalidWeights { cosine: f64, bm25: f64, ce: f64 },
    #[error("query is empty")]
    EmptyQuery,
    #[error("retrieval depth must be at least 1")]
    ZeroDepth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Instruction,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedDoc {
    pub id: String,
    pub text: String,
    pub token_cost: u64,
    /// Sorted distinct terms of `text`.
    pub terms: Vec<String>,
}

impl IndexedDoc {
    pub fn new(id: impl Into<String>, text: impl Into<String>, token_cost: u64) -> Self {
        let text = text.into();
        let mut terms = crate::tokenize::terms(&text);
        terms.sort_unstable();
        terms.dedup();
        IndexedDoc {
            id: id.into(),
            text,
            token_cost,
            terms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    /// Aligned with the owning [`KindIndex::docs`].
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
    pub embedder_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindIndex {
    pub kind: DocKind,
    pub docs: Vec<IndexedDoc>,
    pub sparse: SparseIndex,
    pub dense: DenseIndex,
}

/// Telemetry view of one index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub kind: DocKind,
    pub doc_count: usize,
    pub avg_doc_length: f64,
    pub content_hash: String,
}

impl KindIndex {
    fn build(kind: DocKind, docs: Vec<IndexedDoc>, embedder: &dyn Embedder) -> Self {
        let sparse = SparseIndex::build(
            docs.iter().map(|d| (d.id.as_str(), d.text.as_str())),
            Bm25Params::default(),
        );
        let vectors = docs.iter().map(|d| embedder.embed(&d.text)).collect();
        KindIndex {
            kind,
            sparse,
            dense: DenseIndex {
                vectors,
                dim: embedder.dim(),
                embedder_id: embedder.id(),
            },
            docs,
        }
    }

    pub fn doc(&self, id: &str) -> Option<&IndexedDoc> {
        self.docs.iter().find(|d| d.id == id)
    }

    pub fn summary(&self) -> IndexSummary {
        let mut hasher = Sha256::new();
        hasher.update(self.dense.embedder_id.as_bytes());
        for (term, list) in &self.sparse.postings {
            hasher.update(term.as_bytes());
            for p in list {
                hasher.update((p.doc as u64).to_le_bytes());
                hasher.update(p.tf.to_le_bytes());
            }
        }
        for (doc, len) in self.docs.iter().zip(&self.sparse.doc_lengths) {
            hasher.update(doc.id.as_bytes());
            hasher.update(len.to_le_bytes());
        }
        for v in &self.dense.vectors {
            for x in v {
                hasher.update(x.to_bits().to_le_bytes());
            }
        }
        IndexSummary {
            kind: self.kind,
            doc_count: self.sparse.doc_count,
            avg_doc_length: self.sparse.avg_doc_length,
            content_hash: hex::encode(&hasher.finalize()[..16]),
        }
    }

    /// Scores every document against the query, sorted by hybrid score
    /// descending with ascending id as tie-break. The re-ranker channel is 0.
    pub fn rank_all(&self, query: &str, query_vec: &[f64], config: &RetrievalConfig) -> Vec<ScoredCandidate> {
        let raw = self.sparse.score_all(query);
        let bm25 = if config.normalize_bm25 {
            min_max_normalize(&raw)
        } else {
            raw
        };
        let mut out: Vec<ScoredCandidate> = self
            .docs
            .iter()
            .zip(&self.dense.vectors)
            .zip(bm25)
            .map(|((doc, vec), bm25_norm)| {
                let cos = cosine(query_vec, vec);
                ScoredCandidate {
                    id: doc.id.clone(),
                    kind: self.kind,
                    cosine: cos,
                    bm25_norm,
                    ce: 0.0,
                    hybrid: fuse(cos, bm25_norm, 0.0, &config.weights),
                    token_cost: doc.token_cost,
                }
            })
            .collect();
        sort_candidates(&mut out);
        out
    }
}

/// Hybrid descending, then id ascending.
pub fn sort_candidates(candidates: &mut [ScoredCandidate]) {
    candidates.sort_by(|a, b| match b.hybrid.total_cmp(&a.hybrid) {
        Ordering::Equal => a.id.cmp(&b.id),
        other => other,
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub m_a: usize,
    pub m_b: usize,
    pub weights: HybridWeights,
    /// Min–max normalize BM25 per query before fusion.
    pub normalize_bm25: bool,
    /// Run the second-stage re-ranker.
    pub rerank: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            m_a: 32,
            m_b: 32,
            weights: HybridWeights::default(),
            normalize_bm25: true,
            rerank: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Retrieved {
    pub instructions: Vec<ScoredCandidate>,
    pub tools: Vec<ScoredCandidate>,
}

/// Both corpora indexed under one embedder, tagged with the corpus version
/// they were built from.
#[derive(Clone)]
pub struct IndexBundle {
    pub corpus_version: CorpusVersion,
    pub instructions: KindIndex,
    pub tools: KindIndex,
    embedder: Arc<dyn Embedder>,
}

impl std::fmt::Debug for IndexBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IndexBundle")
            .field("corpus_version", &self.corpus_version)
            .field("embedder", &self.embedder.id())
            .field("instructions", &self.instructions.docs.len())
            .field("tools", &self.tools.docs.len())
            .finish()
    }
}

/// Indexes fragments (by text) and tools (by rendered schema).
pub fn build_indices(
    corpus: &Corpus,
    embedder: Arc<dyn Embedder>,
    expected_dim: usize,
) -> Result<IndexBundle, IndexError> {
    let probe = embedder.embed("dimension probe");
    if embedder.dim() != expected_dim || probe.len() != expected_dim {
        return Err(IndexError::DimensionMismatch {
            embedder: embedder.id(),
            expected: expected_dim,
            actual: probe.len(),
        });
    }
    let fragments = corpus
        .fragments
        .iter()
        .map(|f| IndexedDoc::new(f.id.clone(), f.text.clone(), f.token_cost))
        .collect();
    let tools = corpus
        .tools
        .iter()
        .map(|t| IndexedDoc::new(t.id.clone(), t.render(), t.token_cost))
        .collect();
    Ok(IndexBundle {
        corpus_version: corpus.version.clone(),
        instructions: KindIndex::build(DocKind::Instruction, fragments, embedder.as_ref()),
        tools: KindIndex::build(DocKind::Tool, tools, embedder.as_ref()),
        embedder,
    })
}

impl IndexBundle {
    pub fn embedder_id(&self) -> String {
        self.embedder.id()
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        self.embedder.embed(text)
    }

    pub fn kind(&self, kind: DocKind) -> &KindIndex {
        match kind {
            DocKind::Instruction => &self.instructions,
            DocKind::Tool => &self.tools,
        }
    }

    pub fn summaries(&self) -> Vec<IndexSummary> {
        vec![self.instructions.summary(), self.tools.summary()]
    }

    /// Full ranking of both corpora (no truncation, no re-ranking).
    pub fn rank_all(&self, query: &str, config: &RetrievalConfig) -> Result<Retrieved, IndexError> {
        if query.trim().is_empty() {
            return Err(IndexError::EmptyQuery);
        }
        config.weights.validate()?;
        let qv = self.embed(query);
        Ok(Retrieved {
            instructions: self.instructions.rank_all(query, &qv, config),
            tools: self.tools.rank_all(query, &qv, config),
        })
    }

    /// First-stage retrieval: top `m_a` instructions and top `m_b` tools by
    /// hybrid score. Pools smaller than the depth are returned whole.
    pub fn retrieve(&self, query: &str, config: &RetrievalConfig) -> Result<Retrieved, IndexError> {
        if config.m_a == 0 || config.m_b == 0 {
            return Err(IndexError::ZeroDepth);
        }
        let mut all = self.rank_all(query, config)?;
        all.instructions.truncate(config.m_a);
        all.tools.truncate(config.m_b);
        Ok(all)
    }

    /// Fills the re-ranker channel, recomputes the hybrid score and re-sorts.
    /// The output is a permutation of the input.
    pub fn rerank(
        &self,
        query: &str,
        mut candidates: Vec<ScoredCandidate>,
        reranker: &dyn Reranker,
        weights: &HybridWeights,
    ) -> Result<Vec<ScoredCandidate>, IndexError> {
        for c in &mut candidates {
            let doc = self
                .kind(c.kind)
                .doc(&c.id)
                .ok_or_else(|| IndexError::UnknownDoc(c.id.clone()))?;
            c.ce = reranker.score_doc(query, doc).clamp(0.0, 1.0);
            c.recompute_hybrid(weights);
        }
        sort_candidates(&mut candidates);
        Ok(candidates)
    }
}
