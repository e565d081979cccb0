//! Weighted fusion of dense, sparse and re-ranker channels.

use serde::{Deserialize, Serialize};

use super::{DocKind, IndexError, IndexedDoc};
use crate::tokenize::terms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights")]
pub struct HybridWeights {
    pub cosine: f64,
    pub bm25: f64,
    pub ce: f64,
}

#[derive(Deserialize)]
struct RawWeights {
    cosine: f64,
    bm25: f64,
    ce: f64,
}

impl TryFrom<RawWeights> for HybridWeights {
    type Error = IndexError;
    fn try_from(w: RawWeights) -> Result<Self, Self::Error> {
        HybridWeights::new(w.cosine, w.bm25, w.ce)
    }
}

impl Default for HybridWeights {
    fn default() -> Self {
        HybridWeights {
            cosine: 0.5,
            bm25: 0.3,
            ce: 0.2,
        }
    }
}

impl HybridWeights {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(cosine: f64, bm25: f64, ce: f64) -> Result<Self, IndexError> {
        let w = HybridWeights { cosine, bm25, ce };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        let parts = [self.cosine, self.bm25, self.ce];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) || (sum - 1.0).abs() > Self::TOLERANCE {
            return Err(IndexError::InvalidWeights {
                cosine: self.cosine,
                bm25: self.bm25,
                ce: self.ce,
            });
        }
        Ok(())
    }
}

/// A retrieved document with its per-channel scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub id: String,
    pub kind: DocKind,
    pub cosine: f64,
    pub bm25_norm: f64,
    pub ce: f64,
    pub hybrid: f64,
    pub token_cost: u64,
}

impl ScoredCandidate {
    pub fn recompute_hybrid(&mut self, weights: &HybridWeights) {
        self.hybrid = fuse(self.cosine, self.bm25_norm, self.ce, weights);
    }
}

/// `w1·cos + w2·bm25_norm + w3·ce`, unchecked.
pub fn fuse(cosine: f64, bm25_norm: f64, ce: f64, w: &HybridWeights) -> f64 {
    w.cosine * cosine + w.bm25 * bm25_norm + w.ce * ce
}

/// Checked fusion: rejects weights that are negative or do not sum to 1.
pub fn hybrid_score(cosine: f64, bm25_norm: f64, ce: f64, weights: &HybridWeights) -> Result<f64, IndexError> {
    weights.validate()?;
    Ok(fuse(cosine, bm25_norm, ce, weights))
}

/// Min–max normalization into `[0, 1]`. A constant positive pool maps to 1,
/// a constant zero pool to 0.
pub fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let (min, max) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    raw.iter()
        .map(|&x| {
            if max > min {
                (x - min) / (max - min)
            } else if max > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Second-stage relevance model producing a score in `[0, 1]`.
pub trait Reranker: Send + Sync {
    fn id(&self) -> String;
    fn score(&self, query: &str, text: &str) -> f64;

    /// Same as [`Reranker::score`] on the document text; implementations
    /// may use the precomputed terms instead.
    fn score_doc(&self, query: &str, doc: &IndexedDoc) -> f64 {
        self.score(query, &doc.text)
    }
}

/// Jaccard overlap of the query and document term sets.
#[derive(Debug, Clone, Copy, Default)]
pub struct JaccardReranker;

impl Reranker for JaccardReranker {
    fn id(&self) -> String {
        "jaccard-terms".into()
    }

    fn score(&self, query: &str, text: &str) -> f64 {
        let mut d = terms(text);
        d.sort_unstable();
        d.dedup();
        jaccard_sorted(query, &d)
    }

    fn score_doc(&self, query: &str, doc: &IndexedDoc) -> f64 {
        jaccard_sorted(query, &doc.terms)
    }
}

fn jaccard_sorted(query: &str, doc_terms: &[String]) -> f64 {
    let mut q = terms(query);
    q.sort_unstable();
    q.dedup();
    let shared = q.iter().filter(|t| doc_terms.binary_search(t).is_ok()).count();
    let union = q.len() + doc_terms.len() - shared;
    if union == 0 {
        return 0.0;
    }
    shared as f64 / union as f64
}
