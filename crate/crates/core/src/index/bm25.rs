//! Okapi BM25 over an in-memory inverted index.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::IndexError;
use crate::tokenize::terms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position of the document in `doc_ids`.
    pub doc: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    pub postings: BTreeMap<String, Vec<Posting>>,
    pub doc_ids: Vec<String>,
    /// Term count per document, aligned with `doc_ids`.
    pub doc_lengths: Vec<u32>,
    pub avg_doc_length: f64,
    pub doc_count: usize,
    pub params: Bm25Params,
}

impl SparseIndex {
    pub fn build<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>, params: Bm25Params) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_ids = Vec::new();
        let mut doc_lengths = Vec::new();
        for (doc, (id, text)) in docs.into_iter().enumerate() {
            let tokens = terms(text);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, tf) in tf {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
            doc_ids.push(id.to_string());
            doc_lengths.push(tokens.len() as u32);
        }
        let doc_count = doc_ids.len();
        let avg_doc_length = if doc_count == 0 {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_count as f64
        };
        SparseIndex {
            postings,
            doc_ids,
            doc_lengths,
            avg_doc_length,
            doc_count,
            params,
        }
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`
    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Raw BM25 for every document, aligned with `doc_ids`. Repeated query
    /// terms count once.
    pub fn score_all(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_count];
        let query_terms: BTreeSet<String> = terms(query).into_iter().collect();
        for term in &query_terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(list.len());
            for p in list {
                scores[p.doc] += idf * self.tf_component(p.tf, self.doc_lengths[p.doc]);
            }
        }
        scores
    }

    pub fn score(&self, query: &str, doc_id: &str) -> Result<f64, IndexError> {
        let doc = self
            .doc_ids
            .iter()
            .position(|d| d == doc_id)
            .ok_or_else(|| IndexError::UnknownDoc(doc_id.to_string()))?;
        Ok(self.score_all(query)[doc])
    }

    fn tf_component(&self, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let length_ratio = if self.avg_doc_length > 0.0 {
            doc_len as f64 / self.avg_doc_length
        } else {
            1.0
        };
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * length_ratio))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_docs() -> SparseIndex {
        SparseIndex::build([("doc1", "alpha beta"), ("doc2", "beta gamma")], Bm25Params::default())
    }

    #[test]
    fn hand_evaluated_score() {
        let idx = two_docs();
        // idf = ln(1 + 1.5/1.5) = ln 2, tf component = 2.2/2.2 = 1
        let s = idx.score("alpha", "doc1").unwrap();
        assert!((s - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(idx.score("alpha", "doc2").unwrap(), 0.0);
    }

    #[test]
    fn absent_term_contributes_nothing() {
        let idx = two_docs();
        assert_eq!(idx.score("delta", "doc1").unwrap(), 0.0);
        let with = idx.score("alpha delta", "doc1").unwrap();
        assert_eq!(with, idx.score("alpha", "doc1").unwrap());
    }

    #[test]
    fn unknown_doc_is_error() {
        assert!(matches!(two_docs().score("alpha", "zzz"), Err(IndexError::UnknownDoc(_))));
    }

    #[test]
    fn stats_match_documents() {
        let idx = two_docs();
        assert_eq!(idx.doc_count, 2);
        assert_eq!(idx.avg_doc_length, 2.0);
        assert_eq!(idx.postings["beta"].len(), 2);
        let empty = SparseIndex::build(std::iter::empty(), Bm25Params::default());
        assert_eq!(empty.doc_count, 0);
        assert!(empty.score_all("x").is_empty());
    }
}
