//! Pluggable top-k retrieval over the hybrid corpus.
//!
//! The default is a deterministic lexical retriever (TF-IDF cosine over an
//! inverted index). A remote JSON-over-HTTP retriever client lets a neural
//! scorer be plugged in behind the same interface.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{term_counts, tfidf_of_text, Corpus};

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("cannot build index over an empty corpus")]
    EmptyCorpus,
    #[error("remote retriever request failed: {0}")]
    Remote(String),
}

/// A document id with its raw retriever score (pre-normalization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub doc_id: String,
    pub score: f64,
}

/// Sort by score descending, ties broken by document id ascending.
pub fn sort_scored(docs: &mut [ScoredDocument]) {
    docs.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}

pub trait Retriever: Send + Sync {
    /// Top-k documents for a query, score-descending with id-ascending ties.
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<ScoredDocument>, RetrieveError>;
}

/// Inverted index with precomputed document vector norms for cosine scoring.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LexicalIndex {
    /// term -> postings of (doc position, raw term frequency)
    postings: BTreeMap<String, Vec<(usize, usize)>>,
    /// TF-IDF vector norm per document, indexed by corpus position.
    norms: Vec<f64>,
    doc_ids: Vec<String>,
    doc_count: usize,
}

impl LexicalIndex {
    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }
}

/// Build the inverted index and per-document norms from a corpus.
pub fn build_index(corpus: &Corpus) -> Result<LexicalIndex, RetrieveError> {
    if corpus.is_empty() {
        return Err(RetrieveError::EmptyCorpus);
    }
    let mut postings: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    let mut norms = Vec::with_capacity(corpus.len());
    let mut doc_ids = Vec::with_capacity(corpus.len());
    for (pos, doc) in corpus.documents().iter().enumerate() {
        let mut norm_sq = 0.0;
        for (term, tf) in term_counts(&doc.text) {
            let w = tf as f64 * corpus.idf(&term);
            norm_sq += w * w;
            postings.entry(term).or_default().push((pos, tf));
        }
        norms.push(norm_sq.sqrt());
        doc_ids.push(doc.id.clone());
    }
    Ok(LexicalIndex {
        postings,
        norms,
        doc_ids,
        doc_count: corpus.len(),
    })
}

/// TF-IDF cosine retrieval. Only documents sharing at least one query term
/// are candidates; no candidates yields an empty list.
pub fn retrieve_lexical(
    index: &LexicalIndex,
    corpus: &Corpus,
    query: &str,
    k: usize,
) -> Vec<ScoredDocument> {
    let qvec = tfidf_of_text(query, corpus);
    let qnorm = qvec.norm();
    if qnorm == 0.0 {
        return Vec::new();
    }
    let mut dots: HashMap<usize, f64> = HashMap::new();
    for (term, qw) in &qvec.weights {
        if let Some(posting) = index.postings.get(term) {
            let idf = corpus.idf(term);
            for &(pos, tf) in posting {
                *dots.entry(pos).or_insert(0.0) += qw * tf as f64 * idf;
            }
        }
    }
    let mut scored: Vec<ScoredDocument> = dots
        .into_iter()
        .map(|(pos, dot)| ScoredDocument {
            doc_id: index.doc_ids[pos].clone(),
            score: dot / (qnorm * index.norms[pos]),
        })
        .collect();
    sort_scored(&mut scored);
    scored.truncate(k);
    scored
}

/// The built-in retriever: an index paired with the corpus it was built from.
pub struct LexicalRetriever<'a> {
    pub index: LexicalIndex,
    pub corpus: &'a Corpus,
}

impl<'a> LexicalRetriever<'a> {
    pub fn new(corpus: &'a Corpus) -> Result<Self, RetrieveError> {
        Ok(LexicalRetriever {
            index: build_index(corpus)?,
            corpus,
        })
    }
}

impl Retriever for LexicalRetriever<'_> {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<ScoredDocument>, RetrieveError> {
        Ok(retrieve_lexical(&self.index, self.corpus, query, k))
    }
}

/// Union of per-query results; a document seen under several queries keeps
/// its maximum score; the merged pool is re-sorted and truncated to k.
pub fn retrieve_multi(
    retriever: &dyn Retriever,
    queries: &[String],
    k: usize,
) -> Result<Vec<ScoredDocument>, RetrieveError> {
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for q in queries {
        for sd in retriever.retrieve(q, k)? {
            let e = best.entry(sd.doc_id).or_insert(f64::NEG_INFINITY);
            if sd.score > *e {
                *e = sd.score;
            }
        }
    }
    let mut merged: Vec<ScoredDocument> = best
        .into_iter()
        .map(|(doc_id, score)| ScoredDocument { doc_id, score })
        .collect();
    sort_scored(&mut merged);
    merged.truncate(k);
    Ok(merged)
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    query: &'a str,
    k: usize,
}

#[derive(Deserialize)]
struct RemoteResponse {
    results: Vec<RemoteResult>,
}

#[derive(Deserialize)]
struct RemoteResult {
    id: String,
    score: f64,
}

/// JSON-over-HTTP retriever client. Returned ids must resolve against the
/// loaded corpus; unknown ids are dropped with a warning.
pub struct RemoteRetriever {
    endpoint: String,
    known_ids: BTreeSet<String>,
    client: reqwest::blocking::Client,
}

impl RemoteRetriever {
    pub fn new(endpoint: impl Into<String>, corpus: &Corpus, timeout: Duration) -> Self {
        RemoteRetriever {
            endpoint: endpoint.into(),
            known_ids: corpus.documents().iter().map(|d| d.id.clone()).collect(),
            client: reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .expect("client construction cannot fail with static options"),
        }
    }
}

impl Retriever for RemoteRetriever {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<ScoredDocument>, RetrieveError> {
        let response: RemoteResponse = self
            .client
            .post(&self.endpoint)
            .json(&RemoteRequest { query, k })
            .send()
            .map_err(|e| RetrieveError::Remote(e.to_string()))?
            .json()
            .map_err(|e| RetrieveError::Remote(e.to_string()))?;
        let mut scored: Vec<ScoredDocument> = response
            .results
            .into_iter()
            .filter_map(|r| {
                if self.known_ids.contains(&r.id) {
                    Some(ScoredDocument {
                        doc_id: r.id,
                        score: r.score,
                    })
                } else {
                    log::warn!("remote retriever returned unknown id {:?}, dropping", r.id);
                    None
                }
            })
            .collect();
        sort_scored(&mut scored);
        scored.truncate(k);
        Ok(scored)
    }
}
