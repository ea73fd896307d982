//! Bridge-aware hybrid selection over the aggregated evidence pool.
//!
//! The top-scoring passage and table row are checked for a lexical link
//! (the passage contains one of the row's cell values as a whole phrase).
//! A linked table gets the priority boost alone; an unlinked pair gets the
//! boost on both sides so neither reasoning branch is starved.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::corpus::{DocKind, Document};
use crate::retriever::ScoredDocument;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("expected a table row, got {0:?}")]
    NotATableRow(String),
    #[error("expected a passage, got {0:?}")]
    NotAPassage(String),
    #[error("duplicate document id in pool: {0}")]
    DuplicateId(String),
}

/// Retrieved evidence partitioned by kind.
#[derive(Debug, Clone, Default)]
pub struct HybridPool {
    pub passages: Vec<ScoredDocument>,
    pub tables: Vec<ScoredDocument>,
}

impl HybridPool {
    /// Partition already-deduplicated scored documents by kind, resolving
    /// each id against the corpus.
    pub fn partition(
        docs: &[ScoredDocument],
        lookup: impl Fn(&str) -> DocKind,
    ) -> Result<Self, BridgeError> {
        let mut seen = BTreeSet::new();
        let mut pool = HybridPool::default();
        for sd in docs {
            if !seen.insert(sd.doc_id.clone()) {
                return Err(BridgeError::DuplicateId(sd.doc_id.clone()));
            }
            match lookup(&sd.doc_id) {
                DocKind::Passage => pool.passages.push(sd.clone()),
                DocKind::TableRow => pool.tables.push(sd.clone()),
            }
        }
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.passages.len() + self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty() && self.tables.is_empty()
    }
}

/// Cell values of a table row, lowercased and trimmed; empty values dropped.
pub fn key_entities(table_row: &Document) -> Result<BTreeSet<String>, BridgeError> {
    let meta = table_row
        .table_meta
        .as_ref()
        .ok_or_else(|| BridgeError::NotATableRow(table_row.id.clone()))?;
    Ok(meta
        .cells
        .iter()
        .map(|(_, value)| value.trim().to_lowercase())
        .filter(|v| !v.is_empty())
        .collect())
}

/// Case-insensitive whole-phrase containment on token boundaries.
/// "new york" matches inside "New York is..." but not inside "Newark".
fn contains_phrase(text: &str, phrase: &str) -> bool {
    let haystack = text.to_lowercase();
    let needle = phrase.to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let hay: Vec<char> = haystack.chars().collect();
    let nee: Vec<char> = needle.chars().collect();
    if nee.len() > hay.len() {
        return false;
    }
    for start in 0..=(hay.len() - nee.len()) {
        if hay[start..start + nee.len()] != nee[..] {
            continue;
        }
        let before_ok = start == 0 || !hay[start - 1].is_alphanumeric() || !nee[0].is_alphanumeric();
        let end = start + nee.len();
        let after_ok =
            end == hay.len() || !hay[end].is_alphanumeric() || !nee[nee.len() - 1].is_alphanumeric();
        if before_ok && after_ok {
            return true;
        }
    }
    false
}

/// The linking function: 1 iff some key entity of the table row occurs in
/// the passage text as a whole phrase.
pub fn link(passage: &Document, table_row: &Document) -> Result<bool, BridgeError> {
    if passage.kind != DocKind::Passage {
        return Err(BridgeError::NotAPassage(passage.id.clone()));
    }
    let entities = key_entities(table_row)?;
    Ok(entities.iter().any(|e| contains_phrase(&passage.text, e)))
}

/// Priority-boost reranking of the pool.
///
/// For multi-hop questions with both kinds present, the top table row gets
/// the boost when it links to the top passage, otherwise both tops get it.
/// Everything is returned sorted by boosted score desc, id asc; no document
/// is ever dropped.
pub fn select(
    pool: &HybridPool,
    beta: f64,
    multi_hop: bool,
    lookup: impl Fn(&str) -> Document,
) -> Vec<ScoredDocument> {
    let top_of = |docs: &[ScoredDocument]| -> Option<ScoredDocument> {
        docs.iter()
            .max_by(|a, b| {
                a.score
                    .partial_cmp(&b.score)
                    .unwrap()
                    .then_with(|| b.doc_id.cmp(&a.doc_id))
            })
            .cloned()
    };

    let mut merged: Vec<ScoredDocument> =
        pool.passages.iter().chain(pool.tables.iter()).cloned().collect();
    crate::retriever::sort_scored(&mut merged);

    if multi_hop && !pool.passages.is_empty() && !pool.tables.is_empty() {
        let p_top = top_of(&pool.passages).expect("non-empty");
        let t_top = top_of(&pool.tables).expect("non-empty");
        let linked = link(&lookup(&p_top.doc_id), &lookup(&t_top.doc_id)).unwrap_or(false);
        for sd in &mut merged {
            if sd.doc_id == t_top.doc_id || (!linked && sd.doc_id == p_top.doc_id) {
                sd.score += beta;
            }
        }
        // stable: non-boosted documents keep their relative order
        merged.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    }
    merged
}
