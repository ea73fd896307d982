//! Hybrid corpus loading and term statistics.
//!
//! A corpus mixes free-text passages with table rows serialized into a
//! flat pipe-delimited string so both kinds can be indexed and retrieved
//! uniformly. Document-frequency statistics computed at load time feed
//! TF-IDF weighting everywhere downstream (retrieval scores, graph edge
//! weights, bridge linking).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot open corpus file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Passage,
    TableRow,
}

/// Structured origin of a serialized table row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMeta {
    pub table_title: String,
    pub row_index: usize,
    /// Ordered (header, value) pairs.
    pub cells: Vec<(String, String)>,
}

/// A passage or a serialized table row; the node unit of all evidence graphs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub kind: DocKind,
    pub title: String,
    /// For table rows this is exactly `serialize_table_row(table_meta)`.
    pub text: String,
    pub table_meta: Option<TableMeta>,
}

impl Document {
    pub fn passage(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            kind: DocKind::Passage,
            title: title.into(),
            text: text.into(),
            table_meta: None,
        }
    }

    pub fn table_row(id: impl Into<String>, meta: TableMeta) -> Self {
        let text = serialize_table_row(&meta.table_title, meta.row_index, &meta.cells);
        Document {
            id: id.into(),
            kind: DocKind::TableRow,
            title: meta.table_title.clone(),
            text,
            table_meta: Some(meta),
        }
    }
}

/// Immutable document collection plus the term statistics derived from it.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    by_id: HashMap<String, usize>,
    doc_frequency: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if by_id.insert(doc.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        let mut doc_frequency = BTreeMap::new();
        for doc in &documents {
            let terms: HashSet<String> = tokenize(&doc.text).into_iter().collect();
            for t in terms {
                *doc_frequency.entry(t).or_insert(0) += 1;
            }
        }
        Ok(Corpus {
            documents,
            by_id,
            doc_frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.documents[i])
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.doc_frequency.get(term).copied().unwrap_or(0)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.doc_frequency.len()
    }

    /// Smoothed inverse document frequency: `ln(1 + N / df)`.
    ///
    /// Positive even when a term occurs in every document; terms absent
    /// from the corpus get no weight at all.
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.doc_frequency(term);
        if df == 0 {
            0.0
        } else {
            (1.0 + self.documents.len() as f64 / df as f64).ln()
        }
    }
}

/// Sparse non-negative TF-IDF weights; zero-weight terms are absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermVector {
    pub weights: BTreeMap<String, f64>,
}

impl TermVector {
    pub fn norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &TermVector) -> f64 {
        let (small, large) = if self.weights.len() <= other.weights.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .weights
            .iter()
            .filter_map(|(t, w)| large.weights.get(t).map(|v| w * v))
            .sum()
    }

    pub fn cosine(&self, other: &TermVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }
}

static STOPWORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();

fn stopwords() -> &'static HashSet<&'static str> {
    STOPWORDS.get_or_init(|| {
        [
            "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any",
            "are", "as", "at", "be", "because", "been", "before", "being", "below", "between",
            "both", "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during",
            "each", "few", "for", "from", "further", "had", "has", "have", "having", "he", "her",
            "here", "hers", "herself", "him", "himself", "his", "how", "if", "in", "into", "is",
            "it", "its", "itself", "just", "me", "more", "most", "my", "myself", "no", "nor",
            "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours",
            "ourselves", "out", "over", "own", "same", "she", "should", "so", "some", "such",
            "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there",
            "these", "they", "this", "those", "through", "to", "too", "under", "until", "up",
            "very", "was", "we", "were", "what", "when", "where", "which", "while", "who",
            "whom", "why", "will", "with", "you", "your", "yours", "yourself", "yourselves",
        ]
        .into_iter()
        .collect()
    })
}

/// Lowercased alphanumeric tokens, minimum length 2, stopwords removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2 && !stopwords().contains(t))
        .map(str::to_string)
        .collect()
}

/// Flatten a table row into `Table:{title}|Row:{index}|h1|v1|h2|v2|...`.
///
/// Pipe characters inside titles, headers, or values would break the
/// format, so they are replaced with `/` and a warning is logged.
pub fn serialize_table_row(table_title: &str, row_index: usize, cells: &[(String, String)]) -> String {
    let escape = |s: &str| {
        if s.contains('|') {
            log::warn!("table cell contains '|' delimiter, replacing with '/': {s:?}");
            s.replace('|', "/")
        } else {
            s.to_string()
        }
    };
    let mut out = format!("Table:{}|Row:{}", escape(table_title), row_index);
    for (header, value) in cells {
        out.push('|');
        out.push_str(&escape(header));
        out.push('|');
        out.push_str(&escape(value));
    }
    out
}

/// Raw term count of each token in `text`.
pub fn term_counts(text: &str) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in tokenize(text) {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// TF-IDF vector of a document: `tf(t) * ln(1 + N / df(t))`.
pub fn tfidf_vector(doc: &Document, corpus: &Corpus) -> TermVector {
    tfidf_of_text(&doc.text, corpus)
}

/// TF-IDF vector of arbitrary text (e.g. a query) against corpus statistics.
/// Terms unseen in the corpus are skipped: they can match no document.
pub fn tfidf_of_text(text: &str, corpus: &Corpus) -> TermVector {
    let mut weights = BTreeMap::new();
    for (term, tf) in term_counts(text) {
        let idf = corpus.idf(&term);
        if idf > 0.0 {
            weights.insert(term, tf as f64 * idf);
        }
    }
    TermVector { weights }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CorpusRecord {
    Passage {
        id: String,
        title: String,
        text: String,
    },
    TableRow {
        id: String,
        table_title: String,
        row_index: usize,
        cells: Vec<(String, String)>,
    },
}

/// Load a JSON-lines corpus file (one document per line).
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
        let doc = match record {
            CorpusRecord::Passage { id, title, text } => Document::passage(id, title, text),
            CorpusRecord::TableRow {
                id,
                table_title,
                row_index,
                cells,
            } => Document::table_row(
                id,
                TableMeta {
                    table_title,
                    row_index,
                    cells,
                },
            ),
        };
        documents.push(doc);
    }
    Corpus::from_documents(documents)
}
