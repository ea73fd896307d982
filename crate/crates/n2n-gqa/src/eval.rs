//! Answer scoring: Exact Match, token-level F1/precision/recall, and
//! per-run aggregation.
//!
//! Normalization follows the reading-comprehension convention: lowercase,
//! strip punctuation, drop the articles a/an/the, collapse whitespace.
//! F1 uses multiset token overlap.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to evaluate")]
    NoRecords,
    #[error("missing gold answer for id {0:?}")]
    MissingGold(String),
}

pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    // punctuation is deleted outright ("8.4" becomes "84"), matching the
    // reference extractive-QA normalizer
    let no_punct: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> u8 {
    (normalize_answer(pred) == normalize_answer(gold)) as u8
}

/// (f1, precision, recall) over normalized-token multisets.
pub fn token_f1(pred: &str, gold: &str) -> (f64, f64, f64) {
    let p_norm = normalize_answer(pred);
    let g_norm = normalize_answer(gold);
    let p_tokens: Vec<&str> = p_norm.split_whitespace().collect();
    let g_tokens: Vec<&str> = g_norm.split_whitespace().collect();
    match (p_tokens.is_empty(), g_tokens.is_empty()) {
        (true, true) => return (1.0, 1.0, 1.0),
        (true, false) | (false, true) => return (0.0, 0.0, 0.0),
        _ => {}
    }
    let mut gold_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &g_tokens {
        *gold_counts.entry(t).or_insert(0) += 1;
    }
    let mut common = 0usize;
    for t in &p_tokens {
        if let Some(c) = gold_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return (0.0, 0.0, 0.0);
    }
    let precision = common as f64 / p_tokens.len() as f64;
    let recall = common as f64 / g_tokens.len() as f64;
    let f1 = 2.0 * precision * recall / (precision + recall);
    (f1, precision, recall)
}

#[derive(Debug, Clone, Serialize)]
pub struct QuestionScore {
    pub id: String,
    pub em: u8,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Aggregate report; all values are unweighted means scaled to percent.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub em: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub per_question: Vec<QuestionScore>,
}

/// Score (id, predicted answer) pairs against gold answers.
pub fn evaluate(
    predictions: &[(String, String)],
    golds: &BTreeMap<String, String>,
) -> Result<EvalReport, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut per_question = Vec::with_capacity(predictions.len());
    for (id, pred) in predictions {
        let gold = golds
            .get(id)
            .ok_or_else(|| EvalError::MissingGold(id.clone()))?;
        let em = exact_match(pred, gold);
        let (f1, precision, recall) = token_f1(pred, gold);
        per_question.push(QuestionScore {
            id: id.clone(),
            em,
            f1,
            precision,
            recall,
        });
    }
    let n = per_question.len() as f64;
    let mean = |f: &dyn Fn(&QuestionScore) -> f64| {
        100.0 * per_question.iter().map(f).sum::<f64>() / n
    };
    Ok(EvalReport {
        n: per_question.len(),
        em: mean(&|q| q.em as f64),
        f1: mean(&|q| q.f1),
        precision: mean(&|q| q.precision),
        recall: mean(&|q| q.recall),
        per_question,
    })
}

/// Plain-text table with the EM, F1, P, R metric columns.
pub fn render_report_table(label: &str, report: &EvalReport) -> String {
    format!(
        "{:<30} {:>8} {:>8} {:>8} {:>8}\n{:<30} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
        "Method", "EM", "F1", "P", "R", label, report.em, report.f1, report.precision, report.recall
    )
}
