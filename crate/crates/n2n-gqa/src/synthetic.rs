//! Generator for a fully offline synthetic benchmark.
//!
//! Each planted question needs a 2-hop chain: a table row naming a bridge
//! entity, reachable from the question's topic, and an answer passage
//! reachable only through that entity. Lexical distractors share the
//! generic question vocabulary (registry, holder, ...) so that raw top-k
//! retrieval of the question surfaces noise instead of the answer.
//!
//! A subset of questions additionally plants a decoy passage that sits
//! inside the hop-1 top-k but outside the curated hop graph; its scripted
//! rule yields a wrong entity, so pipelines that skip graph pruning get
//! derailed while the curated pipeline is unaffected.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{Document, TableMeta};
use crate::gateway::{MockRule, ScriptedMock};

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticQuestion {
    pub id: String,
    pub question: String,
    pub gold: String,
    pub decoyed: bool,
}

#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub documents: Vec<Document>,
    pub questions: Vec<SyntheticQuestion>,
    pub mock: ScriptedMock,
}

const SUPPORTS_PER_QUESTION: usize = 9;

/// Build a suite of `n_questions` planted 2-hop chains plus `n_distractors`
/// lexical distractors. Questions where `index % 5 < 3` carry a decoy.
pub fn generate(n_questions: usize, n_distractors: usize) -> SyntheticSuite {
    let mut documents = Vec::new();
    let mut questions = Vec::new();
    let mut synthesis_rules = Vec::new();
    let mut decoy_rules = Vec::new();
    let mut entity_rules = Vec::new();
    let mut plan_rules = Vec::new();

    for i in 0..n_questions {
        let topic = format!("topic{i:02}alpha");
        let entity = format!("entity{i:02}bravo");
        let gold = format!("omega{i:02}charlie");
        let marker = format!("marker{i:02}final");
        let decoyed = i % 5 < 3;

        let question = format!("Who is the holder recorded for {topic} in the registry?");
        let qid = format!("q{i:02}");

        // hop-1 target: the bridge table row, strongly tied to the topic
        documents.push(Document::table_row(
            format!("{qid}-row"),
            TableMeta {
                table_title: format!("Registry {topic}"),
                row_index: 0,
                cells: vec![
                    ("Subject".into(), format!("{topic} research")),
                    ("Holder".into(), entity.clone()),
                ],
            },
        ));

        // hop-2 target: reachable only through the bridge entity
        documents.push(Document::passage(
            format!("{qid}-ans"),
            format!("Profile {i:02}"),
            format!("{entity} earned {gold} {marker}"),
        ));

        // supporting passages fill the curated hop graph
        for j in 0..SUPPORTS_PER_QUESTION {
            documents.push(Document::passage(
                format!("{qid}-sup{j}"),
                format!("Survey {i:02}-{j}"),
                format!("Survey of the {topic} registry filings volume{j}"),
            ));
        }

        if decoyed {
            // retrievable for the topic, but too dissimilar to survive the
            // hop-graph pruning; its rule extracts a wrong entity
            let decoymark = format!("decoymark{i:02}");
            let wrong = format!("wrongentity{i:02}");
            documents.push(Document::passage(
                format!("{qid}-decoy"),
                format!("Misc {i:02}"),
                format!("Archive {decoymark} scrap{i:02}x scrap{i:02}y clippings mention {topic}"),
            ));
            decoy_rules.push(MockRule {
                pattern: decoymark,
                response: wrong,
            });
        }

        synthesis_rules.push(MockRule {
            pattern: marker,
            response: gold.clone(),
        });
        entity_rules.push(MockRule {
            pattern: format!("Holder|{entity}"),
            response: entity.clone(),
        });
        let plan = serde_json::json!({
            "hops": 2,
            "initial_query": question,
            "expected_entity_type": "an identifier",
            "alternatives": [],
            "step_templates": ["Which achievement stands behind {entity1}?"],
        });
        plan_rules.push(MockRule {
            pattern: format!("Here is the question: {question}"),
            response: plan.to_string(),
        });

        questions.push(SyntheticQuestion {
            id: qid,
            question,
            gold,
            decoyed,
        });
    }

    for j in 0..n_distractors {
        let id = format!("dx{j:03}");
        if j % 3 == 0 {
            documents.push(Document::table_row(
                id,
                TableMeta {
                    table_title: format!("Ledger {j:03}"),
                    row_index: j,
                    cells: vec![
                        ("Registry".into(), format!("holder records {j:03}")),
                        ("Office".into(), format!("bureau annex {j:03}")),
                    ],
                },
            ));
        } else {
            documents.push(Document::passage(
                id,
                format!("Archive {j:03}"),
                format!(
                    "General registry holder records volume{j:03} archived by the bureau clerk office"
                ),
            ));
        }
    }

    // Order matters: synthesis markers outrank decoys, which outrank the
    // extraction rules; plan rules only ever match the plan prompt.
    let mut rules = synthesis_rules;
    rules.extend(decoy_rules);
    rules.extend(entity_rules);
    rules.extend(plan_rules);

    SyntheticSuite {
        documents,
        questions,
        mock: ScriptedMock {
            rules,
            default: "Not enough Context".to_string(),
        },
    }
}

fn corpus_record(doc: &Document) -> serde_json::Value {
    match &doc.table_meta {
        Some(meta) => serde_json::json!({
            "id": doc.id,
            "kind": "table_row",
            "table_title": meta.table_title,
            "row_index": meta.row_index,
            "cells": meta.cells,
        }),
        None => serde_json::json!({
            "id": doc.id,
            "kind": "passage",
            "title": doc.title,
            "text": doc.text,
        }),
    }
}

impl SyntheticSuite {
    pub fn write_corpus(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        for doc in &self.documents {
            writeln!(f, "{}", corpus_record(doc))?;
        }
        Ok(())
    }

    pub fn write_questions(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        for q in &self.questions {
            writeln!(
                f,
                "{}",
                serde_json::json!({"id": q.id, "question": q.question})
            )?;
        }
        Ok(())
    }

    pub fn write_golds(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        for q in &self.questions {
            writeln!(
                f,
                "{}",
                serde_json::json!({"id": q.id, "question": q.question, "answer": q.gold})
            )?;
        }
        Ok(())
    }

    pub fn write_mock_rules(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(&self.mock).expect("mock serializes");
        std::fs::write(path, json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    #[test]
    fn suite_has_expected_shape() {
        let suite = generate(50, 150);
        assert_eq!(suite.questions.len(), 50);
        assert!(suite.documents.len() >= 200);
        assert_eq!(suite.questions.iter().filter(|q| q.decoyed).count(), 30);
        // ids are unique: corpus construction enforces it
        Corpus::from_documents(suite.documents).unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(10, 30);
        let b = generate(10, 30);
        assert_eq!(a.documents, b.documents);
        assert_eq!(
            serde_json::to_string(&a.mock).unwrap(),
            serde_json::to_string(&b.mock).unwrap()
        );
    }
}
