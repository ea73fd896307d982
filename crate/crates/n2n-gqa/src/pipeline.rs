//! End-to-end orchestration: plan, execute hops with per-hop graph
//! curation and entity extraction, aggregate evidence, bridge-select,
//! build and prune the final graph, synthesize the answer.
//!
//! Three ablation modes sit beside the full pipeline: raw retrieval
//! straight to the reader, query decomposition without graphs, and graph
//! curation with the structural boost disabled.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{select, HybridPool};
use crate::corpus::Corpus;
use crate::gateway::{complete, render_prompt, Backend, GatewayError, PromptKind, RetryPolicy};
use crate::graph::{
    build_graph, graph_to_context, graphrank, min_max_normalize, prune, render_document,
    EvidenceGraph, GraphNode, NormRole, PruneConstraints,
};
use crate::planner::{generate_plan, instantiate_template, EntityBinding, PlanError, QueryPlan};
use crate::retriever::{retrieve_multi, RetrieveError, Retriever, ScoredDocument};

pub const NOT_ENOUGH_CONTEXT: &str = "Not enough Context";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("retrieval failed: {0}")]
    Retrieve(#[from] RetrieveError),
    #[error("gateway failure: {error}")]
    Gateway {
        error: GatewayError,
        /// Everything gathered before the failure; `answer` is empty.
        partial: Box<AnswerRecord>,
    },
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    VanillaRag,
    DecompRag,
    GraphNoRank,
    Full,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::VanillaRag => "vanilla",
            Mode::DecompRag => "decomp",
            Mode::GraphNoRank => "norank",
            Mode::Full => "full",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" => Ok(Mode::VanillaRag),
            "decomp" => Ok(Mode::DecompRag),
            "norank" => Ok(Mode::GraphNoRank),
            "full" => Ok(Mode::Full),
            other => Err(format!(
                "unknown mode {other:?} (expected vanilla|decomp|norank|full)"
            )),
        }
    }
}

/// All pipeline hyperparameters; defaults are the reference settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub final_k: usize,
    pub final_unique: usize,
    pub final_prune: PruneConstraints,
    pub hop_k: usize,
    pub hop_prune: PruneConstraints,
    pub beta: f64,
    pub mode: Mode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 0.85,
            final_k: 100,
            final_unique: 50,
            final_prune: PruneConstraints {
                min_nodes: 12,
                max_nodes: 25,
                min_passages: 2,
                min_tables: 2,
            },
            hop_k: 20,
            hop_prune: PruneConstraints {
                min_nodes: 5,
                max_nodes: 10,
                min_passages: 0,
                min_tables: 0,
            },
            beta: 1.0,
            mode: Mode::Full,
        }
    }
}

impl PipelineConfig {
    /// The structural-boost weight actually applied: disabling GraphRank
    /// means alpha = 1.0.
    pub fn effective_alpha(&self) -> f64 {
        match self.mode {
            Mode::GraphNoRank => 1.0,
            _ => self.alpha,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HopResult {
    pub hop_index: usize,
    pub query: String,
    pub retrieved: Vec<ScoredDocument>,
    pub pruned_graph: EvidenceGraph,
    pub extracted_entity: Option<EntityBinding>,
}

/// Full trace of one question through the pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct AnswerRecord {
    pub id: String,
    pub question: String,
    pub plan: QueryPlan,
    pub hops: Vec<HopResult>,
    pub final_pool_size: usize,
    pub final_graph: EvidenceGraph,
    pub reasoning_path: String,
    pub answer: String,
    pub warnings: Vec<String>,
    /// doc id -> which stages retrieved it ("hop1", "hop2", ..., "final").
    pub provenance: BTreeMap<String, Vec<String>>,
}

/// An edgeless graph over documents in list order, for the modes that skip
/// graph construction but still record their evidence.
fn flat_graph(docs: &[ScoredDocument], corpus: &Corpus) -> EvidenceGraph {
    EvidenceGraph {
        nodes: docs
            .iter()
            .filter_map(|sd| {
                corpus.get(&sd.doc_id).map(|doc| GraphNode {
                    doc: doc.clone(),
                    semantic_score: sd.score,
                    graphrank: 0.0,
                })
            })
            .collect(),
        edges: Vec::new(),
    }
}

fn render_docs(docs: &[ScoredDocument], corpus: &Corpus) -> String {
    docs.iter()
        .filter_map(|sd| corpus.get(&sd.doc_id).map(render_document))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// One hop: retrieve (query plus alternatives), curate the hop graph, and
/// optionally extract the intermediate entity from its rendered context.
#[allow(clippy::too_many_arguments)]
pub fn execute_hop(
    hop_index: usize,
    step_query: &str,
    alternatives: &[String],
    retriever: &dyn Retriever,
    corpus: &Corpus,
    backend: &dyn Backend,
    config: &PipelineConfig,
    policy: RetryPolicy,
    extract: bool,
    warnings: &mut Vec<String>,
) -> Result<HopResult, GatewayError> {
    let mut queries = vec![step_query.to_string()];
    queries.extend(alternatives.iter().cloned());
    let retrieved = match retrieve_multi(retriever, &queries, config.hop_k) {
        Ok(r) => r,
        Err(e) => {
            warnings.push(format!("hop {hop_index}: retrieval error: {e}"));
            Vec::new()
        }
    };
    if retrieved.is_empty() {
        warnings.push(format!("hop {hop_index}: no evidence"));
        return Ok(HopResult {
            hop_index,
            query: step_query.to_string(),
            retrieved,
            pruned_graph: EvidenceGraph::default(),
            extracted_entity: None,
        });
    }

    let (pruned_graph, context) = match config.mode {
        Mode::Full | Mode::GraphNoRank => {
            let graph = build_graph(&retrieved, corpus);
            let ranked = graphrank(&graph, config.effective_alpha());
            let (pruned, prune_warnings) = prune(&graph, &ranked, &config.hop_prune);
            warnings.extend(
                prune_warnings
                    .into_iter()
                    .map(|w| format!("hop {hop_index}: {w}")),
            );
            let context = graph_to_context(&pruned);
            (pruned, context)
        }
        // decomposition-only: raw retrieval order, no graph curation
        _ => (flat_graph(&retrieved, corpus), render_docs(&retrieved, corpus)),
    };

    let extracted_entity = if extract {
        let slots: BTreeMap<String, String> = [
            ("context".to_string(), context),
            ("primary_query".to_string(), step_query.to_string()),
        ]
        .into();
        let request = render_prompt(PromptKind::EntityExtraction, &slots)?;
        let raw = complete(&request, backend, policy)?;
        let value = raw.trim().to_string();
        if value.is_empty() || value.eq_ignore_ascii_case(NOT_ENOUGH_CONTEXT) {
            None
        } else {
            Some(EntityBinding {
                index: hop_index,
                value,
            })
        }
    } else {
        None
    };

    Ok(HopResult {
        hop_index,
        query: step_query.to_string(),
        retrieved,
        pruned_graph,
        extracted_entity,
    })
}

/// Merge all hop retrievals with the final retrieval: dedup by id keeping
/// the maximum score, sort, truncate to `final_unique`, and partition by
/// kind. Also returns the provenance of every surviving document.
pub fn aggregate_evidence(
    hops: &[HopResult],
    final_retrieval: &[ScoredDocument],
    final_unique: usize,
    corpus: &Corpus,
) -> (HybridPool, BTreeMap<String, Vec<String>>) {
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    let mut sources: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut absorb = |docs: &[ScoredDocument], source: String| {
        for sd in docs {
            let e = best.entry(sd.doc_id.clone()).or_insert(f64::NEG_INFINITY);
            if sd.score > *e {
                *e = sd.score;
            }
            sources.entry(sd.doc_id.clone()).or_default().push(source.clone());
        }
    };
    for hop in hops {
        absorb(&hop.retrieved, format!("hop{}", hop.hop_index));
    }
    absorb(final_retrieval, "final".to_string());

    let mut merged: Vec<ScoredDocument> = best
        .into_iter()
        .map(|(doc_id, score)| ScoredDocument { doc_id, score })
        .collect();
    crate::retriever::sort_scored(&mut merged);
    merged.truncate(final_unique);

    let provenance: BTreeMap<String, Vec<String>> = merged
        .iter()
        .map(|sd| (sd.doc_id.clone(), sources[&sd.doc_id].clone()))
        .collect();
    let pool = HybridPool::partition(&merged, |id| {
        corpus
            .get(id)
            .unwrap_or_else(|| panic!("document {id} not in corpus"))
            .kind
    })
    .expect("merged pool is deduplicated by construction");
    (pool, provenance)
}

/// Scores across both pool partitions rescaled to [0, 1] so the priority
/// boost is guaranteed to dominate.
fn normalize_pool(pool: &mut HybridPool) {
    let scores: Vec<f64> = pool
        .passages
        .iter()
        .chain(pool.tables.iter())
        .map(|sd| sd.score)
        .collect();
    if scores.is_empty() {
        return;
    }
    let normalized = min_max_normalize(&scores, NormRole::Semantic);
    let mut it = normalized.into_iter();
    for sd in pool.passages.iter_mut().chain(pool.tables.iter_mut()) {
        sd.score = it.next().expect("same length");
    }
}

struct RecordState {
    id: String,
    question: String,
    plan: QueryPlan,
    hops: Vec<HopResult>,
    warnings: Vec<String>,
}

impl RecordState {
    fn into_partial(self) -> Box<AnswerRecord> {
        Box::new(AnswerRecord {
            id: self.id,
            question: self.question,
            plan: self.plan,
            hops: self.hops,
            final_pool_size: 0,
            final_graph: EvidenceGraph::default(),
            reasoning_path: String::new(),
            answer: String::new(),
            warnings: self.warnings,
            provenance: BTreeMap::new(),
        })
    }
}

fn synthesize(
    state: &mut RecordState,
    reasoning_path: &str,
    context: &str,
    backend: &dyn Backend,
    policy: RetryPolicy,
) -> Result<String, GatewayError> {
    let slots: BTreeMap<String, String> = [
        ("reasoning_path".to_string(), reasoning_path.to_string()),
        ("context".to_string(), context.to_string()),
        ("question".to_string(), state.question.clone()),
    ]
    .into();
    let request = render_prompt(PromptKind::AnswerSynthesis, &slots)?;
    let answer = complete(&request, backend, policy)?.trim().to_string();
    if answer.is_empty() {
        state
            .warnings
            .push("synthesis returned an empty answer".to_string());
        Ok(NOT_ENOUGH_CONTEXT.to_string())
    } else {
        Ok(answer)
    }
}

/// Answer one question under the configured mode.
pub fn answer_question(
    id: &str,
    question: &str,
    retriever: &dyn Retriever,
    corpus: &Corpus,
    backend: &dyn Backend,
    config: &PipelineConfig,
    policy: RetryPolicy,
) -> Result<AnswerRecord, PipelineError> {
    match config.mode {
        Mode::VanillaRag => answer_vanilla(id, question, retriever, corpus, backend, config, policy),
        _ => answer_planned(id, question, retriever, corpus, backend, config, policy),
    }
}

fn answer_vanilla(
    id: &str,
    question: &str,
    retriever: &dyn Retriever,
    corpus: &Corpus,
    backend: &dyn Backend,
    config: &PipelineConfig,
    policy: RetryPolicy,
) -> Result<AnswerRecord, PipelineError> {
    let retrieved = retriever.retrieve(question, config.final_k)?;
    let mut state = RecordState {
        id: id.to_string(),
        question: question.to_string(),
        plan: QueryPlan::fallback(question),
        hops: Vec::new(),
        warnings: Vec::new(),
    };
    let reasoning_path = format!("Step 1: {question}");
    let context = render_docs(&retrieved, corpus);
    let answer = match synthesize(&mut state, &reasoning_path, &context, backend, policy) {
        Ok(a) => a,
        Err(error) => {
            return Err(PipelineError::Gateway {
                error,
                partial: state.into_partial(),
            })
        }
    };
    let provenance = retrieved
        .iter()
        .map(|sd| (sd.doc_id.clone(), vec!["final".to_string()]))
        .collect();
    Ok(AnswerRecord {
        id: state.id,
        question: state.question,
        plan: state.plan,
        hops: state.hops,
        final_pool_size: retrieved.len(),
        final_graph: EvidenceGraph::default(),
        reasoning_path,
        answer,
        warnings: state.warnings,
        provenance,
    })
}

fn answer_planned(
    id: &str,
    question: &str,
    retriever: &dyn Retriever,
    corpus: &Corpus,
    backend: &dyn Backend,
    config: &PipelineConfig,
    policy: RetryPolicy,
) -> Result<AnswerRecord, PipelineError> {
    let (plan, plan_warnings) = generate_plan(question, backend, policy)?;
    let mut state = RecordState {
        id: id.to_string(),
        question: question.to_string(),
        plan,
        hops: Vec::new(),
        warnings: plan_warnings,
    };

    let mut bindings: Vec<EntityBinding> = Vec::new();
    let total_hops = state.plan.hops as usize;
    for hop_index in 1..=total_hops {
        let (query, alternatives): (String, &[String]) = if hop_index == 1 {
            (state.plan.initial_query.clone(), &state.plan.alternatives)
        } else {
            let template = &state.plan.step_templates[hop_index - 2];
            match instantiate_template(template, &bindings) {
                Ok(q) => (q, &[][..]),
                Err(e) => {
                    state
                        .warnings
                        .push(format!("hop {hop_index}: cannot instantiate template: {e}"));
                    break;
                }
            }
        };
        let extract = hop_index < total_hops;
        let hop = match execute_hop(
            hop_index,
            &query,
            alternatives,
            retriever,
            corpus,
            backend,
            config,
            policy,
            extract,
            &mut state.warnings,
        ) {
            Ok(h) => h,
            Err(error) => {
                return Err(PipelineError::Gateway {
                    error,
                    partial: state.into_partial(),
                })
            }
        };
        let entity = hop.extracted_entity.clone();
        state.hops.push(hop);
        if extract {
            match entity {
                Some(binding) => bindings.push(binding),
                None => {
                    state.warnings.push(format!(
                        "hop {hop_index}: no entity extracted, truncating remaining hops"
                    ));
                    break;
                }
            }
        }
    }

    let final_retrieval = retriever.retrieve(question, config.final_k)?;
    let (mut pool, provenance) =
        aggregate_evidence(&state.hops, &final_retrieval, config.final_unique, corpus);
    let final_pool_size = pool.len();
    normalize_pool(&mut pool);
    let selected = select(&pool, config.beta, state.plan.hops > 1, |doc_id| {
        corpus
            .get(doc_id)
            .unwrap_or_else(|| panic!("document {doc_id} not in corpus"))
            .clone()
    });

    let (final_graph, context) = match config.mode {
        Mode::DecompRag => (
            flat_graph(&selected, corpus),
            render_docs(&selected, corpus),
        ),
        _ => {
            let graph = build_graph(&selected, corpus);
            let ranked = graphrank(&graph, config.effective_alpha());
            let (pruned, prune_warnings) = prune(&graph, &ranked, &config.final_prune);
            state
                .warnings
                .extend(prune_warnings.into_iter().map(|w| format!("final graph: {w}")));
            let context = graph_to_context(&pruned);
            (pruned, context)
        }
    };

    let reasoning_path = state
        .hops
        .iter()
        .map(|h| format!("Step {}: {}", h.hop_index, h.query))
        .collect::<Vec<_>>()
        .join("\n");
    let answer = match synthesize(&mut state, &reasoning_path, &context, backend, policy) {
        Ok(a) => a,
        Err(error) => {
            return Err(PipelineError::Gateway {
                error,
                partial: state.into_partial(),
            })
        }
    };

    Ok(AnswerRecord {
        id: state.id,
        question: state.question,
        plan: state.plan,
        hops: state.hops,
        final_pool_size,
        final_graph,
        reasoning_path,
        answer,
        warnings: state.warnings,
        provenance,
    })
}
