//! Query-specific evidence graphs: construction, centrality, GraphRank
//! scoring, and pruning down to a curated subgraph.
//!
//! Nodes are retrieved documents carrying their retriever score; edges are
//! weighted by TF-IDF overlap of shared terms. Ranking multiplies the
//! normalized semantic score by a centrality boost so that semantically
//! irrelevant nodes can never be promoted by structure alone.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::{tfidf_vector, Corpus, DocKind, Document};
use crate::retriever::ScoredDocument;

#[derive(Debug, Clone)]
pub struct GraphNode {
    pub doc: Document,
    pub semantic_score: f64,
    /// Set once the node has been ranked (e.g. in a pruned graph).
    pub graphrank: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Weighted undirected simple graph over retrieved documents.
#[derive(Debug, Clone, Default)]
pub struct EvidenceGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

/// Compact serializable form: node ids plus edge triples.
#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub node_ids: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
}

// serialized as its compact summary: node ids plus edge triples
impl Serialize for EvidenceGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.summary().serialize(serializer)
    }
}

impl EvidenceGraph {
    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            node_ids: self.nodes.iter().map(|n| n.doc.id.clone()).collect(),
            edges: self.edges.iter().map(|e| (e.u, e.v, e.weight)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedNode {
    pub node: usize,
    pub sem_norm: f64,
    pub struct_norm: f64,
    pub graphrank: f64,
}

/// Node-count bounds and per-kind quotas for pruning.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, Serialize)]
pub struct PruneConstraints {
    #[serde(alias = "min")]
    pub min_nodes: usize,
    #[serde(alias = "max")]
    pub max_nodes: usize,
    #[serde(default)]
    pub min_passages: usize,
    #[serde(default)]
    pub min_tables: usize,
}

impl PruneConstraints {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_nodes == 0 || self.min_nodes > self.max_nodes {
            return Err(format!(
                "invalid node bounds: 0 < min_nodes ({}) <= max_nodes ({}) required",
                self.min_nodes, self.max_nodes
            ));
        }
        if self.min_passages + self.min_tables > self.max_nodes {
            return Err(format!(
                "quotas exceed max_nodes: {} + {} > {}",
                self.min_passages, self.min_tables, self.max_nodes
            ));
        }
        Ok(())
    }
}

/// One node per scored document; an edge for every pair with positive
/// shared-term weight `sum_t min(w_u(t), w_v(t))`.
pub fn build_graph(docs: &[ScoredDocument], corpus: &Corpus) -> EvidenceGraph {
    let nodes: Vec<GraphNode> = docs
        .iter()
        .map(|sd| GraphNode {
            doc: corpus
                .get(&sd.doc_id)
                .unwrap_or_else(|| panic!("document {} not in corpus", sd.doc_id))
                .clone(),
            semantic_score: sd.score,
            graphrank: 0.0,
        })
        .collect();
    let vectors: Vec<_> = nodes
        .iter()
        .map(|n| tfidf_vector(&n.doc, corpus))
        .collect();
    let mut edges = Vec::new();
    for u in 0..nodes.len() {
        for v in (u + 1)..nodes.len() {
            let (small, large) = if vectors[u].weights.len() <= vectors[v].weights.len() {
                (&vectors[u], &vectors[v])
            } else {
                (&vectors[v], &vectors[u])
            };
            let weight: f64 = small
                .weights
                .iter()
                .filter_map(|(t, wu)| large.weights.get(t).map(|wv| wu.min(*wv)))
                .sum();
            if weight > 0.0 {
                edges.push(GraphEdge { u, v, weight });
            }
        }
    }
    EvidenceGraph { nodes, edges }
}

/// Sum of incident edge weights per node; isolated nodes score 0.
pub fn weighted_degree_centrality(graph: &EvidenceGraph) -> Vec<f64> {
    let mut centrality = vec![0.0; graph.nodes.len()];
    for e in &graph.edges {
        centrality[e.u] += e.weight;
        centrality[e.v] += e.weight;
    }
    centrality
}

/// Which score a min-max normalization feeds; decides the degenerate
/// (max == min) output. Semantic scores collapse to 1.0 so the
/// multiplicative gate stays open; structural scores collapse to 0.0
/// because a flat centrality profile carries no information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormRole {
    Semantic,
    Structural,
}

pub fn min_max_normalize(scores: &[f64], role: NormRole) -> Vec<f64> {
    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        let fill = match role {
            NormRole::Semantic => 1.0,
            NormRole::Structural => 0.0,
        };
        return vec![fill; scores.len()];
    }
    scores.iter().map(|s| (s - min) / (max - min)).collect()
}

/// The combining rule: `sem_norm * (1 + (1 - alpha) * struct_norm)`.
pub fn combine_scores(sem_norm: f64, struct_norm: f64, alpha: f64) -> f64 {
    sem_norm * (1.0 + (1.0 - alpha) * struct_norm)
}

/// Rank all nodes: normalize semantic and centrality scores, combine them,
/// and sort by combined score desc, semantic score desc, doc id asc.
pub fn graphrank(graph: &EvidenceGraph, alpha: f64) -> Vec<RankedNode> {
    let sems: Vec<f64> = graph.nodes.iter().map(|n| n.semantic_score).collect();
    let sem_norm = min_max_normalize(&sems, NormRole::Semantic);
    let struct_norm = min_max_normalize(&weighted_degree_centrality(graph), NormRole::Structural);
    let mut ranked: Vec<RankedNode> = (0..graph.nodes.len())
        .map(|i| RankedNode {
            node: i,
            sem_norm: sem_norm[i],
            struct_norm: struct_norm[i],
            graphrank: combine_scores(sem_norm[i], struct_norm[i], alpha),
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.graphrank
            .partial_cmp(&a.graphrank)
            .unwrap()
            .then_with(|| {
                graph.nodes[b.node]
                    .semantic_score
                    .partial_cmp(&graph.nodes[a.node].semantic_score)
                    .unwrap()
            })
            .then_with(|| graph.nodes[a.node].doc.id.cmp(&graph.nodes[b.node].doc.id))
    });
    ranked
}

/// Keep the top `max_nodes` by rank, then repair kind quotas by swapping
/// the lowest-ranked surplus-kind nodes for the highest-ranked missing-kind
/// nodes. Graphs below `min_nodes` are kept whole. Returns the induced
/// subgraph in rank order plus any quota warnings.
pub fn prune(
    graph: &EvidenceGraph,
    ranked: &[RankedNode],
    constraints: &PruneConstraints,
) -> (EvidenceGraph, Vec<String>) {
    debug_assert!(constraints.validate().is_ok());
    let mut warnings = Vec::new();
    let n = graph.nodes.len();

    let kept: Vec<RankedNode> = if n < constraints.min_nodes {
        warnings.push(format!(
            "graph has {} nodes, below the minimum of {}; keeping all",
            n, constraints.min_nodes
        ));
        ranked.to_vec()
    } else {
        let mut kept: Vec<RankedNode> = ranked.iter().take(constraints.max_nodes).cloned().collect();
        let dropped: Vec<RankedNode> = ranked.iter().skip(constraints.max_nodes).cloned().collect();

        for (kind, quota) in [
            (DocKind::Passage, constraints.min_passages),
            (DocKind::TableRow, constraints.min_tables),
        ] {
            let count =
                |set: &[RankedNode]| set.iter().filter(|r| graph.nodes[r.node].doc.kind == kind).count();
            let mut have = count(&kept);
            // candidates of the missing kind, best rank first
            let mut candidates = dropped
                .iter()
                .filter(|r| graph.nodes[r.node].doc.kind == kind)
                .cloned()
                .collect::<Vec<_>>()
                .into_iter();
            while have < quota {
                let Some(incoming) = candidates.next() else {
                    warnings.push(format!(
                        "quota unmet: only {have} {kind:?} nodes available (wanted {quota})"
                    ));
                    break;
                };
                // evict the lowest-ranked node of the other kind, if one is
                // spare above its own quota
                let other_quota = match kind {
                    DocKind::Passage => constraints.min_tables,
                    DocKind::TableRow => constraints.min_passages,
                };
                let surplus = kept
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| graph.nodes[r.node].doc.kind != kind)
                    .min_by(|(_, a), (_, b)| {
                        a.graphrank
                            .partial_cmp(&b.graphrank)
                            .unwrap()
                            .then_with(|| {
                                graph.nodes[a.node]
                                    .semantic_score
                                    .partial_cmp(&graph.nodes[b.node].semantic_score)
                                    .unwrap()
                            })
                            .then_with(|| {
                                graph.nodes[b.node].doc.id.cmp(&graph.nodes[a.node].doc.id)
                            })
                    })
                    .map(|(pos, _)| pos);
                let other_count = kept.len() - have;
                match surplus {
                    Some(pos) if other_count > other_quota => {
                        kept.remove(pos);
                        kept.push(incoming);
                        have += 1;
                    }
                    _ => {
                        warnings.push(format!(
                            "quota unmet: no surplus node to swap for a {kind:?}"
                        ));
                        break;
                    }
                }
            }
        }
        kept.sort_by(|a, b| {
            b.graphrank
                .partial_cmp(&a.graphrank)
                .unwrap()
                .then_with(|| {
                    graph.nodes[b.node]
                        .semantic_score
                        .partial_cmp(&graph.nodes[a.node].semantic_score)
                        .unwrap()
                })
                .then_with(|| graph.nodes[a.node].doc.id.cmp(&graph.nodes[b.node].doc.id))
        });
        kept
    };

    // induced subgraph with nodes in rank order
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    let mut nodes = Vec::with_capacity(kept.len());
    for (new_idx, r) in kept.iter().enumerate() {
        remap.insert(r.node, new_idx);
        let old = &graph.nodes[r.node];
        nodes.push(GraphNode {
            doc: old.doc.clone(),
            semantic_score: old.semantic_score,
            graphrank: r.graphrank,
        });
    }
    let edges = graph
        .edges
        .iter()
        .filter_map(|e| match (remap.get(&e.u), remap.get(&e.v)) {
            (Some(&u), Some(&v)) => Some(GraphEdge {
                u: u.min(v),
                v: u.max(v),
                weight: e.weight,
            }),
            _ => None,
        })
        .collect();
    (EvidenceGraph { nodes, edges }, warnings)
}

/// Render a document the way it appears in an LLM context window.
pub fn render_document(doc: &Document) -> String {
    match doc.kind {
        DocKind::Passage => format!("[PASSAGE: {}]\n{}", doc.title, doc.text),
        DocKind::TableRow => format!("[TABLE ROW]\n{}", doc.text),
    }
}

/// Concatenate nodes in their stored (rank) order, blank-line separated.
pub fn graph_to_context(graph: &EvidenceGraph) -> String {
    graph
        .nodes
        .iter()
        .map(|n| render_document(&n.doc))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// DOT export for graph inspection; node labels carry id, kind, and the
/// rank score to 4 decimals, edge labels the weight to 4 decimals.
pub fn to_dot(graph: &EvidenceGraph) -> String {
    let mut out = String::from("graph evidence {\n");
    for (i, n) in graph.nodes.iter().enumerate() {
        let kind = match n.doc.kind {
            DocKind::Passage => "passage",
            DocKind::TableRow => "table_row",
        };
        out.push_str(&format!(
            "  n{i} [label=\"{}\\n{} {:.4}\"];\n",
            n.doc.id.replace('"', "'"),
            kind,
            n.graphrank
        ));
    }
    for e in &graph.edges {
        out.push_str(&format!(
            "  n{} -- n{} [label=\"{:.4}\"];\n",
            e.u, e.v, e.weight
        ));
    }
    out.push_str("}\n");
    out
}
