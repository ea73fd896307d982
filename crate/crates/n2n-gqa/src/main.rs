//! Command-line front end: index a corpus, plan a question, answer one
//! question with an inspectable trace, batch-evaluate every pipeline mode,
//! export an evidence graph, or emit the synthetic benchmark.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use n2n_gqa::corpus::{load_corpus, Corpus};
use n2n_gqa::eval::{evaluate, render_report_table};
use n2n_gqa::gateway::{Backend, HttpBackend, HttpBackendConfig, RetryPolicy, ScriptedMock};
use n2n_gqa::graph::{build_graph, graphrank, prune, to_dot, PruneConstraints};
use n2n_gqa::pipeline::{answer_question, AnswerRecord, Mode, PipelineConfig, PipelineError};
use n2n_gqa::planner::generate_plan;
use n2n_gqa::retriever::{build_index, LexicalRetriever, RemoteRetriever, Retriever};
use n2n_gqa::synthetic;

#[derive(Parser)]
#[command(name = "n2n", version, about = "Multi-hop QA over hybrid table-text corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the lexical index for a corpus and write it to disk.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate and print the multi-hop query plan for a question.
    Plan {
        #[arg(long)]
        question: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Answer a single question.
    Ask {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long, default_value = "q1")]
        id: String,
        /// Pipeline mode (vanilla|decomp|norank|full); default full.
        #[arg(long)]
        mode: Option<Mode>,
        /// Print the full answer record as JSON instead of just the answer.
        #[arg(long)]
        trace: bool,
        /// Write the final evidence graph in DOT format to this path.
        #[arg(long)]
        dot: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a question set through one or more modes and score the answers.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON-lines file of {"id", "question"} records.
        #[arg(long)]
        questions: PathBuf,
        /// JSON-lines file of {"id", "answer"} records.
        #[arg(long)]
        golds: PathBuf,
        /// Repeatable; defaults to all four modes.
        #[arg(long = "mode")]
        modes: Vec<Mode>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Retrieve for a query, build the evidence graph, and print it as DOT.
    InspectGraph {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Emit the synthetic offline benchmark (corpus, questions, golds, mock rules).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        questions: usize,
        #[arg(long, default_value_t = 150)]
        distractors: usize,
    },
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    final_k: Option<usize>,
    #[arg(long)]
    final_unique: Option<usize>,
    #[arg(long)]
    hop_k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Scripted mock rules file: selects the offline backend.
    #[arg(long)]
    mock_rules: Option<PathBuf>,
    /// Chat-completion endpoint: selects the HTTP backend.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key for the HTTP backend.
    #[arg(long)]
    api_key_env: Option<String>,
    /// JSON-over-HTTP retriever endpoint; default is the built-in lexical index.
    #[arg(long)]
    remote_retriever: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct FileConfig {
    alpha: Option<f64>,
    final_k: Option<usize>,
    final_unique: Option<usize>,
    hop_k: Option<usize>,
    beta: Option<f64>,
    final_prune: Option<PruneConstraints>,
    hop_prune: Option<PruneConstraints>,
    mode: Option<Mode>,
    remote_retriever: Option<String>,
    backend: Option<BackendFileConfig>,
}

#[derive(Debug, Default, Deserialize)]
struct BackendFileConfig {
    mock_rules: Option<PathBuf>,
    endpoint: Option<String>,
    model: Option<String>,
    api_key_env: Option<String>,
    #[serde(alias = "timeout")]
    timeout_secs: Option<u64>,
    max_inflight: Option<usize>,
}

struct Resolved {
    pipeline: PipelineConfig,
    backend: Box<dyn Backend>,
    max_inflight: usize,
    remote_retriever: Option<String>,
}

/// Precedence: command-line flags, then the config file, then defaults.
fn resolve(common: &CommonArgs) -> Result<Resolved> {
    let file: FileConfig = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            toml::from_str(&text)
                .with_context(|| format!("cannot parse config file {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let mut pipeline = PipelineConfig::default();
    if let Some(p) = file.final_prune {
        pipeline.final_prune = p;
    }
    if let Some(p) = file.hop_prune {
        pipeline.hop_prune = p;
    }
    pipeline.alpha = common.alpha.or(file.alpha).unwrap_or(pipeline.alpha);
    pipeline.final_k = common.final_k.or(file.final_k).unwrap_or(pipeline.final_k);
    pipeline.final_unique = common
        .final_unique
        .or(file.final_unique)
        .unwrap_or(pipeline.final_unique);
    pipeline.hop_k = common.hop_k.or(file.hop_k).unwrap_or(pipeline.hop_k);
    pipeline.beta = common.beta.or(file.beta).unwrap_or(pipeline.beta);
    if let Some(mode) = file.mode {
        pipeline.mode = mode;
    }
    pipeline
        .final_prune
        .validate()
        .map_err(anyhow::Error::msg)
        .context("invalid final_prune constraints")?;
    pipeline
        .hop_prune
        .validate()
        .map_err(anyhow::Error::msg)
        .context("invalid hop_prune constraints")?;

    let file_backend = file.backend.unwrap_or_default();
    let max_inflight = file_backend.max_inflight.unwrap_or(4);
    let mock_path = common.mock_rules.clone().or(file_backend.mock_rules);
    let backend: Box<dyn Backend> = if let Some(path) = mock_path {
        Box::new(
            ScriptedMock::from_json_file(&path)
                .with_context(|| format!("cannot load mock rules from {}", path.display()))?,
        )
    } else {
        let endpoint = common.endpoint.clone().or(file_backend.endpoint);
        let model = common.model.clone().or(file_backend.model);
        match (endpoint, model) {
            (Some(endpoint), Some(model)) => Box::new(HttpBackend::new(HttpBackendConfig {
                endpoint,
                model,
                api_key_env: common.api_key_env.clone().or(file_backend.api_key_env),
                timeout_secs: file_backend.timeout_secs.unwrap_or(60),
                max_inflight,
            })),
            _ => bail!(
                "no backend configured: pass --mock-rules for the offline backend \
                 or --endpoint and --model for a live one"
            ),
        }
    };

    Ok(Resolved {
        pipeline,
        backend,
        max_inflight,
        remote_retriever: common.remote_retriever.clone().or(file.remote_retriever),
    })
}

fn make_retriever<'a>(resolved: &Resolved, corpus: &'a Corpus) -> Result<Box<dyn Retriever + 'a>> {
    Ok(match &resolved.remote_retriever {
        Some(endpoint) => Box::new(RemoteRetriever::new(
            endpoint.clone(),
            corpus,
            std::time::Duration::from_secs(60),
        )),
        None => Box::new(LexicalRetriever::new(corpus)?),
    })
}

#[derive(Deserialize)]
struct QuestionRecord {
    id: String,
    question: String,
}

#[derive(Deserialize)]
struct GoldRecord {
    id: String,
    answer: String,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{}: bad record at line {}", path.display(), i + 1))
        })
        .collect()
}

/// A hard failure mid-question degrades to a partial or stub record (empty
/// answer, warning attached) so one bad question cannot abort a whole
/// evaluation run.
fn answer_or_record_failure(
    id: &str,
    question: &str,
    retriever: &dyn Retriever,
    corpus: &Corpus,
    backend: &dyn Backend,
    config: &PipelineConfig,
) -> AnswerRecord {
    match answer_question(
        id,
        question,
        retriever,
        corpus,
        backend,
        config,
        RetryPolicy::default(),
    ) {
        Ok(record) => record,
        Err(PipelineError::Gateway { error, partial }) => {
            log::warn!("{id}: gateway failure, keeping partial record: {error}");
            *partial
        }
        Err(e) => {
            log::warn!("{id}: failed: {e}");
            AnswerRecord {
                id: id.to_string(),
                question: question.to_string(),
                plan: n2n_gqa::planner::QueryPlan::fallback(question),
                hops: Vec::new(),
                final_pool_size: 0,
                final_graph: Default::default(),
                reasoning_path: String::new(),
                answer: String::new(),
                warnings: vec![format!("question failed: {e}")],
                provenance: BTreeMap::new(),
            }
        }
    }
}

/// A fresh timestamped directory under `out`; existing runs are never
/// overwritten.
fn create_run_dir(out: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .expect("clock after epoch")
        .as_secs();
    for n in 0u32.. {
        let name = if n == 0 {
            format!("run-{secs}")
        } else {
            format!("run-{secs}-{n}")
        };
        let candidate = out.join(name);
        match std::fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("run directory counter exhausted")
}

fn cmd_eval(
    corpus_path: &Path,
    questions_path: &Path,
    golds_path: &Path,
    modes: &[Mode],
    out_parent: &Path,
    common: &CommonArgs,
) -> Result<()> {
    let resolved = resolve(common)?;
    let corpus = load_corpus(corpus_path)?;
    let retriever = make_retriever(&resolved, &corpus)?;
    let questions: Vec<QuestionRecord> = read_jsonl(questions_path)?;
    let golds: BTreeMap<String, String> = read_jsonl::<GoldRecord>(golds_path)?
        .into_iter()
        .map(|g| (g.id, g.answer))
        .collect();
    let out = &create_run_dir(out_parent)?;

    // the manifest goes in first so a run directory always identifies its
    // inputs, even if the run is interrupted
    let deterministic = common.mock_rules.is_some() && resolved.remote_retriever.is_none();
    let manifest = serde_json::json!({
        "pipeline": resolved.pipeline,
        "modes": modes.iter().map(|m| m.label()).collect::<Vec<_>>(),
        "corpus_path": corpus_path,
        "questions_path": questions_path,
        "golds_path": golds_path,
        "backend": if common.mock_rules.is_some() { "scripted-mock" } else { "http" },
        "retriever": resolved.remote_retriever.as_deref().unwrap_or("lexical"),
        "deterministic": deterministic,
        "questions": questions.len(),
        "corpus_documents": corpus.len(),
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;

    let thread_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolved.max_inflight)
        .build()
        .context("cannot build worker pool")?;

    for &mode in modes {
        let config = PipelineConfig {
            mode,
            ..resolved.pipeline.clone()
        };
        let retriever_ref: &dyn Retriever = retriever.as_ref();
        let backend_ref: &dyn Backend = resolved.backend.as_ref();
        // in-flight requests are bounded by the pool size; results are
        // collected in input order, so output files are deterministic
        let records: Vec<AnswerRecord> = thread_pool.install(|| {
            questions
                .par_iter()
                .map(|q| {
                    answer_or_record_failure(
                        &q.id,
                        &q.question,
                        retriever_ref,
                        &corpus,
                        backend_ref,
                        &config,
                    )
                })
                .collect()
        });

        let label = mode.label();
        let mut results = std::fs::File::create(out.join(format!("results-{label}.jsonl")))?;
        for r in &records {
            writeln!(results, "{}", serde_json::to_string(r)?)?;
        }
        let predictions: Vec<(String, String)> = records
            .iter()
            .map(|r| (r.id.clone(), r.answer.clone()))
            .collect();
        let report = evaluate(&predictions, &golds)?;
        std::fs::write(
            out.join(format!("report-{label}.json")),
            serde_json::to_string_pretty(&report)?,
        )?;
        let table = render_report_table(label, &report);
        std::fs::write(out.join(format!("report-{label}.txt")), &table)?;
        print!("{table}");
    }

    println!("results written to {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Index { corpus, out } => {
            let corpus = load_corpus(&corpus)?;
            let index = build_index(&corpus)?;
            std::fs::write(&out, serde_json::to_string(&index)?)?;
            println!(
                "indexed {} documents, {} terms -> {}",
                index.doc_count(),
                index.vocabulary_size(),
                out.display()
            );
        }
        Command::Plan { question, common } => {
            let resolved = resolve(&common)?;
            let (plan, warnings) =
                generate_plan(&question, resolved.backend.as_ref(), RetryPolicy::default())?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&plan)?);
        }
        Command::Ask {
            corpus,
            question,
            id,
            mode,
            trace,
            dot,
            common,
        } => {
            let mut resolved = resolve(&common)?;
            if let Some(mode) = mode {
                resolved.pipeline.mode = mode;
            }
            let corpus = load_corpus(&corpus)?;
            let retriever = make_retriever(&resolved, &corpus)?;
            // unlike batch evaluation, a single question surfaces hard
            // failures as a nonzero exit
            let record = answer_question(
                &id,
                &question,
                retriever.as_ref(),
                &corpus,
                resolved.backend.as_ref(),
                &resolved.pipeline,
                RetryPolicy::default(),
            )
            .map_err(|e| match e {
                PipelineError::Gateway { error, .. } => anyhow::Error::new(error),
                other => anyhow::Error::new(other),
            })?;
            if let Some(path) = dot {
                std::fs::write(&path, to_dot(&record.final_graph))?;
            }
            for w in &record.warnings {
                eprintln!("warning: {w}");
            }
            if trace {
                println!("{}", serde_json::to_string_pretty(&record)?);
            } else {
                println!("{}", record.answer);
            }
        }
        Command::Eval {
            corpus,
            questions,
            golds,
            modes,
            out,
            common,
        } => {
            let modes = if modes.is_empty() {
                vec![Mode::VanillaRag, Mode::DecompRag, Mode::GraphNoRank, Mode::Full]
            } else {
                modes
            };
            cmd_eval(&corpus, &questions, &golds, &modes, &out, &common)?;
        }
        Command::InspectGraph {
            corpus,
            query,
            k,
            common,
        } => {
            // graph inspection needs no language model, so skip backend setup
            let alpha = common.alpha.unwrap_or_else(|| PipelineConfig::default().alpha);
            let corpus = load_corpus(&corpus)?;
            let retriever = LexicalRetriever::new(&corpus)?;
            let retrieved = retriever.retrieve(&query, k)?;
            if retrieved.is_empty() {
                bail!("no documents retrieved for query {query:?}");
            }
            let graph = build_graph(&retrieved, &corpus);
            let ranked = graphrank(&graph, alpha);
            // rank-annotated copy of the whole graph
            let keep_all = PruneConstraints {
                min_nodes: 1,
                max_nodes: graph.nodes.len(),
                min_passages: 0,
                min_tables: 0,
            };
            let (annotated, _) = prune(&graph, &ranked, &keep_all);
            print!("{}", to_dot(&annotated));
        }
        Command::Synth {
            out,
            questions,
            distractors,
        } => {
            let suite = synthetic::generate(questions, distractors);
            std::fs::create_dir_all(&out)?;
            suite.write_corpus(&out.join("corpus.jsonl"))?;
            suite.write_questions(&out.join("questions.jsonl"))?;
            suite.write_golds(&out.join("golds.jsonl"))?;
            suite.write_mock_rules(&out.join("mock_rules.json"))?;
            println!(
                "wrote {} documents and {} questions to {}",
                suite.documents.len(),
                suite.questions.len(),
                out.display()
            );
        }
    }
    Ok(())
}
