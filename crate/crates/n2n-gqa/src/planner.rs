//! Structured multi-hop query plans: generation via the gateway,
//! schema validation, and template instantiation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{complete, render_prompt, Backend, GatewayError, PromptKind, RetryPolicy};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unbound placeholder {{{0}}}")]
    UnboundPlaceholder(String),
}

const MAX_ALTERNATIVES: usize = 4;

/// Hop count, initial query plus alternatives, and conditional templates
/// with `{entityN}` placeholders for the later hops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub hops: u8,
    pub initial_query: String,
    pub expected_entity_type: String,
    #[serde(default)]
    pub alternatives: Vec<String>,
    #[serde(default)]
    pub step_templates: Vec<String>,
}

impl QueryPlan {
    /// The degenerate single-hop plan used when generation fails.
    pub fn fallback(question: &str) -> Self {
        QueryPlan {
            hops: 1,
            initial_query: question.to_string(),
            expected_entity_type: "a direct answer".to_string(),
            alternatives: Vec::new(),
            step_templates: Vec::new(),
        }
    }
}

/// An extracted intermediate entity bound to its hop position (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityBinding {
    pub index: usize,
    pub value: String,
}

fn placeholder_indices(template: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{entity") {
        let tail = &rest[start + "{entity".len()..];
        if let Some(end) = tail.find('}') {
            if let Ok(n) = tail[..end].parse::<usize>() {
                out.push(n);
            }
            rest = &tail[end + 1..];
        } else {
            break;
        }
    }
    out
}

/// All violations of the plan invariants; empty means the plan is valid.
pub fn validate_plan(plan: &QueryPlan) -> Vec<String> {
    let mut violations = Vec::new();
    if !(1..=3).contains(&plan.hops) {
        violations.push(format!("hops: expected 1, 2, or 3, got {}", plan.hops));
    }
    if plan.initial_query.trim().is_empty() {
        violations.push("initial_query: must be non-empty".to_string());
    }
    let expected_templates = plan.hops.saturating_sub(1) as usize;
    if plan.step_templates.len() != expected_templates {
        violations.push(format!(
            "step_templates: expected {} template(s) for a {}-hop plan, got {}",
            expected_templates,
            plan.hops,
            plan.step_templates.len()
        ));
    }
    for (i, template) in plan.step_templates.iter().enumerate() {
        let indices = placeholder_indices(template);
        if indices.is_empty() {
            violations.push(format!(
                "step_templates[{i}]: must contain at least one {{entityN}} placeholder"
            ));
        }
        // template i (0-based) may reference entity1..entity(i+1)
        for n in indices {
            if n == 0 || n > i + 1 {
                violations.push(format!(
                    "step_templates[{i}]: forward or invalid reference {{entity{n}}}"
                ));
            }
        }
    }
    violations
}

/// Substitute every `{entityN}` placeholder with its bound value.
pub fn instantiate_template(
    template: &str,
    bindings: &[EntityBinding],
) -> Result<String, PlanError> {
    let mut out = template.to_string();
    for b in bindings {
        out = out.replace(&format!("{{entity{}}}", b.index), &b.value);
    }
    if let Some(n) = placeholder_indices(&out).first() {
        return Err(PlanError::UnboundPlaceholder(format!("entity{n}")));
    }
    Ok(out)
}

fn parse_plan(text: &str) -> Result<QueryPlan, String> {
    let mut plan: QueryPlan = serde_json::from_str(text).map_err(|e| e.to_string())?;
    plan.alternatives.truncate(MAX_ALTERNATIVES);
    let violations = validate_plan(&plan);
    if violations.is_empty() {
        Ok(plan)
    } else {
        Err(violations.join("; "))
    }
}

/// Ask the model for a structured plan. One retry with the validation
/// errors appended; a second failure falls back to a degenerate 1-hop
/// plan so a question is never aborted at the planning stage.
pub fn generate_plan(
    question: &str,
    backend: &dyn Backend,
    policy: RetryPolicy,
) -> Result<(QueryPlan, Vec<String>), PlanError> {
    let mut warnings = Vec::new();
    let slots: BTreeMap<String, String> =
        [("question".to_string(), question.to_string())].into();
    let request = render_prompt(PromptKind::PlanGeneration, &slots)?;

    let first = match complete(&request, backend, policy) {
        Ok(text) => parse_plan(&text),
        Err(GatewayError::Schema { raw }) => Err(format!("response is not JSON: {raw}")),
        Err(e) => return Err(e.into()),
    };
    let errors = match first {
        Ok(plan) => return Ok((plan, warnings)),
        Err(errors) => errors,
    };

    let mut retry = request.clone();
    retry.user = format!(
        "{}\n\nYour previous plan was invalid: {errors}. Emit a corrected plan.",
        retry.user
    );
    let second = match complete(&retry, backend, policy) {
        Ok(text) => parse_plan(&text),
        Err(GatewayError::Schema { raw }) => Err(format!("response is not JSON: {raw}")),
        Err(e) => return Err(e.into()),
    };
    match second {
        Ok(plan) => Ok((plan, warnings)),
        Err(errors) => {
            warnings.push(format!(
                "plan generation failed after retry ({errors}); falling back to a 1-hop plan"
            ));
            Ok((QueryPlan::fallback(question), warnings))
        }
    }
}
