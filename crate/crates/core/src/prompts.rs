//! Prompt assembly for the decomposed, ensemble-baseline and graph-ensemble
//! families, plus demo dropping under a token budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, QueryPair};
use crate::extract::{render_triplet, RenderStyle, Stage, Triplet, NO_PAIR_SENTINEL};
use crate::gog::AssociationSubgraph;
use crate::llm::estimate_tokens;
use crate::relmeta::{RelationRegistry, RelationType};

pub const DEFAULT_BUDGET_TOKENS: usize = 4096;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt for {doc_id} needs {needed} tokens without demos, budget is {budget}")]
    BudgetExceeded { doc_id: String, needed: usize, budget: usize },
    #[error("relation NA cannot be prompted for")]
    NaRelation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoTriplet {
    pub head: String,
    pub rid: String,
    pub tail: String,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub doc_id: String,
    /// Marked context of the demo document.
    pub context: String,
    pub triplets: Vec<DemoTriplet>,
    /// Renders as "Cannot find a pair." and carries no triplets.
    pub negative: bool,
}

impl Demo {
    pub fn positive(doc: &Document, triplets: Vec<DemoTriplet>) -> Self {
        Self {
            doc_id: doc.doc_id.clone(),
            context: doc.marked_context(),
            triplets,
            negative: false,
        }
    }

    pub fn negative(doc: &Document) -> Self {
        Self {
            doc_id: doc.doc_id.clone(),
            context: doc.marked_context(),
            triplets: Vec::new(),
            negative: true,
        }
    }

    fn render_lines(&self, registry: &RelationRegistry, style: RenderStyle) -> String {
        if self.negative || self.triplets.is_empty() {
            return NO_PAIR_SENTINEL.to_string();
        }
        self.triplets
            .iter()
            .map(|d| {
                let t = Triplet {
                    head_surface: d.head.clone(),
                    tail_surface: d.tail.clone(),
                    head_idx: None,
                    tail_idx: None,
                    rid: d.rid.clone(),
                    explanation: d.explanation.clone(),
                    stage: Stage::GraphEnsemble,
                    raw_line: String::new(),
                };
                render_triplet(&t, registry, style)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Decomposed,
    EnsembleBaseline,
    GraphEnsemble,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub target_doc_id: String,
    /// Decomposed prompts only.
    pub rid: Option<String>,
    /// Graph-ensemble prompts only.
    pub missing: Option<QueryPair>,
    pub shot_count: usize,
    pub demo_doc_ids: Vec<String>,
    /// Demos removed to fit the budget.
    pub dropped_demos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub kind: PromptKind,
    pub meta: PromptMeta,
}

/// A prompt before demo selection under the budget. The demo preamble is
/// emitted only when at least one demo survives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptParts {
    pub kind: PromptKind,
    pub target_doc_id: String,
    pub rid: Option<String>,
    pub missing: Option<QueryPair>,
    pub instruction: String,
    pub demo_preamble: String,
    /// `(doc_id, rendered block)` in selection order.
    pub demos: Vec<(String, String)>,
    pub target: String,
}

impl PromptParts {
    fn assemble(&self, demo_count: usize) -> String {
        let mut text = self.instruction.clone();
        if demo_count > 0 {
            text.push_str(&self.demo_preamble);
        }
        for (_, block) in &self.demos[..demo_count] {
            text.push_str(block);
        }
        text.push_str(&self.target);
        text
    }
}

/// Keeps the longest prefix of demos whose assembled text fits `budget_tokens`.
pub fn fit_budget(parts: PromptParts, budget_tokens: usize) -> Result<Prompt, PromptError> {
    let bare = estimate_tokens(&parts.assemble(0));
    if bare > budget_tokens {
        return Err(PromptError::BudgetExceeded {
            doc_id: parts.target_doc_id,
            needed: bare,
            budget: budget_tokens,
        });
    }
    let mut keep = parts.demos.len();
    let mut text = parts.assemble(keep);
    while keep > 0 && estimate_tokens(&text) > budget_tokens {
        keep -= 1;
        text = parts.assemble(keep);
    }
    Ok(Prompt {
        text,
        kind: parts.kind,
        meta: PromptMeta {
            target_doc_id: parts.target_doc_id,
            rid: parts.rid,
            missing: parts.missing,
            shot_count: keep,
            demo_doc_ids: parts.demos[..keep].iter().map(|(id, _)| id.clone()).collect(),
            dropped_demos: parts.demos.len() - keep,
        },
    })
}

/// `[‘a’, ‘b’]` over the non-NA relations in registry order.
pub fn relation_list(registry: &RelationRegistry) -> String {
    let names: Vec<String> = registry.non_na().map(|r| format!("‘{}’", r.name)).collect();
    format!("[{}]", names.join(", "))
}

pub fn decomposed_parts(
    rel: &RelationType,
    demos: &[Demo],
    target: &Document,
    registry: &RelationRegistry,
) -> Result<PromptParts, PromptError> {
    if rel.is_na() {
        return Err(PromptError::NaRelation);
    }
    let name = &rel.name;
    Ok(PromptParts {
        kind: PromptKind::Decomposed,
        target_doc_id: target.doc_id.clone(),
        rid: Some(rel.rid.clone()),
        missing: None,
        instruction: format!(
            "Based on the context, assign the relation “{name}” for possible entity pairs and entities are marked in \"**entity**\"."
        ),
        demo_preamble: format!(" To help you, I provide examples of relation “{name}”.\nExamples:"),
        demos: demos
            .iter()
            .map(|d| {
                (
                    d.doc_id.clone(),
                    format!(
                        "\n\n[context]:{}\n\n[Relation]:\n{}",
                        d.context,
                        d.render_lines(registry, RenderStyle::QuotedPipe)
                    ),
                )
            })
            .collect(),
        target: format!("\n\n[context]:{}\n\n[Relation]:\n", target.marked_context()),
    })
}

pub fn build_decomposed_prompt(
    rel: &RelationType,
    demos: &[Demo],
    target: &Document,
    registry: &RelationRegistry,
    budget_tokens: usize,
) -> Result<Prompt, PromptError> {
    fit_budget(decomposed_parts(rel, demos, target, registry)?, budget_tokens)
}

pub fn ensemble_baseline_parts(registry: &RelationRegistry, demos: &[Demo], target: &Document) -> PromptParts {
    PromptParts {
        kind: PromptKind::EnsembleBaseline,
        target_doc_id: target.doc_id.clone(),
        rid: None,
        missing: None,
        instruction: format!(
            "List the relation triplets among the entities marked in “**entity**” from the given context and provide the triplet semantic explanation. The relation labels are provided in the list:\n{}",
            relation_list(registry)
        ),
        demo_preamble: String::new(),
        demos: demos
            .iter()
            .map(|d| {
                (
                    d.doc_id.clone(),
                    format!(
                        "\n\n[Context]: {}\n\n[Relation Triplet]:\n{}",
                        d.context,
                        d.render_lines(registry, RenderStyle::BracketExpl)
                    ),
                )
            })
            .collect(),
        target: format!("\n\n[Context]: {}\n\n[Relation Triplet]:\n", target.marked_context()),
    }
}

pub fn build_ensemble_baseline_prompt(
    registry: &RelationRegistry,
    demos: &[Demo],
    target: &Document,
    budget_tokens: usize,
) -> Result<Prompt, PromptError> {
    fit_budget(ensemble_baseline_parts(registry, demos, target), budget_tokens)
}

/// Literal body of an empty association block.
pub const EMPTY_ASSOCIATION: &str = "None.";

pub fn graph_ensemble_parts(
    registry: &RelationRegistry,
    subgraph: &AssociationSubgraph,
    missing: QueryPair,
    target: &Document,
    demos: &[Demo],
) -> PromptParts {
    let surface = |i: usize| {
        target
            .entity(i)
            .map(|e| e.display_surface().to_string())
            .unwrap_or_default()
    };
    let associations = if subgraph.triplets.is_empty() {
        EMPTY_ASSOCIATION.to_string()
    } else {
        subgraph
            .triplets
            .iter()
            .map(|t| render_triplet(t, registry, RenderStyle::QuotedPipe))
            .collect::<Vec<_>>()
            .join("\n")
    };
    PromptParts {
        kind: PromptKind::GraphEnsemble,
        target_doc_id: target.doc_id.clone(),
        rid: None,
        missing: Some(missing),
        instruction: format!(
            "From the relation list assign a label for the query pair given the associated relation triplets that are extracted from the context. Explain the assignment of query pair.\n{}",
            relation_list(registry)
        ),
        demo_preamble: "\n\nExamples:".to_string(),
        demos: demos
            .iter()
            .map(|d| {
                (
                    d.doc_id.clone(),
                    format!(
                        "\n\n[Context]: {}\n\n[Relation Triplets]:\n{}",
                        d.context,
                        d.render_lines(registry, RenderStyle::QuotedPipe)
                    ),
                )
            })
            .collect(),
        target: format!(
            "\n\n[Context]: {}\n\n[Association Triplets]:\n{}\n\n[Query Pair]:\n(**{}**, [MASK], **{}**) | [Explanation]\n\n[Answer]:\n",
            target.marked_context(),
            associations,
            surface(missing.head),
            surface(missing.tail)
        ),
    }
}

pub fn build_graph_ensemble_prompt(
    registry: &RelationRegistry,
    subgraph: &AssociationSubgraph,
    missing: QueryPair,
    target: &Document,
    demos: &[Demo],
    budget_tokens: usize,
) -> Result<Prompt, PromptError> {
    fit_budget(
        graph_ensemble_parts(registry, subgraph, missing, target, demos),
        budget_tokens,
    )
}

/// Whitespace normalization used when comparing prompts against reference
/// texts: runs of spaces collapse within a line, line ends are trimmed and
/// trailing blank lines dropped. Line structure is kept.
pub fn normalize_whitespace(text: &str) -> String {
    let lines: Vec<String> = text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    let end = lines.iter().rposition(|l| !l.is_empty()).map_or(0, |i| i + 1);
    let start = lines.iter().position(|l| !l.is_empty()).unwrap_or(end);
    lines[start..end].join("\n")
}
