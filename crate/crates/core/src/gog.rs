//! Triplet graph over a document's kept triplets and the association sub-graph
//! selected for a missing pair.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, EntityType, QueryPair};
use crate::extract::Triplet;

/// Default cap on sub-graph size.
pub const DEFAULT_MAX_EDGES: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GogError {
    #[error("triplet has an unresolved endpoint: {0}")]
    UnresolvedTriplet(String),
    #[error("entity index {0} does not exist in the document")]
    UnknownEntity(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub index: usize,
    pub etype: EntityType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletGraph {
    /// One node per distinct entity index, in order of first appearance.
    pub nodes: Vec<GraphNode>,
    /// Directed head to tail, in kept order. Parallel edges are allowed.
    pub edges: Vec<Triplet>,
}

impl TripletGraph {
    pub fn etype(&self, index: usize) -> Option<EntityType> {
        self.nodes.iter().find(|n| n.index == index).map(|n| n.etype)
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

pub fn build_graph(kept: &[Triplet], doc: &Document) -> Result<TripletGraph, GogError> {
    let mut nodes: Vec<GraphNode> = Vec::new();
    for t in kept {
        let (Some(h), Some(tl)) = (t.head_idx, t.tail_idx) else {
            return Err(GogError::UnresolvedTriplet(format!(
                "({}, {}, {})",
                t.head_surface, t.rid, t.tail_surface
            )));
        };
        for idx in [h, tl] {
            let entity = doc.entity(idx).ok_or(GogError::UnknownEntity(idx))?;
            if !nodes.iter().any(|n| n.index == idx) {
                nodes.push(GraphNode {
                    index: idx,
                    etype: entity.etype,
                });
            }
        }
    }
    Ok(TripletGraph {
        nodes,
        edges: kept.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharedEntityMode {
    /// `e1_i = e1_miss` or `e2_i = e2_miss`.
    #[default]
    Positional,
    /// The edge touches either entity of the missing pair in any position.
    AnyEndpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeMatchMode {
    /// `{etype(e1_i), etype(e2_i)} = {etype(e1_miss), etype(e2_miss)}`.
    #[default]
    Unordered,
    /// Head type and tail type must match position by position.
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgraphParams {
    pub shared: SharedEntityMode,
    pub type_match: TypeMatchMode,
    /// `None` disables the cap.
    pub max_edges: Option<usize>,
}

impl Default for SubgraphParams {
    fn default() -> Self {
        Self {
            shared: SharedEntityMode::default(),
            type_match: TypeMatchMode::default(),
            max_edges: Some(DEFAULT_MAX_EDGES),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionReason {
    SharedEntity,
    TypeMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationSubgraph {
    pub missing: QueryPair,
    pub triplets: Vec<Triplet>,
    /// Parallel to `triplets`.
    pub selection_reasons: Vec<Vec<SelectionReason>>,
    /// Matching edges left out by the cap.
    pub dropped: usize,
}

impl AssociationSubgraph {
    pub fn empty(missing: QueryPair) -> Self {
        Self {
            missing,
            triplets: Vec::new(),
            selection_reasons: Vec::new(),
            dropped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Reasons an edge belongs to the sub-graph of `missing`; empty when it does not.
pub fn membership(
    edge: QueryPair,
    edge_types: (Option<EntityType>, Option<EntityType>),
    missing: QueryPair,
    missing_types: (Option<EntityType>, Option<EntityType>),
    params: &SubgraphParams,
) -> Vec<SelectionReason> {
    let mut reasons = Vec::new();
    let shared = match params.shared {
        SharedEntityMode::Positional => edge.head == missing.head || edge.tail == missing.tail,
        SharedEntityMode::AnyEndpoint => [edge.head, edge.tail]
            .iter()
            .any(|e| *e == missing.head || *e == missing.tail),
    };
    if shared {
        reasons.push(SelectionReason::SharedEntity);
    }
    if let ((Some(a), Some(b)), (Some(x), Some(y))) = (edge_types, missing_types) {
        let matched = match params.type_match {
            TypeMatchMode::Ordered => (a, b) == (x, y),
            TypeMatchMode::Unordered => (a, b) == (x, y) || (a, b) == (y, x),
        };
        if matched {
            reasons.push(SelectionReason::TypeMatch);
        }
    }
    reasons
}

/// Shared-entity edges first, then type-only matches, each in graph order,
/// truncated to `params.max_edges`.
pub fn association_subgraph(
    graph: &TripletGraph,
    missing: QueryPair,
    doc: &Document,
    params: &SubgraphParams,
) -> AssociationSubgraph {
    let etype = |i: usize| doc.entity(i).map(|e| e.etype);
    let missing_types = (etype(missing.head), etype(missing.tail));

    let mut shared = Vec::new();
    let mut typed = Vec::new();
    for edge in &graph.edges {
        let Some(pair) = edge.pair() else { continue };
        let reasons = membership(
            pair,
            (graph.etype(pair.head), graph.etype(pair.tail)),
            missing,
            missing_types,
            params,
        );
        if reasons.contains(&SelectionReason::SharedEntity) {
            shared.push((edge, reasons));
        } else if !reasons.is_empty() {
            typed.push((edge, reasons));
        }
    }

    let total = shared.len() + typed.len();
    let limit = params.max_edges.unwrap_or(usize::MAX);
    let mut sub = AssociationSubgraph::empty(missing);
    for (edge, reasons) in shared.into_iter().chain(typed).take(limit) {
        sub.triplets.push(edge.clone());
        sub.selection_reasons.push(reasons);
    }
    sub.dropped = total - sub.triplets.len();
    sub
}
