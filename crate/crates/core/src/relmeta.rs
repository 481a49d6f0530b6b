//! Relation-type registry and type-injection explanation text.
//!
//! Every relation carries a curated description in which the subject and the
//! object already appear as placeholders ("this subject", "the object").
//! [`verbalize`] turns it into the definitional half of an explanation and
//! [`linearize`] renders a concrete `(head, relation, tail)` as a sentence.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EntityType;

pub const NA_RID: &str = "NA";

/// Used when a relation has no curated linearization template.
pub const DEFAULT_LINEARIZATION: &str = "The {relation} of {subject} is {object}.";

#[derive(Debug, Error)]
pub enum RelmetaError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid relation metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate relation id {0}")]
    DuplicateRid(String),
    #[error("relation {0} has an empty name")]
    MissingName(String),
    #[error("relation {0} has no description")]
    MissingDescription(String),
    #[error("relation {rid}: linearization template lacks {{subject}} or {{object}}")]
    BadTemplate { rid: String },
    #[error("the NA relation cannot be verbalized")]
    NAUnverbalizable,
    #[error("alias index {index} out of range for {rid} ({available} choices)")]
    AliasOutOfRange {
        rid: String,
        index: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub rid: String,
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subj_types: Option<BTreeSet<EntityType>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj_types: Option<BTreeSet<EntityType>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearization: Option<String>,
}

impl RelationType {
    pub fn na() -> Self {
        RelationType {
            rid: NA_RID.to_string(),
            name: NA_RID.to_string(),
            description: String::new(),
            aliases: Vec::new(),
            subj_types: None,
            obj_types: None,
            linearization: None,
        }
    }

    pub fn is_na(&self) -> bool {
        self.rid == NA_RID
    }

    /// Canonical name followed by aliases; `alias_index` selects from this list.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.aliases.iter().map(String::as_str))
    }

    pub fn label_count(&self) -> usize {
        1 + self.aliases.len()
    }
}

#[derive(Debug, Deserialize)]
struct RawRelation {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    aliases: Vec<String>,
    #[serde(default)]
    subj_types: Option<BTreeSet<EntityType>>,
    #[serde(default)]
    obj_types: Option<BTreeSet<EntityType>>,
    #[serde(default)]
    linearization: Option<String>,
}

/// Orders property ids numerically (`P6` before `P17`), with NA first.
fn rid_order(a: &str, b: &str) -> Ordering {
    fn key(rid: &str) -> (u8, u64, &str) {
        if rid == NA_RID {
            return (0, 0, rid);
        }
        match rid.strip_prefix('P').and_then(|n| n.parse::<u64>().ok()) {
            Some(n) => (1, n, rid),
            None => (2, 0, rid),
        }
    }
    key(a).cmp(&key(b))
}

#[derive(Debug, Clone)]
pub struct RelationRegistry {
    relations: Vec<RelationType>,
    by_rid: HashMap<String, usize>,
    by_name: HashMap<String, usize>,
}

impl RelationRegistry {
    /// Builds a registry from non-NA relations; NA is synthesized.
    pub fn new(relations: Vec<RelationType>) -> Result<Self, RelmetaError> {
        let mut seen = HashSet::new();
        for rel in &relations {
            if rel.is_na() || !seen.insert(rel.rid.clone()) {
                return Err(RelmetaError::DuplicateRid(rel.rid.clone()));
            }
            if rel.name.trim().is_empty() {
                return Err(RelmetaError::MissingName(rel.rid.clone()));
            }
            if rel.description.trim().is_empty() {
                return Err(RelmetaError::MissingDescription(rel.rid.clone()));
            }
            if let Some(t) = &rel.linearization {
                if !t.contains("{subject}") || !t.contains("{object}") {
                    return Err(RelmetaError::BadTemplate { rid: rel.rid.clone() });
                }
            }
        }
        let mut relations = relations;
        relations.push(RelationType::na());
        relations.sort_by(|a, b| rid_order(&a.rid, &b.rid));
        let by_rid = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.rid.to_lowercase(), i))
            .collect();
        let mut by_name = HashMap::new();
        for (i, r) in relations.iter().enumerate() {
            by_name.entry(normalize_label(&r.name)).or_insert(i);
        }
        Ok(Self {
            relations,
            by_rid,
            by_name,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, RelmetaError> {
        // Parse as ordered pairs first so that duplicate keys are detected
        // instead of silently overwritten.
        let pairs: DuplicateAware = serde_json::from_str(json)?;
        let relations = pairs
            .0
            .into_iter()
            .map(|(rid, raw)| RelationType {
                rid,
                name: raw.name,
                description: raw.description,
                aliases: raw.aliases,
                subj_types: raw.subj_types,
                obj_types: raw.obj_types,
                linearization: raw.linearization,
            })
            .collect();
        Self::new(relations)
    }

    /// Registry with the relation metadata shipped in this crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_REL_INFO).expect("bundled relation metadata is valid")
    }

    /// All relations including NA, ordered by id.
    pub fn iter(&self) -> impl Iterator<Item = &RelationType> {
        self.relations.iter()
    }

    pub fn non_na(&self) -> impl Iterator<Item = &RelationType> {
        self.relations.iter().filter(|r| !r.is_na())
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn get(&self, rid: &str) -> Option<&RelationType> {
        self.by_rid.get(&rid.to_lowercase()).map(|&i| &self.relations[i])
    }

    pub fn na(&self) -> &RelationType {
        self.get(NA_RID).expect("registry always holds NA")
    }

    /// Looks a generated relation label up by canonical name or by id.
    /// Quotes and surrounding whitespace are ignored, matching is case-insensitive.
    pub fn lookup(&self, label: &str) -> Option<&RelationType> {
        let key = normalize_label(label);
        if key.is_empty() {
            return None;
        }
        self.by_name
            .get(&key)
            .or_else(|| self.by_rid.get(&key))
            .map(|&i| &self.relations[i])
    }

    pub fn name_of<'a>(&'a self, rid: &'a str) -> &'a str {
        self.get(rid).map(|r| r.name.as_str()).unwrap_or(rid)
    }
}

struct DuplicateAware(Vec<(String, RawRelation)>);

impl<'de> Deserialize<'de> for DuplicateAware {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> serde::de::Visitor<'de> for V {
            type Value = DuplicateAware;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an object mapping relation ids to metadata")
            }
            fn visit_map<A: serde::de::MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, RawRelation>()? {
                    out.push((k, v));
                }
                Ok(DuplicateAware(out))
            }
        }
        d.deserialize_map(V)
    }
}

pub(crate) fn normalize_label(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| matches!(c, '\'' | '"' | '‘' | '’' | '“' | '”' | '`'))
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// The relation metadata file shipped in this crate.
pub const BUILTIN_REL_INFO: &str = include_str!("../data/rel_info.json");

pub fn load_registry(path: &Path) -> Result<RelationRegistry, RelmetaError> {
    let text = fs::read_to_string(path).map_err(|source| RelmetaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RelationRegistry::from_json(&text)
}

/// The definition sentence with placeholders, e.g.
/// "The object is a sovereign state that this subject is in."
pub fn definition_sentence(rel: &RelationType) -> Result<String, RelmetaError> {
    if rel.is_na() {
        return Err(RelmetaError::NAUnverbalizable);
    }
    let d = rel.description.trim().trim_end_matches('.');
    let mut chars = d.chars();
    let first = chars.next().map(|c| c.to_uppercase().collect::<String>()).unwrap_or_default();
    Ok(format!("{first}{}.", chars.as_str()))
}

/// `Because the relation “<name>” means <description>.`
pub fn verbalize(rel: &RelationType) -> Result<String, RelmetaError> {
    if rel.is_na() {
        return Err(RelmetaError::NAUnverbalizable);
    }
    Ok(format!(
        "Because the relation “{}” means {}.",
        rel.name,
        rel.description.trim().trim_end_matches('.')
    ))
}

/// Renders the triplet as one sentence with the surfaces in the subject and
/// object slots. `alias_index` 0 uses the canonical name, `i > 0` alias `i - 1`.
pub fn linearize(
    rel: &RelationType,
    head_surface: &str,
    tail_surface: &str,
    alias_index: usize,
) -> Result<String, RelmetaError> {
    let label = rel.labels().nth(alias_index).ok_or_else(|| RelmetaError::AliasOutOfRange {
        rid: rel.rid.clone(),
        index: alias_index,
        available: rel.label_count(),
    })?;
    let template = rel.linearization.as_deref().unwrap_or(DEFAULT_LINEARIZATION);
    // Single pass so that surfaces containing brace placeholders are never re-expanded.
    let mut out = String::with_capacity(template.len() + head_surface.len() + tail_surface.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open..];
        let (value, consumed) = if after.starts_with("{subject}") {
            (head_surface, "{subject}".len())
        } else if after.starts_with("{object}") {
            (tail_surface, "{object}".len())
        } else if after.starts_with("{relation}") {
            (label, "{relation}".len())
        } else {
            ("{", 1)
        };
        out.push_str(value);
        rest = &after[consumed..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Full type-injected explanation used for demonstration triplets:
/// verbalization followed by linearization.
pub fn explanation(
    rel: &RelationType,
    head_surface: &str,
    tail_surface: &str,
    alias_index: usize,
) -> Result<String, RelmetaError> {
    Ok(format!(
        "{} {}",
        verbalize(rel)?,
        linearize(rel, head_surface, tail_surface, alias_index % rel.label_count())?
    ))
}
