//! Parsing generated text into triplets, defect classification and the
//! canonical triplet line formats.
//!
//! A candidate line starts with `(` and takes one of two shapes:
//!
//! ```text
//! (<head>, <relation>, <tail>) | <explanation>
//! (<head>, <relation>, <tail>), [explanation] <explanation>
//! ```
//!
//! Surfaces may be wrapped in `**` and relation labels may be quoted. Each
//! non-empty line ends up as exactly one of: accepted triplet, defect,
//! "Cannot find a pair." sentinel, or ignored prose.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, QueryPair};
use crate::relmeta::{normalize_label, RelationRegistry, RelationType, NA_RID};

pub const NO_PAIR_SENTINEL: &str = "Cannot find a pair.";

/// Upper bound on comma-separated pieces inside one tuple; longer lines are
/// treated as malformed rather than searched exhaustively.
const MAX_TUPLE_PIECES: usize = 48;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stage {
    Decomposed { rid: String },
    GraphEnsemble,
    EnsembleBaseline,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Decomposed { rid } => write!(f, "decomposed({rid})"),
            Stage::GraphEnsemble => f.write_str("graph_ensemble"),
            Stage::EnsembleBaseline => f.write_str("ensemble_baseline"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub head_surface: String,
    pub tail_surface: String,
    pub head_idx: Option<usize>,
    pub tail_idx: Option<usize>,
    pub rid: String,
    pub explanation: String,
    pub stage: Stage,
    pub raw_line: String,
}

impl Triplet {
    pub fn is_na(&self) -> bool {
        self.rid == NA_RID
    }

    pub fn pair(&self) -> Option<QueryPair> {
        Some(QueryPair::new(self.head_idx?, self.tail_idx?))
    }

    /// `(head, rid, tail)` when both entities are resolved.
    pub fn key(&self) -> Option<(usize, &str, usize)> {
        Some((self.head_idx?, self.rid.as_str(), self.tail_idx?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    Repetition,
    Incomplete,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    pub kind: DefectKind,
    /// 1-based line number within the generation.
    pub line_no: usize,
    pub line: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectCounts {
    pub repetition: usize,
    pub incomplete: usize,
    pub irrelevant: usize,
}

impl DefectCounts {
    pub fn total(&self) -> usize {
        self.repetition + self.incomplete + self.irrelevant
    }

    pub fn add(&mut self, other: &DefectCounts) {
        self.repetition += other.repetition;
        self.incomplete += other.incomplete;
        self.irrelevant += other.irrelevant;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub triplets: Vec<Triplet>,
    pub defects: Vec<Defect>,
    pub sentinel_lines: usize,
    pub ignored_lines: usize,
    pub nonempty_lines: usize,
}

impl ParseReport {
    pub fn defect_counts(&self) -> DefectCounts {
        let mut c = DefectCounts::default();
        for d in &self.defects {
            match d.kind {
                DefectKind::Repetition => c.repetition += 1,
                DefectKind::Incomplete => c.incomplete += 1,
                DefectKind::Irrelevant => c.irrelevant += 1,
            }
        }
        c
    }

    /// Every non-empty line is accounted for exactly once.
    pub fn is_balanced(&self) -> bool {
        self.triplets.len() + self.defects.len() + self.sentinel_lines + self.ignored_lines == self.nonempty_lines
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderStyle {
    /// `(**h**, relation, **t**) | explanation`
    Pipe,
    /// `(**h**, 'relation', **t**) | explanation`, the form used inside prompts.
    QuotedPipe,
    /// `(h, relation, t), [explanation] explanation`
    BracketExpl,
}

pub fn render_triplet(t: &Triplet, registry: &RelationRegistry, style: RenderStyle) -> String {
    let name = registry.name_of(&t.rid);
    match style {
        RenderStyle::Pipe => format!("(**{}**, {}, **{}**) | {}", t.head_surface, name, t.tail_surface, t.explanation),
        RenderStyle::QuotedPipe => format!(
            "(**{}**, '{}', **{}**) | {}",
            t.head_surface, name, t.tail_surface, t.explanation
        ),
        RenderStyle::BracketExpl => format!(
            "({}, {}, {}), [explanation] {}",
            t.head_surface, name, t.tail_surface, t.explanation
        ),
    }
}

enum LineShape<'a> {
    Sentinel,
    Prose,
    Tuple { inner: &'a str, explanation: &'a str },
    Malformed(&'static str),
}

fn is_sentinel(line: &str) -> bool {
    let core = line.trim_end_matches(|c: char| c == '.' || c.is_whitespace());
    core.eq_ignore_ascii_case("cannot find a pair")
}

fn classify_shape(line: &str) -> LineShape<'_> {
    if is_sentinel(line) {
        return LineShape::Sentinel;
    }
    let Some(body) = line.strip_prefix('(') else {
        return LineShape::Prose;
    };
    for (c, ch) in body.char_indices() {
        if ch != ')' {
            continue;
        }
        let rest = body[c + 1..].trim_start();
        if let Some(after) = rest.strip_prefix('|') {
            return LineShape::Tuple {
                inner: &body[..c],
                explanation: after.trim(),
            };
        }
        if let Some(after) = rest.strip_prefix(',') {
            let after = after.trim_start();
            const TAG: &str = "[explanation]";
            if after.len() >= TAG.len()
                && after.is_char_boundary(TAG.len())
                && after[..TAG.len()].eq_ignore_ascii_case(TAG)
            {
                return LineShape::Tuple {
                    inner: &body[..c],
                    explanation: after[TAG.len()..].trim(),
                };
            }
        }
    }
    LineShape::Malformed("no closing parenthesis followed by an explanation")
}

fn clean_surface(s: &str) -> String {
    let mut t = s.trim();
    loop {
        let before = t;
        t = t.trim_matches(|c: char| matches!(c, '*' | '"' | '\'' | '‘' | '’' | '“' | '”')).trim();
        if t == before {
            break;
        }
    }
    t.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits `head, relation, tail` at the first comma boundaries whose middle
/// part is accepted by `accept`.
fn split_tuple<'r>(
    inner: &str,
    accept: &dyn Fn(&str) -> Option<&'r RelationType>,
) -> Option<(String, &'r RelationType, String)> {
    let pieces: Vec<&str> = inner.split(',').collect();
    if pieces.len() < 3 || pieces.len() > MAX_TUPLE_PIECES {
        return None;
    }
    for i in 1..pieces.len() - 1 {
        let head = clean_surface(&pieces[..i].join(","));
        if head.is_empty() {
            continue;
        }
        for j in i + 1..pieces.len() {
            let rel_text = pieces[i..j].join(",");
            if let Some(rel) = accept(&rel_text) {
                let tail = clean_surface(&pieces[j..].join(","));
                if !tail.is_empty() {
                    return Some((head, rel, tail));
                }
            }
        }
    }
    None
}

fn is_na_label(label: &str) -> bool {
    let l = normalize_label(label);
    l == "na" || l == "no relation"
}

/// Parses one model generation for `doc`. Never fails; malformed material is
/// reported as defects.
pub fn parse_generation(text: &str, doc: &Document, stage: &Stage, registry: &RelationRegistry) -> ParseReport {
    let mut report = ParseReport::default();
    let mut seen: HashSet<(usize, String, usize)> = HashSet::new();

    let general = |label: &str| -> Option<&RelationType> {
        if is_na_label(label) {
            return Some(registry.na());
        }
        registry.lookup(label)
    };

    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        report.nonempty_lines += 1;
        let defect = |kind: DefectKind, reason: String| Defect {
            kind,
            line_no: n + 1,
            line: line.to_string(),
            reason,
        };

        let (inner, explanation) = match classify_shape(line) {
            LineShape::Sentinel => {
                report.sentinel_lines += 1;
                continue;
            }
            LineShape::Prose => {
                report.ignored_lines += 1;
                continue;
            }
            LineShape::Malformed(reason) => {
                report.defects.push(defect(DefectKind::Incomplete, reason.to_string()));
                continue;
            }
            LineShape::Tuple { inner, explanation } => (inner, explanation),
        };
        if explanation.is_empty() {
            report
                .defects
                .push(defect(DefectKind::Incomplete, "empty explanation".into()));
            continue;
        }

        let parsed = match stage {
            Stage::Decomposed { rid } => {
                let prompted = |label: &str| registry.lookup(label).filter(|r| &r.rid == rid);
                match split_tuple(inner, &prompted) {
                    Some(p) => Ok(p),
                    None => Err(match split_tuple(inner, &general) {
                        Some((_, other, _)) => format!("relation {} differs from prompted {rid}", other.rid),
                        None => "unknown relation or not a (head, relation, tail) tuple".to_string(),
                    }),
                }
            }
            Stage::GraphEnsemble | Stage::EnsembleBaseline => split_tuple(inner, &general)
                .ok_or_else(|| "unknown relation or not a (head, relation, tail) tuple".to_string()),
        };
        let (head_surface, rel, tail_surface) = match parsed {
            Ok(p) => p,
            Err(reason) => {
                report.defects.push(defect(DefectKind::Incomplete, reason));
                continue;
            }
        };

        let head_idx = doc.resolve_entity(&head_surface);
        let tail_idx = doc.resolve_entity(&tail_surface);
        let (h, t) = match (head_idx, tail_idx) {
            (Some(h), Some(t)) if h != t => (h, t),
            (Some(_), Some(_)) => {
                report
                    .defects
                    .push(defect(DefectKind::Irrelevant, "head and tail are the same entity".into()));
                continue;
            }
            _ => {
                let missing = if head_idx.is_none() { &head_surface } else { &tail_surface };
                report.defects.push(defect(
                    DefectKind::Irrelevant,
                    format!("{missing:?} is not an entity mention of the document"),
                ));
                continue;
            }
        };

        if !seen.insert((h, rel.rid.clone(), t)) {
            report
                .defects
                .push(defect(DefectKind::Repetition, "triplet already generated".into()));
            continue;
        }

        report.triplets.push(Triplet {
            head_surface,
            tail_surface,
            head_idx: Some(h),
            tail_idx: Some(t),
            rid: rel.rid.clone(),
            explanation: explanation.to_string(),
            stage: stage.clone(),
            raw_line: line.to_string(),
        });
    }
    report
}

/// The first accepted answer line for exactly the `missing` pair (orientation
/// must match). NA answers ("NA", "no relation") yield an NA triplet.
pub fn parse_mask_answer(
    text: &str,
    missing: QueryPair,
    doc: &Document,
    registry: &RelationRegistry,
) -> Option<Triplet> {
    parse_generation(text, doc, &Stage::GraphEnsemble, registry)
        .triplets
        .into_iter()
        .find(|t| t.pair() == Some(missing))
}
