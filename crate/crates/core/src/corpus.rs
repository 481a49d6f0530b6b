//! Re-DocRED style corpora: documents, entity clusters, gold labels and
//! the derived query pairs.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a JSON array of document records: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed record {doc_index} in {split}: {reason}")]
    MalformedRecord {
        split: Split,
        doc_index: usize,
        reason: String,
    },
    #[error("record {doc_index} in {split}: label references entity {entity} but the document has {entity_count} entities")]
    DanglingEntityIndex {
        split: Split,
        doc_index: usize,
        entity: usize,
        entity_count: usize,
    },
    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "TIME")]
    Time,
    #[serde(rename = "NUM")]
    Num,
    #[serde(rename = "MISC")]
    Misc,
}

impl EntityType {
    pub fn parse(tag: &str) -> Option<Self> {
        Some(match tag {
            "PER" => EntityType::Per,
            "ORG" => EntityType::Org,
            "LOC" => EntityType::Loc,
            "TIME" => EntityType::Time,
            "NUM" => EntityType::Num,
            "MISC" => EntityType::Misc,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Org => "ORG",
            EntityType::Loc => "LOC",
            EntityType::Time => "TIME",
            EntityType::Num => "NUM",
            EntityType::Misc => "MISC",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub sent_id: usize,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    /// Space-joined tokens of the span.
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub index: usize,
    pub etype: EntityType,
    pub mentions: Vec<Mention>,
}

impl Entity {
    /// Surface used when the entity is written into prompts and demos.
    pub fn display_surface(&self) -> &str {
        &self.mentions[0].surface
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub head: usize,
    pub tail: usize,
    pub relation: String,
    #[serde(default)]
    pub evidence: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryPair {
    pub head: usize,
    pub tail: usize,
}

impl QueryPair {
    pub fn new(head: usize, tail: usize) -> Self {
        Self { head, tail }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityGroup {
    Sparse,
    Normal,
    Dense,
}

impl DensityGroup {
    /// Sparse up to 20 query pairs, Normal up to and including 40, Dense above.
    pub fn from_pair_count(count: usize) -> Self {
        if count <= 20 {
            DensityGroup::Sparse
        } else if count <= 40 {
            DensityGroup::Normal
        } else {
            DensityGroup::Dense
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DensityGroup::Sparse => "sparse",
            DensityGroup::Normal => "normal",
            DensityGroup::Dense => "dense",
        }
    }
}

/// How the query pairs of a document are derived.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// Distinct (head, tail) pairs of the gold labels.
    #[default]
    GoldPairs,
    /// Every ordered pair of distinct entities.
    AllOrderedPairs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub sentences: Vec<Vec<String>>,
    pub entities: Vec<Entity>,
    pub gold: Vec<GoldRelation>,
    pub split: Split,
}

impl Document {
    /// Distinct gold pairs in first-occurrence order.
    pub fn query_pairs(&self) -> Vec<QueryPair> {
        let mut seen = HashSet::new();
        self.gold
            .iter()
            .map(|g| QueryPair::new(g.head, g.tail))
            .filter(|p| seen.insert(*p))
            .collect()
    }

    pub fn query_pairs_with(&self, mode: QueryMode) -> Vec<QueryPair> {
        match mode {
            QueryMode::GoldPairs => self.query_pairs(),
            QueryMode::AllOrderedPairs => {
                let n = self.entities.len();
                (0..n)
                    .flat_map(|h| (0..n).filter(move |&t| t != h).map(move |t| QueryPair::new(h, t)))
                    .collect()
            }
        }
    }

    pub fn density_group(&self) -> DensityGroup {
        DensityGroup::from_pair_count(self.query_pairs().len())
    }

    /// Unmarked document text: every sentence's tokens joined with single spaces.
    pub fn plain_text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.join(" "))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Document text with every mention wrapped as `**surface**`.
    ///
    /// Overlapping spans are resolved longest first, ties by lower start; a span
    /// overlapping an already accepted one is left unmarked.
    pub fn marked_context(&self) -> String {
        let mut out: Vec<String> = Vec::with_capacity(self.sentences.len());
        for (sid, tokens) in self.sentences.iter().enumerate() {
            let mut spans: Vec<(usize, usize)> = self
                .entities
                .iter()
                .flat_map(|e| e.mentions.iter())
                .filter(|m| m.sent_id == sid)
                .map(|m| (m.start, m.end))
                .collect();
            spans.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
            spans.dedup();
            let mut accepted: Vec<(usize, usize)> = Vec::new();
            for span in spans {
                if accepted.iter().all(|&(s, e)| span.1 <= s || span.0 >= e) {
                    accepted.push(span);
                }
            }
            accepted.sort_unstable();

            let mut pieces: Vec<String> = Vec::with_capacity(tokens.len());
            let mut i = 0;
            let mut next = accepted.iter().peekable();
            while i < tokens.len() {
                match next.peek() {
                    Some(&&(s, e)) if s == i => {
                        pieces.push(format!("**{}**", tokens[s..e].join(" ")));
                        i = e;
                        next.next();
                    }
                    _ => {
                        pieces.push(tokens[i].clone());
                        i += 1;
                    }
                }
            }
            out.push(pieces.join(" "));
        }
        out.join(" ")
    }

    /// Maps a generated surface string back to an entity. Matching is exact after
    /// case folding, whitespace normalization and removal of `**` markers and
    /// surrounding quotes; the lowest entity index wins.
    pub fn resolve_entity(&self, surface: &str) -> Option<usize> {
        let wanted = normalize_surface(surface);
        if wanted.is_empty() {
            return None;
        }
        self.entities
            .iter()
            .find(|e| e.mentions.iter().any(|m| normalize_surface(&m.surface) == wanted))
            .map(|e| e.index)
    }

    pub fn entity(&self, index: usize) -> Option<&Entity> {
        self.entities.get(index)
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

pub(crate) fn normalize_surface(s: &str) -> String {
    let mut t = s.trim();
    loop {
        let before = t;
        t = t.trim_matches(|c: char| matches!(c, '*' | '"' | '\'' | '‘' | '’' | '“' | '”')).trim();
        if t == before {
            break;
        }
    }
    t.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub train: Vec<Document>,
    pub dev: Vec<Document>,
    pub test: Vec<Document>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Document] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            train: SplitStats::of(&self.train),
            dev: SplitStats::of(&self.dev),
            test: SplitStats::of(&self.test),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub documents: usize,
    pub mean_words: f64,
    pub mean_entities: f64,
    pub mean_triplets: f64,
    pub mean_query_pairs: f64,
    pub sparse: usize,
    pub normal: usize,
    pub dense: usize,
}

impl SplitStats {
    pub fn of(docs: &[Document]) -> Self {
        let n = docs.len();
        let mean = |f: &dyn Fn(&Document) -> usize| {
            if n == 0 {
                0.0
            } else {
                docs.iter().map(f).sum::<usize>() as f64 / n as f64
            }
        };
        let count_group = |g| docs.iter().filter(|d| d.density_group() == g).count();
        SplitStats {
            documents: n,
            mean_words: mean(&|d| d.word_count()),
            mean_entities: mean(&|d| d.entities.len()),
            mean_triplets: mean(&|d| d.gold.len()),
            mean_query_pairs: mean(&|d| d.query_pairs().len()),
            sparse: count_group(DensityGroup::Sparse),
            normal: count_group(DensityGroup::Normal),
            dense: count_group(DensityGroup::Dense),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub train: SplitStats,
    pub dev: SplitStats,
    pub test: SplitStats,
}

// Raw DocRED layout.

#[derive(Debug, Deserialize)]
struct RawDocument {
    title: String,
    sents: Vec<Vec<String>>,
    #[serde(rename = "vertexSet")]
    vertex_set: Vec<Vec<RawMention>>,
    #[serde(default)]
    labels: Vec<RawLabel>,
}

#[derive(Debug, Deserialize)]
struct RawMention {
    #[allow(dead_code)]
    name: String,
    sent_id: usize,
    pos: Vec<usize>,
    #[serde(rename = "type")]
    etype: String,
}

#[derive(Debug, Deserialize)]
struct RawLabel {
    h: usize,
    t: usize,
    r: String,
    #[serde(default)]
    evidence: Vec<usize>,
}

pub fn load_corpus(train: &Path, dev: &Path, test: &Path) -> Result<Corpus, CorpusError> {
    let corpus = Corpus {
        train: load_split(train, Split::Train)?,
        dev: load_split(dev, Split::Dev)?,
        test: load_split(test, Split::Test)?,
    };
    let mut ids = HashSet::new();
    for split in [Split::Train, Split::Dev, Split::Test] {
        for doc in corpus.split(split) {
            if !ids.insert(doc.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocId(doc.doc_id.clone()));
            }
        }
    }
    log::info!(
        "loaded corpus: {} train / {} dev / {} test documents",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len()
    );
    Ok(corpus)
}

/// Loads one split file. Documents get ids `<split>-<index:05>`.
pub fn load_split(path: &Path, split: Split) -> Result<Vec<Document>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_split(&text, split).map_err(|e| match e {
        CorpusError::Json { source, .. } => CorpusError::Json {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn parse_split(json: &str, split: Split) -> Result<Vec<Document>, CorpusError> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(json).map_err(|source| CorpusError::Json {
        path: "<memory>".into(),
        source,
    })?;
    raw.into_iter()
        .enumerate()
        .map(|(i, value)| {
            let record: RawDocument =
                serde_json::from_value(value).map_err(|e| CorpusError::MalformedRecord {
                    split,
                    doc_index: i,
                    reason: e.to_string(),
                })?;
            convert(record, split, i)
        })
        .collect()
}

fn convert(raw: RawDocument, split: Split, doc_index: usize) -> Result<Document, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedRecord {
        split,
        doc_index,
        reason,
    };
    let mut entities = Vec::with_capacity(raw.vertex_set.len());
    for (index, cluster) in raw.vertex_set.into_iter().enumerate() {
        let first = cluster
            .first()
            .ok_or_else(|| malformed(format!("entity {index} has no mentions")))?;
        let etype = EntityType::parse(&first.etype)
            .ok_or_else(|| malformed(format!("entity {index} has unknown type {:?}", first.etype)))?;
        let mut mentions = Vec::with_capacity(cluster.len());
        for m in cluster {
            let sentence = raw
                .sents
                .get(m.sent_id)
                .ok_or_else(|| malformed(format!("entity {index}: sent_id {} out of range", m.sent_id)))?;
            let (start, end) = match m.pos.as_slice() {
                [s, e] => (*s, *e),
                other => return Err(malformed(format!("entity {index}: pos {other:?} is not [start, end]"))),
            };
            if start >= end || end > sentence.len() {
                return Err(malformed(format!(
                    "entity {index}: span [{start}, {end}) invalid for sentence {} of length {}",
                    m.sent_id,
                    sentence.len()
                )));
            }
            mentions.push(Mention {
                sent_id: m.sent_id,
                start,
                end,
                surface: sentence[start..end].join(" "),
            });
        }
        entities.push(Entity {
            index,
            etype,
            mentions,
        });
    }
    let mut gold = Vec::with_capacity(raw.labels.len());
    for label in raw.labels {
        for entity in [label.h, label.t] {
            if entity >= entities.len() {
                return Err(CorpusError::DanglingEntityIndex {
                    split,
                    doc_index,
                    entity,
                    entity_count: entities.len(),
                });
            }
        }
        if label.h == label.t {
            return Err(malformed(format!("label with head = tail = {}", label.h)));
        }
        gold.push(GoldRelation {
            head: label.h,
            tail: label.t,
            relation: label.r,
            evidence: label.evidence,
        });
    }
    Ok(Document {
        doc_id: format!("{}-{:05}", split.as_str(), doc_index),
        title: raw.title,
        sentences: raw.sents,
        entities,
        gold,
        split,
    })
}
