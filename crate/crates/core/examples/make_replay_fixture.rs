//! Regenerates the end-to-end fixture under `tests/fixtures/e2e`: a small
//! synthetic corpus and the replay file answering every request of a full
//! run over it.
//!
//! The responses come from a scripted annotator that knows the gold labels.
//! It withholds some pairs in the decomposed stage, adds a few malformed or
//! off-document lines, and answers most graph-ensemble queries correctly.
//!
//! ```text
//! cargo run -p docrel-core --example make_replay_fixture
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use docrel_core::corpus::{load_split, Document, Split};
use docrel_core::llm::CacheRecord;
use docrel_core::llm::{GenerationRequest, GenerationResponse, Generator, HashMockEmbedder, LlmError, Usage};
use docrel_core::pipeline::{derive_seed, run_pipeline, PipelineInputs, RunConfig, StageMode, CACHE_FILE};
use docrel_core::relmeta::{self, RelationRegistry};
use serde_json::{json, Value};

const FIRST: &[&str] = &[
    "Anna", "Boris", "Clara", "David", "Elena", "Felix", "Greta", "Hugo", "Ines", "Jonas", "Karin", "Lukas", "Marta",
    "Nils", "Olga", "Pavel", "Rosa", "Stefan", "Tilda", "Viktor",
];
const LAST: &[&str] = &[
    "Adler", "Brandt", "Castell", "Dorn", "Eckert", "Falk", "Gerber", "Hahn", "Imhof", "Jung", "Kessler", "Lorenz",
];
const CITIES: &[&str] = &[
    "Arlen", "Bexford", "Calder", "Dunmore", "Elsby", "Farrow", "Glenholm", "Harwick", "Ivybridge", "Jarrow",
    "Kelso", "Lanark", "Marlow", "Norwich", "Oban", "Penrith", "Quorn", "Ripon", "Selby", "Thirsk",
];
const COUNTRIES: &[&str] = &["Avalon", "Borduria", "Carpania", "Drusselstein", "Elbonia", "Freedonia"];
const ORGS: &[&str] = &[
    "Northwind Trading", "Halcyon Works", "Ironvale Bank", "Bluewater Press", "Summit Foundry", "Lumen Labs",
    "Oakridge Mills", "Crescent Rail",
];

struct DocBuilder {
    sents: Vec<Vec<String>>,
    vertex: Vec<Vec<Value>>,
    names: Vec<String>,
    labels: Vec<Value>,
}

impl DocBuilder {
    fn new() -> Self {
        Self {
            sents: Vec::new(),
            vertex: Vec::new(),
            names: Vec::new(),
            labels: Vec::new(),
        }
    }

    /// `parts` alternate between plain text and `(surface, type)` mentions.
    fn sentence(&mut self, parts: &[Part<'_>]) {
        let sid = self.sents.len();
        let mut tokens: Vec<String> = Vec::new();
        for part in parts {
            match part {
                Part::Text(t) => tokens.extend(t.split(' ').map(String::from)),
                Part::Ent(name, etype) => {
                    let start = tokens.len();
                    tokens.extend(name.split(' ').map(String::from));
                    let m = json!({"name": name, "sent_id": sid, "pos": [start, tokens.len()], "type": etype});
                    match self.names.iter().position(|n| n == name) {
                        Some(i) => self.vertex[i].push(m),
                        None => {
                            self.names.push(name.to_string());
                            self.vertex.push(vec![m]);
                        }
                    }
                }
            }
        }
        self.sents.push(tokens);
    }

    fn label(&mut self, h: &str, r: &str, t: &str) {
        let idx = |n: &str| self.names.iter().position(|x| x == n).expect("entity declared before label");
        let (hi, ti) = (idx(h), idx(t));
        self.labels.push(json!({"h": hi, "t": ti, "r": r, "evidence": []}));
    }

    fn finish(self, title: &str) -> Value {
        json!({"title": title, "sents": self.sents, "vertexSet": self.vertex, "labels": self.labels})
    }
}

enum Part<'a> {
    Text(&'a str),
    Ent(&'a str, &'a str),
}

/// One document with `families` blocks of people, places and an employer.
fn synth_doc(n: usize, families: usize) -> Value {
    let mut b = DocBuilder::new();
    let country = COUNTRIES[n % COUNTRIES.len()];
    for f in 0..families {
        let s = n * 7 + f * 3;
        let p1 = format!("{} {}", FIRST[s % FIRST.len()], LAST[(s + f) % LAST.len()]);
        let p2 = format!("{} {}", FIRST[(s + 1) % FIRST.len()], LAST[(s + f) % LAST.len()]);
        let c1 = CITIES[(n * 5 + f * 2) % CITIES.len()];
        let c2 = CITIES[(n * 5 + f * 2 + 1) % CITIES.len()];
        let org = ORGS[(n + f) % ORGS.len()];
        let year = format!("{}", 1900 + (s * 13) % 90);
        use Part::{Ent, Text};
        b.sentence(&[Ent(&p1, "PER"), Text("was born in"), Ent(c1, "LOC"), Text("in"), Ent(&year, "TIME"), Text(".")]);
        b.sentence(&[Ent(c1, "LOC"), Text("is a town in"), Ent(country, "LOC"), Text(".")]);
        b.sentence(&[
            Ent(&p1, "PER"),
            Text("worked for"),
            Ent(org, "ORG"),
            Text(", a firm based in"),
            Ent(c2, "LOC"),
            Text("."),
        ]);
        b.sentence(&[
            Ent(&p2, "PER"),
            Text(", who married"),
            Ent(&p1, "PER"),
            Text(", died in"),
            Ent(c2, "LOC"),
            Text("."),
        ]);
        b.sentence(&[Ent(c2, "LOC"), Text("lies in the south of"), Ent(country, "LOC"), Text(".")]);

        b.label(&p1, "P19", c1);
        b.label(&p1, "P569", &year);
        b.label(&p1, "P27", country);
        b.label(c1, "P17", country);
        b.label(c1, "P131", country);
        b.label(&p1, "P108", org);
        b.label(org, "P159", c2);
        b.label(org, "P17", country);
        b.label(&p2, "P26", &p1);
        b.label(&p1, "P26", &p2);
        b.label(&p2, "P20", c2);
        b.label(&p2, "P27", country);
        b.label(c2, "P17", country);
    }
    b.finish(&format!("Synthetic document {n}"))
}

/// Scripted annotator keyed on the target context embedded in each prompt.
struct Annotator<'a> {
    by_context: HashMap<String, &'a Document>,
    registry: &'a RelationRegistry,
}

impl<'a> Annotator<'a> {
    fn new(docs: &'a [Document], registry: &'a RelationRegistry) -> Self {
        Self {
            by_context: docs.iter().map(|d| (d.marked_context(), d)).collect(),
            registry,
        }
    }

    fn target(&self, prompt: &str) -> Option<&'a Document> {
        let (_, rest) = prompt
            .rsplit_once("[context]:")
            .or_else(|| prompt.rsplit_once("[Context]: "))?;
        let ctx = rest.split("\n\n[").next()?;
        self.by_context.get(ctx).copied()
    }

    fn surface(doc: &Document, i: usize) -> &str {
        doc.entities[i].display_surface()
    }

    fn line(&self, doc: &Document, h: usize, rid: &str, t: usize) -> String {
        let rel = self.registry.get(rid).expect("known relation");
        let (hs, ts) = (Self::surface(doc, h), Self::surface(doc, t));
        let expl = relmeta::linearize(rel, hs, ts, 0).expect("linearization");
        format!("(**{hs}**, '{}', **{ts}**) | Because {expl}", rel.name)
    }

    /// Pairs the decomposed stage never reports.
    fn withheld(doc: &Document, h: usize, t: usize) -> bool {
        derive_seed(7, &[&doc.doc_id, &h.to_string(), &t.to_string()]) % 3 == 0
    }

    fn decomposed(&self, doc: &Document, rid: &str) -> String {
        let gold: Vec<(usize, usize)> = doc
            .gold
            .iter()
            .filter(|g| g.relation == rid && !Self::withheld(doc, g.head, g.tail))
            .map(|g| (g.head, g.tail))
            .collect();
        if gold.is_empty() {
            return "Cannot find a pair.".into();
        }
        let mut lines: Vec<String> = gold.iter().map(|&(h, t)| self.line(doc, h, rid, t)).collect();
        let name = &self.registry.get(rid).expect("known relation").name;
        match rid {
            "P17" => {
                lines.push(lines[0].clone());
                let (h, t) = gold[0];
                lines.push(format!(
                    "(**{}**, '{name}', **{}**) | Because the rel",
                    Self::surface(doc, t),
                    Self::surface(doc, h)
                ));
            }
            "P27" => lines.push(format!(
                "(**Nobody Known**, '{name}', **{}**) | Because of the text.",
                Self::surface(doc, gold[0].1)
            )),
            "P19" => lines.push(format!("(**{}**, '{name}'", Self::surface(doc, gold[0].0))),
            _ => {}
        }
        lines.join("\n")
    }

    fn ensemble(&self, doc: &Document, prompt: &str) -> String {
        let Some(query) = prompt.split("[Query Pair]:\n").nth(1) else {
            return "Cannot find a pair.".into();
        };
        let inner = query.trim_start_matches('(').split(", [MASK], ").collect::<Vec<_>>();
        let (Some(h), Some(t)) = (
            inner.first().and_then(|s| doc.resolve_entity(s)),
            inner
                .get(1)
                .and_then(|s| s.split(')').next())
                .and_then(|s| doc.resolve_entity(s)),
        ) else {
            return "Cannot find a pair.".into();
        };
        // One in five queries goes unanswered.
        if derive_seed(11, &[&doc.doc_id, &h.to_string(), &t.to_string()]) % 5 == 0 {
            return "Cannot find a pair.".into();
        }
        match doc.gold.iter().find(|g| g.head == h && g.tail == t) {
            Some(g) => self.line(doc, h, &g.relation, t),
            None => "Cannot find a pair.".into(),
        }
    }
}

impl Generator for Annotator<'_> {
    fn generate(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        let prompt = &req.prompt_text;
        let doc = self
            .target(prompt)
            .ok_or_else(|| LlmError::InvalidRequest("prompt target is not a fixture document".into()))?;
        let text = if prompt.contains("[Query Pair]:") {
            self.ensemble(doc, prompt)
        } else {
            let name = prompt
                .split("assign the relation “")
                .nth(1)
                .and_then(|s| s.split('”').next())
                .ok_or_else(|| LlmError::InvalidRequest("no relation in decomposed prompt".into()))?;
            let rel = self
                .registry
                .lookup(name)
                .ok_or_else(|| LlmError::InvalidRequest(format!("unknown relation {name}")))?;
            self.decomposed(doc, &rel.rid)
        };
        Ok(GenerationResponse {
            usage: Usage::estimate(prompt, &text),
            text,
            backend_id: self.backend_id(),
            cached: false,
        })
    }

    fn backend_id(&self) -> String {
        "annotator".into()
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e");
    fs::create_dir_all(&out)?;
    let train: Vec<Value> = (0..6).map(|n| synth_doc(100 + n, 1 + n % 2)).collect();
    let test: Vec<Value> = (0..5).map(|n| synth_doc(n, 1 + n % 3)).collect();
    fs::write(out.join("train.json"), serde_json::to_string_pretty(&train)? + "\n")?;
    fs::write(out.join("test.json"), serde_json::to_string_pretty(&test)? + "\n")?;

    let train = load_split(&out.join("train.json"), Split::Train)?;
    let test = load_split(&out.join("test.json"), Split::Test)?;
    let registry = RelationRegistry::builtin();
    let annotator = Annotator::new(&test, &registry);
    let embedder = HashMockEmbedder::new(0);
    let docs: Vec<&Document> = test.iter().collect();
    let pool: Vec<&Document> = train.iter().collect();
    let inputs = PipelineInputs {
        docs: &docs,
        pool: &pool,
        registry: &registry,
        generator: &annotator,
        embedder: &embedder,
    };

    let work_dir = tempfile::tempdir()?;
    let work = work_dir.path().to_path_buf();
    let config = RunConfig {
        stage: StageMode::Full,
        concurrency: 1,
        ..RunConfig::default()
    };
    let summary = run_pipeline(&config, &inputs, &work, json!({"fixture": "e2e"}))?;
    println!(
        "full run: {} prompts, micro recall {:.4}",
        summary.manifest.prompt_count, summary.metrics.micro.recall
    );

    let mut records: Vec<CacheRecord> = fs::read_to_string(work.join(CACHE_FILE))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()?;
    records.sort_by(|a, b| a.key.cmp(&b.key));
    records.dedup_by(|a, b| a.key == b.key);
    let mut body = String::new();
    for mut r in records {
        r.created_unix = 0;
        body.push_str(&serde_json::to_string(&r)?);
        body.push('\n');
    }
    fs::write(out.join("replay.jsonl"), body)?;
    println!("wrote {}", out.display());
    Ok(())
}
