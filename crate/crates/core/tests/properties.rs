use std::collections::BTreeSet;

use docrel_core::corpus::{Document, Entity, EntityType, Mention, QueryPair, Split};
use docrel_core::extract::{parse_generation, render_triplet, RenderStyle, Stage, Triplet};
use docrel_core::gog::{association_subgraph, build_graph, SharedEntityMode, SubgraphParams, TypeMatchMode};
use docrel_core::icl::vote_k_select;
use docrel_core::llm::{cache_key, GenerationRequest};
use docrel_core::metrics::{macro_prf, micro_prf, FactKey};
use docrel_core::par::Parallelism;
use docrel_core::prompts::normalize_whitespace;
use docrel_core::relmeta::RelationRegistry;
use docrel_core::verifier::lof::lof_scores;
use docrel_core::verifier::{select_outliers, OutlierParams};
use proptest::prelude::*;

const TYPES: [EntityType; 6] = [
    EntityType::Per,
    EntityType::Org,
    EntityType::Loc,
    EntityType::Time,
    EntityType::Num,
    EntityType::Misc,
];
const RIDS: [&str; 4] = ["P17", "P27", "P131", "P150"];

fn doc_with_types(types: &[usize]) -> Document {
    let tokens: Vec<String> = (0..types.len()).map(|i| format!("Ent{i}")).collect();
    Document {
        doc_id: "dev-00000".into(),
        title: String::new(),
        entities: types
            .iter()
            .enumerate()
            .map(|(i, &t)| Entity {
                index: i,
                etype: TYPES[t % TYPES.len()],
                mentions: vec![Mention {
                    sent_id: 0,
                    start: i,
                    end: i + 1,
                    surface: tokens[i].clone(),
                }],
            })
            .collect(),
        sentences: vec![tokens],
        gold: Vec::new(),
        split: Split::Dev,
    }
}

fn edge(doc: &Document, h: usize, rid: &str, t: usize) -> Triplet {
    Triplet {
        head_surface: doc.entities[h].display_surface().into(),
        tail_surface: doc.entities[t].display_surface().into(),
        head_idx: Some(h),
        tail_idx: Some(t),
        rid: rid.into(),
        explanation: "Because.".into(),
        stage: Stage::GraphEnsemble,
        raw_line: String::new(),
    }
}

fn distinct_points(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5).prop_flat_map(move |dim| {
        prop::collection::vec(prop::collection::vec(-50i32..50, dim), 3..max_n).prop_map(|pts| {
            let mut seen = BTreeSet::new();
            pts.into_iter()
                .filter(|p| seen.insert(p.clone()))
                .map(|p| p.into_iter().map(f64::from).collect())
                .collect()
        })
    })
}

fn facts() -> impl Strategy<Value = BTreeSet<FactKey>> {
    prop::collection::btree_set(
        (0usize..3, 0usize..6, 0usize..RIDS.len(), 0usize..6)
            .prop_map(|(d, h, r, t)| (format!("test-{d:05}"), h, RIDS[r].to_string(), t)),
        0..40,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lof_is_permutation_invariant(points in distinct_points(40), k in 1usize..6, seed in any::<u64>()) {
        prop_assume!(points.len() >= 2);
        let base = lof_scores(&points, k, Parallelism::Sequential).unwrap();
        let mut order: Vec<usize> = (0..points.len()).collect();
        // Deterministic shuffle from the seed.
        let mut s = seed | 1;
        for i in (1..order.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            order.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
        let scores = lof_scores(&permuted, k, Parallelism::Sequential).unwrap();
        for (pos, &orig) in order.iter().enumerate() {
            prop_assert!((scores[pos] - base[orig]).abs() < 1e-9);
        }
    }

    #[test]
    fn lof_is_scale_and_shift_invariant(points in distinct_points(30), k in 1usize..5, exp in -2i32..5) {
        // Powers of two keep grid distances exact, so ties survive the transform.
        let scale = 2f64.powi(exp);
        prop_assume!(points.len() >= 2);
        let base = lof_scores(&points, k, Parallelism::Sequential).unwrap();
        let moved: Vec<Vec<f64>> = points.iter().map(|p| p.iter().map(|x| x * scale + 3.0).collect()).collect();
        let scores = lof_scores(&moved, k, Parallelism::Sequential).unwrap();
        for (a, b) in base.iter().zip(&scores) {
            prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn outlier_selection_respects_cap_and_threshold(scores in prop::collection::vec(0.5f64..4.0, 4..60)) {
        let params = OutlierParams::default();
        let picked = select_outliers(&scores, params.threshold, params.cap_fraction);
        let cap = (params.cap_fraction * scores.len() as f64 - 1e-9).ceil() as usize;
        prop_assert!(picked.len() <= cap);
        let lowest_picked = picked.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        for (i, &s) in scores.iter().enumerate() {
            if picked.contains(&i) {
                prop_assert!(s > params.threshold);
            } else if s > params.threshold {
                // Left out only because the cap was reached by higher scores.
                prop_assert_eq!(picked.len(), cap);
                prop_assert!(s <= lowest_picked);
            }
        }
    }

    #[test]
    fn subgraph_grows_with_the_graph(
        types in prop::collection::vec(0usize..6, 3..10),
        raw in prop::collection::vec((0usize..10, 0usize..RIDS.len(), 0usize..10), 0..25),
        extra in (0usize..10, 0usize..RIDS.len(), 0usize..10),
        any_endpoint in any::<bool>(),
        ordered in any::<bool>(),
    ) {
        let doc = doc_with_types(&types);
        let n = types.len();
        let mut keys = BTreeSet::new();
        let mut kept = Vec::new();
        for (h, r, t) in raw.into_iter().chain(std::iter::once(extra)) {
            let (h, t) = (h % n, t % n);
            if h != t && keys.insert((h, r, t)) {
                kept.push(edge(&doc, h, RIDS[r], t));
            }
        }
        let params = SubgraphParams {
            shared: if any_endpoint { SharedEntityMode::AnyEndpoint } else { SharedEntityMode::Positional },
            type_match: if ordered { TypeMatchMode::Ordered } else { TypeMatchMode::Unordered },
            max_edges: None,
        };
        let missing = QueryPair::new(0, 1);
        let smaller = &kept[..kept.len().saturating_sub(1)];
        let key = |t: &Triplet| t.key().map(|(h, r, t)| (h, r.to_string(), t));
        let small = association_subgraph(&build_graph(smaller, &doc).unwrap(), missing, &doc, &params);
        let large = association_subgraph(&build_graph(&kept, &doc).unwrap(), missing, &doc, &params);
        let large_keys: BTreeSet<_> = large.triplets.iter().map(key).collect();
        for t in &small.triplets {
            prop_assert!(large_keys.contains(&key(t)));
        }
        prop_assert!(large.len() <= small.len() + 1);
    }

    #[test]
    fn micro_prf_swaps_precision_and_recall(pred in facts(), gold in facts()) {
        let a = micro_prf(&pred, &gold);
        let b = micro_prf(&gold, &pred);
        prop_assert_eq!(a.tp, b.tp);
        prop_assert!((a.precision - b.recall).abs() < 1e-12);
        prop_assert!((a.recall - b.precision).abs() < 1e-12);
        prop_assert!((a.f1 - b.f1).abs() < 1e-12);
    }

    #[test]
    fn macro_prf_ignores_document_and_entity_relabelling(pred in facts(), gold in facts(), shift in 1usize..50) {
        let registry = RelationRegistry::builtin();
        let relabel = |s: &BTreeSet<FactKey>| -> BTreeSet<FactKey> {
            s.iter().map(|(d, h, r, t)| (format!("{d}-x"), h + shift, r.clone(), t + shift)).collect()
        };
        let (a, rows_a) = macro_prf(&pred, &gold, &registry);
        let (b, rows_b) = macro_prf(&relabel(&pred), &relabel(&gold), &registry);
        prop_assert_eq!(a, b);
        prop_assert_eq!(rows_a, rows_b);
    }

    #[test]
    fn render_then_parse_is_identity(
        h in 0usize..8,
        off in 1usize..8,
        rid in 0usize..RIDS.len(),
        words in prop::collection::vec("[a-zA-Z0-9()|,.']{1,8}", 1..8),
        style in 0usize..3,
    ) {
        let registry = RelationRegistry::builtin();
        let doc = doc_with_types(&[0, 1, 2, 3, 4, 5, 0, 1]);
        let t = (h + off) % 8;
        prop_assume!(t != h);
        let mut original = edge(&doc, h, RIDS[rid], t);
        original.explanation = words.join(" ");
        let style = [RenderStyle::Pipe, RenderStyle::QuotedPipe, RenderStyle::BracketExpl][style];
        let line = render_triplet(&original, &registry, style);
        let report = parse_generation(&line, &doc, &Stage::GraphEnsemble, &registry);
        prop_assert_eq!(report.triplets.len(), 1, "{}", line);
        let back = &report.triplets[0];
        prop_assert_eq!(back.key(), original.key());
        prop_assert_eq!(&back.explanation, &original.explanation);
    }

    #[test]
    fn parser_accounts_for_every_line(text in "\\PC{0,200}") {
        let registry = RelationRegistry::builtin();
        let doc = doc_with_types(&[0, 2, 2]);
        let report = parse_generation(&text, &doc, &Stage::Decomposed { rid: "P17".into() }, &registry);
        prop_assert!(report.is_balanced());
    }

    #[test]
    fn whitespace_normalization_is_idempotent(text in "[ a-z\\t\\n]{0,80}") {
        let once = normalize_whitespace(&text);
        prop_assert_eq!(normalize_whitespace(&once), once.clone());
    }

    #[test]
    fn cache_key_tracks_request_content(prompt in "\\PC{0,60}", temp in 0.0f64..2.0, tokens in 1u32..4096) {
        let mut a = GenerationRequest::new("m", prompt.clone(), tokens);
        a.temperature = temp;
        let b = a.clone();
        prop_assert_eq!(cache_key(&a), cache_key(&b));
        let mut c = a.clone();
        c.max_new_tokens += 1;
        prop_assert_ne!(cache_key(&a), cache_key(&c));
        let mut d = a.clone();
        d.prompt_text.push('x');
        prop_assert_ne!(cache_key(&a), cache_key(&d));
    }

    #[test]
    fn vote_k_picks_distinct_indices(
        lists in prop::collection::vec(prop::collection::vec(0usize..30, 0..5), 1..30),
        pool in 0usize..40,
    ) {
        let n = lists.len();
        let knn: Vec<Vec<usize>> = lists
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let mut seen = BTreeSet::new();
                l.into_iter().map(|j| j % n).filter(|&j| j != i && seen.insert(j)).collect()
            })
            .collect();
        let picked = vote_k_select(&knn, pool);
        prop_assert_eq!(picked.len(), pool.min(n));
        let distinct: BTreeSet<_> = picked.iter().collect();
        prop_assert_eq!(distinct.len(), picked.len());
    }
}
