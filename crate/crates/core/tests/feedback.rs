use std::collections::BTreeMap;

use proptest::prelude::*;

use untangle::embed::{Embedding, TableEmbedder, TableEmbedderConfig, TableFallback};
use untangle::feedback::{apply_signposts, requeue_regions, InteractionRecord, Outcome, SignpostFlag, SignpostThresholds};
use untangle::pipeline::{KnowledgeObject, Provenance, SignpostKind, Usage};
use untangle::store::KnowledgeStore;

fn object(id: &str, doc: &str, span: (usize, usize), v: [f64; 2]) -> KnowledgeObject {
    KnowledgeObject {
        id: id.into(),
        primary_text: format!("h\n\n{id}"),
        raw_fragment: id.into(),
        header: "h".into(),
        metadata: BTreeMap::new(),
        provenance: Provenance {
            source_doc_id: doc.into(),
            span,
            sibling_ids: vec![],
            boundary_confidence: 1.0,
        },
        usage: Usage::default(),
        topic: None,
        vector: Embedding(v.to_vec()),
    }
}

fn record(ts: i64, ids: &[&str], outcome: Outcome) -> InteractionRecord {
    InteractionRecord {
        query_text: "q".into(),
        query_class: None,
        retrieved_ids: ids.iter().map(|s| s.to_string()).collect(),
        relevant: None,
        outcome,
        correct: None,
        timestamp: ts,
    }
}

fn embedder() -> TableEmbedder {
    TableEmbedder::new(TableEmbedderConfig {
        dim: 2,
        entries: [("q".to_string(), vec![0.0, 1.0])].into(),
        fallback: TableFallback::Error,
    })
    .unwrap()
}

fn kinds(flags: &[SignpostFlag]) -> Vec<(&str, SignpostKind)> {
    flags.iter().map(|f| (f.ko_id.as_str(), f.kind)).collect()
}

#[test]
fn threshold_arithmetic() {
    let mut store = KnowledgeStore::index(vec![
        object("low-success", "d", (1, 1), [1.0, 0.0]),
        object("conflicted", "d", (2, 2), [1.0, 0.0]),
        object("healthy", "d", (3, 3), [1.0, 0.0]),
    ])
    .unwrap();
    let mut log = Vec::new();
    for i in 0..25 {
        log.push(record(i, &["low-success"], if i < 10 { Outcome::Answered } else { Outcome::Unresolved }));
    }
    for i in 0..12 {
        log.push(record(100 + i, &["conflicted"], if i < 3 { Outcome::Hallucinated } else { Outcome::Answered }));
    }
    for i in 0..5 {
        log.push(record(200 + i, &["healthy"], Outcome::Answered));
    }
    let run = apply_signposts(&mut store, &log, &SignpostThresholds::new(0.9), &embedder()).unwrap();
    assert_eq!(
        kinds(&run.flags),
        [("low-success", SignpostKind::Structural), ("conflicted", SignpostKind::Conflict)]
    );
    assert_eq!(run.flags[0].window, (0, 204));
    let usage = &store.get("low-success").unwrap().usage;
    assert_eq!((usage.retrieval_count, usage.answered_count), (25, 10));
    assert_eq!(usage.signposts, [SignpostKind::Structural]);
}

#[test]
fn never_retrieved_near_miss_gets_a_header_flag() {
    let mut store = KnowledgeStore::index(vec![
        object("hit", "d", (1, 1), [1.0, 0.0]),
        object("near", "d", (2, 2), [0.0, 1.0]),
        object("far", "d", (3, 3), [1.0, 0.0]),
    ])
    .unwrap();
    let log = vec![record(1, &["hit"], Outcome::Answered)];
    let run = apply_signposts(&mut store, &log, &SignpostThresholds::new(0.8), &embedder()).unwrap();
    assert_eq!(kinds(&run.flags), [("near", SignpostKind::Header)]);
}

#[test]
fn unknown_ids_are_reported_not_fatal() {
    let mut store = KnowledgeStore::index(vec![object("a", "d", (1, 1), [1.0, 0.0])]).unwrap();
    let log = vec![record(1, &["a", "ghost"], Outcome::Answered)];
    let run = apply_signposts(&mut store, &log, &SignpostThresholds::new(0.99), &embedder()).unwrap();
    assert_eq!(run.unknown_ids, ["ghost"]);
    assert_eq!(store.get("a").unwrap().usage.retrieval_count, 1);
}

#[test]
fn queue_threshold_and_order() {
    let store = KnowledgeStore::index(vec![
        object("a1", "doc-b", (1, 2), [1.0, 0.0]),
        object("a2", "doc-b", (1, 2), [1.0, 0.0]),
        object("b1", "doc-a", (3, 4), [1.0, 0.0]),
        object("c1", "doc-c", (5, 5), [1.0, 0.0]),
    ])
    .unwrap();
    let flag = |id: &str, kind| SignpostFlag {
        ko_id: id.into(),
        kind,
        reason: String::new(),
        window: (0, 0),
    };
    let flags = vec![
        flag("b1", SignpostKind::Structural),
        flag("b1", SignpostKind::Header),
        flag("b1", SignpostKind::Conflict),
        flag("a1", SignpostKind::Structural),
        flag("a1", SignpostKind::Conflict),
        flag("a2", SignpostKind::Structural),
        flag("a2", SignpostKind::Header),
        flag("a2", SignpostKind::Conflict),
        flag("c1", SignpostKind::Structural),
        flag("c1", SignpostKind::Header),
    ];
    let queue = requeue_regions(&store, &flags, 3);
    let got: Vec<(&str, usize)> = queue.iter().map(|q| (q.source_doc_id.as_str(), q.flag_count)).collect();
    assert_eq!(got, [("doc-b", 5), ("doc-a", 3)]);
}

#[test]
fn requeued_region_is_clean_in_the_next_window() {
    let mut store = KnowledgeStore::index(vec![
        object("old", "doc-1", (1, 3), [1.0, 0.0]),
        object("other", "doc-1", (4, 4), [1.0, 0.0]),
    ])
    .unwrap();
    let first: Vec<InteractionRecord> = (0..25)
        .map(|i| {
            let outcome = match i {
                0..5 => Outcome::Answered,
                5..15 => Outcome::Hallucinated,
                _ => Outcome::Unresolved,
            };
            record(i, &["old"], outcome)
        })
        .collect();
    let t = SignpostThresholds::new(0.95);
    let run = apply_signposts(&mut store, &first, &t, &embedder()).unwrap();
    assert_eq!(run.flags.iter().filter(|f| f.ko_id == "old").count(), 2);
    let queue = requeue_regions(&store, &run.flags, 2);
    assert_eq!(queue.len(), 1);

    let removed = store
        .replace_source_region(
            &queue[0].source_doc_id,
            queue[0].span,
            vec![object("new", "doc-1", (1, 3), [1.0, 0.0])],
        )
        .unwrap();
    assert_eq!(removed, ["old"]);

    let second: Vec<InteractionRecord> = (100..125).map(|i| record(i, &["new"], Outcome::Answered)).collect();
    let run = apply_signposts(&mut store, &second, &t, &embedder()).unwrap();
    assert!(run.flags.iter().all(|f| f.ko_id != "new"), "{:?}", run.flags);
    assert!(requeue_regions(&store, &run.flags, 1).is_empty());
}

fn log_strategy() -> impl Strategy<Value = Vec<InteractionRecord>> {
    let ids = prop::sample::select(vec!["a", "b", "c", "d", "ghost"]);
    let outcome = prop::sample::select(vec![Outcome::Answered, Outcome::Hallucinated, Outcome::Unresolved]);
    prop::collection::vec((prop::collection::vec(ids, 0..4), outcome, 0i64..1000), 0..60)
        .prop_map(|rows| rows.into_iter().map(|(ids, o, ts)| record(ts, &ids, o)).collect())
}

fn small_store() -> KnowledgeStore {
    KnowledgeStore::index(
        ["a", "b", "c", "d"]
            .iter()
            .enumerate()
            .map(|(i, id)| object(id, "doc", (i + 1, i + 1), [1.0, i as f64]))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn counters_are_conserved_and_reingestion_is_idempotent(log in log_strategy()) {
        let mut store = small_store();
        let t = SignpostThresholds { r_min: 3, h_min: 2, ..SignpostThresholds::new(0.9) };
        let first = apply_signposts(&mut store, &log, &t, &embedder()).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        let known: u64 = log
            .iter()
            .filter(|r| seen.insert(r.fingerprint()))
            .map(|r| r.retrieved_ids.iter().filter(|id| id.as_str() != "ghost").count() as u64)
            .sum();
        let counted: u64 = store.iter().map(|k| k.usage.retrieval_count).sum();
        prop_assert_eq!(counted, known);

        let snapshot = store.clone();
        let again = apply_signposts(&mut store, &log, &t, &embedder()).unwrap();
        prop_assert_eq!(&again.flags, &first.flags);
        prop_assert_eq!(again.new_records, 0);
        prop_assert_eq!(store, snapshot);
    }
}
