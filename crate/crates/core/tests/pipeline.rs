use untangle::embed::{embed_segments, AnchorEmbedder, Embedding};
use untangle::pipeline::{
    disentangle_corpus, disentangle_document, faithfulness_check, AnchorAwareGenerator, BaselineChunking,
    ContextProfile, DisentangleConfig, DisentanglementOutcome, ExampleQuery, PipelineContext, TemplateGenerator,
};
use untangle::synth::{generate_corpus, CorpusSpec, SyntheticCorpus};
use untangle::text::{bag_contains, token_bag};

fn entangled(seed: u64) -> (SyntheticCorpus, AnchorEmbedder, Vec<Vec<Embedding>>) {
    let corpus = generate_corpus(&CorpusSpec {
        num_docs: 12,
        topics: 4,
        segments_per_doc: 16,
        run_length: 2,
        cross_anchor_sim: 0.85,
        noise_scale: 0.05,
        dim: 12,
        seed,
        ..Default::default()
    })
    .unwrap();
    let emb = AnchorEmbedder::new(corpus.embedder.clone()).unwrap();
    let vectors = corpus.documents.iter().map(|d| embed_segments(d, &emb).unwrap()).collect();
    (corpus, emb, vectors)
}

fn config() -> DisentangleConfig {
    let mut cfg = DisentangleConfig::new(0.9, 0.86);
    cfg.baseline = BaselineChunking {
        window_tokens: 64,
        overlap_tokens: 8,
    };
    cfg
}

fn run(corpus: &SyntheticCorpus, emb: &AnchorEmbedder, vectors: &[Vec<Embedding>]) -> Vec<DisentanglementOutcome> {
    let gen = AnchorAwareGenerator::new(&corpus.embedder);
    let ctx = PipelineContext {
        embedder: emb,
        generator: &gen,
        taxonomy: Some(&corpus.taxonomy),
    };
    disentangle_corpus(&corpus.documents, vectors, &ContextProfile::default(), &config(), &ctx).unwrap()
}

#[test]
fn entanglement_strictly_drops_on_every_entangled_document() {
    let mut checked = 0;
    for seed in [1, 2, 3] {
        let (corpus, emb, vectors) = entangled(seed);
        for out in run(&corpus, &emb, &vectors) {
            let before = out.ei_before.unwrap();
            let after = out.ei_after.unwrap();
            if before > 0.0 {
                assert!(after < before, "{}: {before} -> {after}", out.doc_id);
                checked += 1;
            }
        }
    }
    assert!(checked >= 30, "only {checked} entangled documents");
}

#[test]
fn every_run_is_faithful_and_never_loses_fragments() {
    let (corpus, emb, vectors) = entangled(4);
    for (out, doc) in run(&corpus, &emb, &vectors).iter().zip(&corpus.documents) {
        assert!(out.faithful);
        assert!(faithfulness_check(doc, &out.knowledge_objects));
        assert!(out.knowledge_objects.len() >= out.fragment_count);
        assert_eq!(out.complete, out.ei_after.unwrap() <= config().beta);
        for ko in &out.knowledge_objects {
            assert!(bag_contains(&token_bag(&ko.primary_text), &token_bag(&ko.raw_fragment)));
            for sib in &ko.provenance.sibling_ids {
                let other = out.knowledge_objects.iter().find(|k| &k.id == sib).unwrap();
                assert!(other.provenance.sibling_ids.contains(&ko.id));
            }
        }
    }
}

#[test]
fn identical_inputs_give_identical_objects() {
    let (corpus, emb, vectors) = entangled(5);
    let a = run(&corpus, &emb, &vectors);
    let b = run(&corpus, &emb, &vectors);
    assert_eq!(a, b);
    let bits = |outs: &[DisentanglementOutcome]| -> Vec<u64> {
        outs.iter()
            .flat_map(|o| o.knowledge_objects.iter().flat_map(|k| k.vector.0.iter().map(|x| x.to_bits())))
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
    let ids: Vec<&str> = a.iter().flat_map(|o| o.knowledge_objects.iter().map(|k| k.id.as_str())).collect();
    let unique: std::collections::BTreeSet<&str> = ids.iter().copied().collect();
    assert_eq!(ids.len(), unique.len());
}

#[test]
fn selection_takes_the_lowest_objective_candidate() {
    let (corpus, emb, vectors) = entangled(6);
    let psi = ContextProfile {
        dependency_groups: vec![vec![0, 1, 2, 3]],
        example_queries: vec![ExampleQuery {
            text: corpus.vocabulary.values().next().unwrap()[0].clone(),
            tag: Some("lookup".into()),
        }],
        ..Default::default()
    };
    let ctx = PipelineContext {
        embedder: &emb,
        generator: &TemplateGenerator,
        taxonomy: Some(&corpus.taxonomy),
    };
    let thetas = [0.5, 0.8, 0.88, 0.9, 0.92];
    for (doc, v) in corpus.documents.iter().zip(&vectors) {
        let mut cfg = config();
        cfg.candidate_thetas = Some(thetas.to_vec());
        let chosen = disentangle_document(doc, v, &psi, &cfg, &ctx).unwrap();
        let singles: Vec<DisentanglementOutcome> = thetas
            .iter()
            .map(|t| {
                cfg.candidate_thetas = Some(vec![*t]);
                disentangle_document(doc, v, &psi, &cfg, &ctx).unwrap()
            })
            .collect();
        let best = singles.iter().map(|o| o.objective_value).fold(f64::INFINITY, f64::min);
        assert_eq!(chosen.objective_value, best);
        assert!(singles.iter().any(|o| o == &chosen));
        assert!((0.0..=3.0).contains(&chosen.loss.total));
    }
}

#[test]
fn unlabeled_documents_are_never_complete() {
    let (mut corpus, emb, vectors) = entangled(7);
    for doc in &mut corpus.documents {
        for seg in &mut doc.segments {
            seg.topic = None;
        }
    }
    for out in run(&corpus, &emb, &vectors) {
        assert_eq!(out.ei_before, None);
        assert_eq!(out.ei_after, None);
        assert!(!out.complete);
        assert!(out.faithful);
    }
}
