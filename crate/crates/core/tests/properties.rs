use std::collections::BTreeMap;

use proptest::prelude::*;

use untangle::calibrate::DocAnnotation;
use untangle::embed::{cosine_sim, AnchorEmbedder, AnchorEmbedderConfig, Embedder, Embedding};
use untangle::metrics::{
    bootstrap_ci, boundary_f1, cohen_kappa, entanglement_index, rank_by_similarity, topk_precision,
};
use untangle::model::{read_corpus_from, validate_document, write_corpus, DocType, Document, TopicLabel};
use untangle::pipeline::{AnchorAwareGenerator, HeaderGenerator};
use untangle::segment::{detect_boundaries, recursive_segment, similarity_profile, SimilarityProfile};
use untangle::text::{token_count, tokenize};

fn unit(v: Vec<f64>) -> Option<Embedding> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-6).then(|| Embedding(v.into_iter().map(|x| x / n).collect()))
}

fn vectors(n: usize, d: usize) -> impl Strategy<Value = Vec<Embedding>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
        .prop_filter_map("zero vector", |vs| vs.into_iter().map(unit).collect())
}

fn instance() -> impl Strategy<Value = (Vec<TopicLabel>, Vec<Embedding>)> {
    (1usize..=12, 1usize..=4, 2usize..=8).prop_flat_map(|(n, k, d)| {
        (
            prop::collection::vec((0..k).prop_map(|t| TopicLabel(format!("t{t}"))), n),
            vectors(n, d),
        )
    })
}

fn gap_set(n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(1..n.max(2), 0..n).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #[test]
    fn ei_matches_pairwise_enumeration((topics, vs) in instance(), alpha in 0.0f64..0.99) {
        let report = entanglement_index(&topics, &vs, alpha).unwrap();
        let mut cross = 0usize;
        let mut hit = 0usize;
        for i in 0..vs.len() {
            for j in (i + 1)..vs.len() {
                if topics[i] != topics[j] {
                    cross += 1;
                    let dot: f64 = vs[i].0.iter().zip(&vs[j].0).map(|(a, b)| a * b).sum();
                    let s = dot / (vs[i].norm() * vs[j].norm());
                    hit += usize::from(s.clamp(-1.0, 1.0) > alpha);
                }
            }
        }
        prop_assert_eq!(report.cross_topic_pair_count, cross);
        prop_assert_eq!(report.entangled_pair_count, hit);
        prop_assert_eq!(report.pure, cross == 0);
        prop_assert!(report.ei >= 0.0 && report.ei <= 1.0);
    }

    #[test]
    fn ei_is_non_increasing_in_alpha((topics, vs) in instance(), a in 0.0f64..0.99, b in 0.0f64..0.99) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let e_lo = entanglement_index(&topics, &vs, lo).unwrap().ei;
        let e_hi = entanglement_index(&topics, &vs, hi).unwrap().ei;
        prop_assert!(e_lo >= e_hi);
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant(
        (v, w) in (2usize..8).prop_flat_map(|d| (vectors(1, d), vectors(1, d))),
        c in 0.01f64..100.0,
    ) {
        let (v, w) = (&v[0], &w[0]);
        let s = cosine_sim(v, w).unwrap();
        prop_assert_eq!(s, cosine_sim(w, v).unwrap());
        let scaled = Embedding(v.0.iter().map(|x| x * c).collect());
        prop_assert!((cosine_sim(&scaled, w).unwrap() - s).abs() <= 1e-12);
    }

    #[test]
    fn topk_precision_matches_full_sort(
        (topics, vs, q) in (1usize..=50, 2usize..6).prop_flat_map(|(n, d)| (
            prop::collection::vec((0..3usize).prop_map(|t| TopicLabel(format!("t{t}"))), n),
            vectors(n, d),
            vectors(1, d),
        )),
        k in 1usize..60,
    ) {
        let relevant = TopicLabel::from("t0");
        let got = topk_precision(&q[0], &relevant, &topics, &vs, k).unwrap();
        let mut order: Vec<(usize, f64)> = vs.iter().enumerate().map(|(i, v)| (i, cosine_sim(&q[0], v).unwrap())).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        prop_assert_eq!(&rank_by_similarity(&q[0], &vs).unwrap(), &order);
        let hits = order.iter().take(k).filter(|(i, _)| topics[*i] == relevant).count();
        prop_assert_eq!(got, hits as f64 / k as f64);
    }

    #[test]
    fn boundary_f1_is_symmetric((n, a, b) in (2usize..30).prop_flat_map(|n| (Just(n), gap_set(n), gap_set(n)))) {
        let ab = boundary_f1(&a, &b, n).unwrap();
        let ba = boundary_f1(&b, &a, n).unwrap();
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.recall, ba.precision);
        prop_assert_eq!(ab.f1, ba.f1);
    }

    #[test]
    fn kappa_of_identical_raters_is_one(x in prop::collection::vec(any::<bool>(), 2..40)) {
        prop_assume!(x.iter().any(|b| *b) && x.iter().any(|b| !*b));
        prop_assert_eq!(cohen_kappa(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn bootstrap_is_reproducible(values in prop::collection::vec(-10.0f64..10.0, 1..40), seed in any::<u64>()) {
        let a = bootstrap_ci(&values, 0.95, 200, seed).unwrap();
        let b = bootstrap_ci(&values, 0.95, 200, seed).unwrap();
        prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
        prop_assert!(a.0 <= a.1);
    }

    #[test]
    fn boundaries_grow_with_theta(profile in prop::collection::vec(-1.0f64..1.0, 0..30), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p = SimilarityProfile(profile);
        let small = detect_boundaries(&p, lo).unwrap();
        let large = detect_boundaries(&p, hi).unwrap();
        prop_assert!(small.gaps().iter().all(|g| large.contains(*g)));
    }

    #[test]
    fn fragments_tile_the_document(
        (words, vs) in (1usize..25, 2usize..6).prop_flat_map(|(n, d)| (
            prop::collection::vec(1usize..40, n),
            vectors(n, d),
        )),
        theta in 0.05f64..0.95,
        l_min in 1usize..60,
    ) {
        let texts: Vec<String> = words.iter().map(|w| vec!["w"; *w].join(" ")).collect();
        let doc = Document::from_segments("d", "t", DocType::Reference, texts.iter().map(|t| (t.as_str(), None)));
        let frags = recursive_segment(&doc, &vs, theta, l_min).unwrap();
        let mut next = 1;
        for f in &frags {
            prop_assert_eq!(f.start, next);
            prop_assert!(f.start <= f.end);
            prop_assert!(f.depth <= doc.len());
            let tokens: usize = doc.segments[f.segment_indices()].iter().map(|s| s.token_count).sum();
            prop_assert_eq!(f.token_count, tokens);
            next = f.end + 1;
        }
        prop_assert_eq!(next, doc.len() + 1);
        let top = detect_boundaries(&similarity_profile(&vs).unwrap(), theta).unwrap();
        for g in top.gaps() {
            prop_assert!(frags.iter().any(|f| f.end == *g));
        }
    }

    #[test]
    fn tokenizer_counts_agree(text in "[a-zA-Z0-9 ,.;'é\\-]{0,80}") {
        let t = tokenize(&text);
        prop_assert_eq!(t.len(), token_count(&text));
        prop_assert_eq!(t, tokenize(&text));
    }

    #[test]
    fn corpus_round_trip_and_validation(
        segs in prop::collection::vec(("[a-z]{1,8}( [a-z]{1,8}){0,6}", prop::option::of("[xyz]")), 1..10),
        meta in prop::collection::btree_map("[a-z]{1,6}", "[ -~]{0,10}", 0..4),
    ) {
        let mut doc = Document::from_segments("d-1", "Title", DocType::Procedural, segs.iter().map(|(t, l)| (t.as_str(), l.as_deref())));
        doc.metadata = meta;
        let validated = validate_document(doc.clone()).unwrap();
        prop_assert_eq!(&validated, &doc);
        prop_assert_eq!(validate_document(validated.clone()).unwrap(), validated);
        let mut buf = Vec::new();
        write_corpus(&mut buf, std::slice::from_ref(&doc)).unwrap();
        let back = read_corpus_from(&buf[..], std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, vec![doc]);
    }

    #[test]
    fn consensus_needs_a_strict_majority(marks in prop::collection::vec(prop::collection::btree_set(1usize..10, 0..9), 2..6)) {
        let ann = DocAnnotation {
            doc_id: "d".into(),
            annotators: marks.iter().map(|s| s.iter().copied().collect()).collect(),
        };
        let consensus = ann.consensus();
        for g in 1..10 {
            let votes = marks.iter().filter(|s| s.contains(&g)).count();
            prop_assert_eq!(consensus.contains(g), 2 * votes > marks.len());
        }
    }
}

fn planted(mu: f64, sigma: f64) -> (AnchorEmbedderConfig, Vec<Vec<String>>) {
    let topics: Vec<TopicLabel> = ["alpha", "beta", "gamma"].into_iter().map(TopicLabel::from).collect();
    let words: Vec<Vec<String>> = (0..3)
        .map(|t| (0..6).map(|w| format!("w{t}x{w}")).collect())
        .collect();
    let mut lexicon = BTreeMap::new();
    for (t, ws) in topics.iter().zip(&words) {
        lexicon.insert(t.0.clone(), vec![t.clone()]);
        for w in ws {
            lexicon.insert(w.clone(), vec![t.clone()]);
        }
    }
    let cfg = AnchorEmbedderConfig::planted(&topics, 8, mu, sigma, 3)
        .unwrap()
        .with_lexicon(lexicon)
        .unwrap();
    (cfg, words)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn planted_geometry(mu in 0.0f64..0.95, a in prop::collection::vec(0usize..6, 1..8), b in prop::collection::vec(0usize..6, 1..8)) {
        let (cfg, words) = planted(mu, 0.0);
        let emb = AnchorEmbedder::new(cfg).unwrap();
        let text = |t: usize, ix: &[usize]| ix.iter().map(|i| words[t][*i].as_str()).collect::<Vec<_>>().join(" ");
        let same = cosine_sim(&emb.embed(&text(0, &a)).unwrap(), &emb.embed(&text(0, &b)).unwrap()).unwrap();
        let cross = cosine_sim(&emb.embed(&text(0, &a)).unwrap(), &emb.embed(&text(1, &b)).unwrap()).unwrap();
        prop_assert!((same - 1.0).abs() <= 1e-9);
        prop_assert!((cross - mu).abs() <= 1e-9);
        prop_assert_eq!(emb.embed(&text(2, &a)).unwrap(), emb.embed(&text(2, &a)).unwrap());
    }

    #[test]
    fn anchor_aware_headers_pull_same_topic_fragments_together(
        mu in 0.1f64..0.9,
        major in 0usize..3,
        minors in prop::collection::vec((1usize..3, 0usize..6), 2),
        reps in 3usize..6,
        seed_words in prop::collection::vec(0usize..6, 2),
    ) {
        let (cfg, words) = planted(mu, 0.0);
        let emb = AnchorEmbedder::new(cfg.clone()).unwrap();
        let gen = AnchorAwareGenerator::new(&cfg);
        let parent = Document::from_segments("d", "Plan Guide", DocType::Reference, [("x", None)]);
        // Each fragment repeats majority-topic words and carries one word of another topic.
        let frags: Vec<String> = minors
            .iter()
            .zip(&seed_words)
            .map(|((off, w), s)| {
                let mut toks = vec![words[major][*s].clone(); reps];
                toks.push(words[major][(*s + 1) % 6].clone());
                toks.push(words[(major + off) % 3][*w].clone());
                toks.join(" ")
            })
            .collect();
        let before = cosine_sim(&emb.embed(&frags[0]).unwrap(), &emb.embed(&frags[1]).unwrap()).unwrap();
        let with_header = |f: &str| format!("{}\n\n{f}", gen.generate(f, &parent, &[]).unwrap());
        let after = cosine_sim(
            &emb.embed(&with_header(&frags[0])).unwrap(),
            &emb.embed(&with_header(&frags[1])).unwrap(),
        ).unwrap();
        prop_assert!(after >= before - 1e-12, "before {before}, after {after}");
    }
}
