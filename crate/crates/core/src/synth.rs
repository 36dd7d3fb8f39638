//! Synthetic corpora with known topics, planted boundaries and a matching
//! anchor embedder.
//!
//! Generation is deterministic in the spec. Vocabulary words are built
//! from consonant-vowel syllables drawn from a ChaCha8 stream seeded with
//! `seed`; document `i` draws its topic order and segment words from a
//! ChaCha8 stream seeded with `splitmix64(seed ^ splitmix64(i + 1))`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibrate::DocAnnotation;
use crate::embed::{splitmix64, AnchorEmbedderConfig};
use crate::error::{Error, Result};
use crate::model::{DocType, Document, Segment, TopicLabel};
use crate::pipeline::{Domain, DomainTaxonomy};

const TOPIC_NAMES: [&str; 12] = [
    "eligibility",
    "billing",
    "pharmacy",
    "scheduling",
    "claims",
    "referrals",
    "coverage",
    "appeals",
    "enrollment",
    "privacy",
    "telehealth",
    "credentialing",
];

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub num_docs: usize,
    pub topics: usize,
    pub segments_per_doc: usize,
    pub run_length: usize,
    pub cross_anchor_sim: f64,
    pub noise_scale: f64,
    pub dim: usize,
    pub seed: u64,
    pub tokens_per_segment: usize,
    /// Words per topic pool.
    pub vocab_size: usize,
    /// Share of each pool made of words common to all topics.
    pub vocab_overlap: f64,
    /// Explicit pools; generated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<BTreeMap<TopicLabel, Vec<String>>>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            num_docs: 30,
            topics: 3,
            segments_per_doc: 24,
            run_length: 3,
            cross_anchor_sim: 0.5,
            noise_scale: 0.1,
            dim: 16,
            seed: 7,
            tokens_per_segment: 12,
            vocab_size: 24,
            vocab_overlap: 0.0,
            vocab: None,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.topics == 0 {
            return bad("at least one topic is required".into());
        }
        if self.run_length == 0 {
            return bad("run_length must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.cross_anchor_sim) {
            return bad(format!("cross_anchor_sim {} outside [0, 1)", self.cross_anchor_sim));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale {} must be >= 0", self.noise_scale));
        }
        if self.tokens_per_segment == 0 || self.segments_per_doc == 0 {
            return bad("segments and tokens per segment must be positive".into());
        }
        if !(0.0..1.0).contains(&self.vocab_overlap) {
            return bad(format!("vocab_overlap {} outside [0, 1)", self.vocab_overlap));
        }
        match &self.vocab {
            Some(v) if v.len() != self.topics || v.values().any(Vec::is_empty) => {
                bad(format!("vocab must give a non-empty pool for each of the {} topics", self.topics))
            }
            None if self.vocab_size == 0 => bad("vocab_size must be positive".into()),
            _ => Ok(()),
        }
    }

    pub fn topic_labels(&self) -> Vec<TopicLabel> {
        if let Some(v) = &self.vocab {
            return v.keys().cloned().collect();
        }
        (0..self.topics)
            .map(|i| match TOPIC_NAMES.get(i) {
                Some(name) => TopicLabel::from(*name),
                None => TopicLabel(format!("topic-{i}")),
            })
            .collect()
    }

    /// Per-topic word pools, in topic order.
    pub fn vocabulary(&self) -> BTreeMap<TopicLabel, Vec<String>> {
        if let Some(v) = &self.vocab {
            return v.clone();
        }
        let labels = self.topic_labels();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed));
        let mut taken: BTreeSet<String> = labels.iter().map(|l| l.0.clone()).collect();
        let mut word = |rng: &mut ChaCha8Rng| loop {
            let syllables = rng.random_range(2..=3);
            let w: String = (0..syllables)
                .map(|_| {
                    format!(
                        "{}{}",
                        ONSETS[rng.random_range(0..ONSETS.len())],
                        VOWELS[rng.random_range(0..VOWELS.len())]
                    )
                })
                .collect();
            if taken.insert(w.clone()) {
                return w;
            }
        };
        let shared_n = (self.vocab_overlap * self.vocab_size as f64).round() as usize;
        let shared: Vec<String> = (0..shared_n).map(|_| word(&mut rng)).collect();
        labels
            .into_iter()
            .map(|l| {
                let mut pool: Vec<String> = (shared_n..self.vocab_size).map(|_| word(&mut rng)).collect();
                pool.extend(shared.iter().cloned());
                (l, pool)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub text: String,
    pub topic: TopicLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub documents: Vec<Document>,
    pub annotations: Vec<DocAnnotation>,
    pub embedder: AnchorEmbedderConfig,
    /// One domain per topic, keyed by the topic's own words.
    pub taxonomy: DomainTaxonomy,
    pub vocabulary: BTreeMap<TopicLabel, Vec<String>>,
}

impl SyntheticCorpus {
    /// `n` queries, each made of `words` draws from one topic's words that
    /// no other topic uses.
    pub fn queries(&self, n: usize, words: usize, seed: u64) -> Vec<LabeledQuery> {
        let exclusive = exclusive_words(&self.vocabulary);
        let topics: Vec<&TopicLabel> = exclusive.keys().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5155_4552_5953));
        (0..n)
            .map(|_| {
                let topic = topics[rng.random_range(0..topics.len())];
                let pool = &exclusive[topic];
                let text = (0..words.max(1))
                    .map(|_| pool[rng.random_range(0..pool.len())].as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                LabeledQuery {
                    text,
                    topic: topic.clone(),
                }
            })
            .collect()
    }
}

fn exclusive_words(vocab: &BTreeMap<TopicLabel, Vec<String>>) -> BTreeMap<TopicLabel, Vec<String>> {
    let mut owners: BTreeMap<&str, usize> = BTreeMap::new();
    for pool in vocab.values() {
        for w in pool.iter().collect::<BTreeSet<_>>() {
            *owners.entry(w.as_str()).or_insert(0) += 1;
        }
    }
    vocab
        .iter()
        .map(|(t, pool)| {
            let own: Vec<String> = pool.iter().filter(|w| owners[w.as_str()] == 1).cloned().collect();
            (t.clone(), if own.is_empty() { pool.clone() } else { own })
        })
        .collect()
}

fn title_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Builds the corpus, its planted-boundary annotations (two identical
/// annotators), the anchor embedder and a keyword taxonomy.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let labels = spec.topic_labels();
    let vocabulary = spec.vocabulary();

    let mut lexicon: BTreeMap<String, Vec<TopicLabel>> = BTreeMap::new();
    for (topic, pool) in &vocabulary {
        for w in pool.iter().collect::<BTreeSet<_>>() {
            lexicon.entry(w.to_lowercase()).or_default().push(topic.clone());
        }
        lexicon.entry(topic.0.to_lowercase()).or_default().push(topic.clone());
    }
    for topics in lexicon.values_mut() {
        topics.sort();
        topics.dedup();
    }
    let embedder = AnchorEmbedderConfig::planted(&labels, spec.dim, spec.cross_anchor_sim, spec.noise_scale, spec.seed)
        .map_err(|e| Error::InvalidSpec(e.to_string()))?
        .with_lexicon(lexicon)?;

    let mut documents = Vec::with_capacity(spec.num_docs);
    let mut annotations = Vec::with_capacity(spec.num_docs);
    let doc_types = &DocType::ALL[..4];
    for i in 0..spec.num_docs {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ splitmix64(i as u64 + 1)));
        let mut order = labels.clone();
        order.shuffle(&mut rng);
        let id = format!("doc-{i:04}");
        let mut segments = Vec::with_capacity(spec.segments_per_doc);
        let mut planted = Vec::new();
        for s in 0..spec.segments_per_doc {
            let topic = &order[(s / spec.run_length) % order.len()];
            let pool = &vocabulary[topic];
            let text = (0..spec.tokens_per_segment)
                .map(|_| pool[rng.random_range(0..pool.len())].as_str())
                .collect::<Vec<_>>()
                .join(" ");
            if s > 0 && segments.last().is_some_and(|p: &Segment| p.topic.as_ref() != Some(topic)) {
                planted.push(s);
            }
            segments.push(Segment::new(&id, s, text, Some(topic.as_str())));
        }
        let mut doc = Document::from_segments(&id, &format!("Synthetic document {i}"), doc_types[i % doc_types.len()], []);
        doc.segments = segments;
        let doc = doc
            .with_metadata("domain", "general")
            .with_metadata("geographic", "US")
            .with_metadata("persona", "agent")
            .with_metadata("temporal", "2024");
        annotations.push(DocAnnotation {
            doc_id: id,
            annotators: vec![planted.clone(), planted],
        });
        documents.push(doc);
    }

    let exclusive = exclusive_words(&vocabulary);
    let taxonomy = DomainTaxonomy::new(
        labels
            .iter()
            .map(|l| {
                let words: Vec<&str> = exclusive[l].iter().map(String::as_str).collect();
                Domain::new(l.as_str(), &title_case(l.as_str()), &words)
            })
            .collect(),
    )?;

    Ok(SyntheticCorpus {
        documents,
        annotations,
        embedder,
        taxonomy,
        vocabulary,
    })
}
