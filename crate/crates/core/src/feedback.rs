//! Interaction-log monitoring: performance metrics, prompt classification,
//! signposting rules and the re-disentanglement queue.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{cosine_sim, Embedder, Embedding};
use crate::error::{Error, Result};
use crate::pipeline::{applicable_domains, DomainTaxonomy, SignpostKind};
use crate::store::KnowledgeStore;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Answered,
    Hallucinated,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub query_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_class: Option<String>,
    pub retrieved_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant: Option<Vec<bool>>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    pub timestamp: i64,
}

impl InteractionRecord {
    pub fn validate(&self) -> Result<()> {
        match &self.relevant {
            Some(r) if r.len() != self.retrieved_ids.len() => Err(Error::LengthMismatch {
                left: self.retrieved_ids.len(),
                right: r.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Content hash identifying the record across re-ingestion.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("record serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub retrieval_precision: Option<f64>,
    pub reasoning_accuracy: Option<f64>,
    pub hallucination_rate: Option<f64>,
    pub task_completion_rate: Option<f64>,
    pub record_count: usize,
}

/// The four monitoring metrics. A metric is `None` when no record carries
/// its inputs; records with relevance labels but nothing retrieved are left
/// out of the precision mean.
pub fn performance_report(log: &[InteractionRecord]) -> PerformanceReport {
    let n = log.len();
    let precisions: Vec<f64> = log
        .iter()
        .filter_map(|r| {
            let rel = r.relevant.as_ref()?;
            (!rel.is_empty()).then(|| rel.iter().filter(|x| **x).count() as f64 / rel.len() as f64)
        })
        .collect();
    let labeled: Vec<bool> = log.iter().filter_map(|r| r.correct).collect();
    let share = |count: usize, total: usize| (total > 0).then(|| count as f64 / total as f64);
    PerformanceReport {
        retrieval_precision: (!precisions.is_empty()).then(|| precisions.iter().sum::<f64>() / precisions.len() as f64),
        reasoning_accuracy: share(labeled.iter().filter(|c| **c).count(), labeled.len()),
        hallucination_rate: share(log.iter().filter(|r| r.outcome == Outcome::Hallucinated).count(), n),
        task_completion_rate: share(log.iter().filter(|r| r.outcome == Outcome::Answered).count(), n),
        record_count: n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Complexity {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Reasoning {
    Lookup,
    Compute,
    Compare,
}

impl fmt::Display for Reasoning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reasoning::Lookup => "LOOKUP",
            Reasoning::Compute => "COMPUTE",
            Reasoning::Compare => "COMPARE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptClass {
    pub topic: String,
    pub complexity: Complexity,
    /// Non-empty; `[Lookup]` unless compute or compare cues are present.
    pub reasoning: Vec<Reasoning>,
    pub domains: Vec<String>,
}

impl PromptClass {
    /// Reasoning types joined by `/`, e.g. `COMPUTE/COMPARE`.
    pub fn reasoning_label(&self) -> String {
        self.reasoning.iter().map(ToString::to_string).collect::<Vec<_>>().join("/")
    }
}

pub const UNKNOWN_TOPIC: &str = "UNKNOWN";
pub const LOW_COMPLEXITY_MAX_TOKENS: usize = 12;

pub trait PromptClassifier {
    fn classify(&self, query_text: &str) -> Result<PromptClass>;
}

/// Keyword rules over a domain taxonomy.
///
/// ```
/// use untangle::feedback::{KeywordClassifier, PromptClassifier};
/// use untangle::pipeline::{Domain, DomainTaxonomy};
///
/// let taxonomy = DomainTaxonomy::new(vec![
///     Domain::new("outpatient", "Outpatient", &["outpatient", "clinic", "visit"]),
/// ]).unwrap();
/// let c = KeywordClassifier::new(&taxonomy)
///     .classify("calculate my annual deductible versus plan B limits for outpatient surgical visits this year")
///     .unwrap();
/// assert_eq!(c.reasoning_label(), "COMPUTE/COMPARE");
/// assert_eq!(c.topic, "outpatient");
/// ```
pub struct KeywordClassifier<'a> {
    taxonomy: &'a DomainTaxonomy,
}

impl<'a> KeywordClassifier<'a> {
    pub fn new(taxonomy: &'a DomainTaxonomy) -> Self {
        KeywordClassifier { taxonomy }
    }
}

fn reasoning_of(tokens: &[String]) -> Vec<Reasoning> {
    let has = |w: &str| tokens.iter().any(|t| t == w);
    let how_much = tokens.windows(2).any(|w| w[0] == "how" && w[1] == "much");
    let mut out = Vec::new();
    if has("calculate") || has("compute") || how_much {
        out.push(Reasoning::Compute);
    }
    if has("versus") || has("compare") {
        out.push(Reasoning::Compare);
    }
    if out.is_empty() {
        out.push(Reasoning::Lookup);
    }
    out
}

impl PromptClassifier for KeywordClassifier<'_> {
    fn classify(&self, query_text: &str) -> Result<PromptClass> {
        let tokens = tokenize(query_text);
        let domains = if self.taxonomy.domains.is_empty() {
            Vec::new()
        } else {
            applicable_domains(query_text, None, self.taxonomy, None)?
        };
        Ok(PromptClass {
            topic: self
                .taxonomy
                .best_keyword_match(query_text)
                .map_or_else(|| UNKNOWN_TOPIC.to_string(), |d| d.id.clone()),
            complexity: if tokens.len() <= LOW_COMPLEXITY_MAX_TOKENS {
                Complexity::Low
            } else {
                Complexity::High
            },
            reasoning: reasoning_of(&tokens),
            domains,
        })
    }
}

pub fn classify_prompt(query_text: &str, classifier: &dyn PromptClassifier) -> Result<PromptClass> {
    classifier.classify(query_text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignpostThresholds {
    pub r_min: u64,
    pub success_floor: f64,
    pub h_rate: f64,
    pub h_min: u64,
    pub nearmiss_delta: f64,
    pub alpha: f64,
}

impl SignpostThresholds {
    pub fn new(alpha: f64) -> Self {
        SignpostThresholds {
            r_min: 20,
            success_floor: 0.5,
            h_rate: 0.2,
            h_min: 10,
            nearmiss_delta: 0.05,
            alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignpostFlag {
    pub ko_id: String,
    pub kind: SignpostKind,
    pub reason: String,
    pub window: (i64, i64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignpostRun {
    pub flags: Vec<SignpostFlag>,
    /// Retrieved ids missing from the store, sorted.
    pub unknown_ids: Vec<String>,
    /// Records applied to the store counters by this run.
    pub new_records: usize,
    pub skipped_records: usize,
}

#[derive(Default, Clone, Copy)]
struct WindowCounts {
    retrieved: u64,
    answered: u64,
    hallucinated: u64,
}

/// Ingests a log window.
///
/// Records already ingested (matched by fingerprint) leave the store
/// counters alone, so feeding the same log twice changes nothing. Flags are
/// computed from the counts of this window only:
///
/// * STRUCTURAL: retrieved at least `r_min` times and answered in fewer
///   than `success_floor` of them;
/// * HEADER: never retrieved, yet some logged query lands within
///   `nearmiss_delta` of `alpha`;
/// * CONFLICT: retrieved at least `h_min` times and hallucinated in more
///   than `h_rate` of them.
pub fn apply_signposts(
    store: &mut KnowledgeStore,
    log: &[InteractionRecord],
    thresholds: &SignpostThresholds,
    embedder: &dyn Embedder,
) -> Result<SignpostRun> {
    for r in log {
        r.validate()?;
    }
    let mut seen = BTreeSet::new();
    let records: Vec<(&InteractionRecord, String)> = log
        .iter()
        .map(|r| (r, r.fingerprint()))
        .filter(|(_, f)| seen.insert(f.clone()))
        .collect();
    let window = match (log.iter().map(|r| r.timestamp).min(), log.iter().map(|r| r.timestamp).max()) {
        (Some(a), Some(b)) => (a, b),
        _ => (0, 0),
    };

    let mut counts: HashMap<&str, WindowCounts> = HashMap::new();
    let mut unknown = BTreeSet::new();
    let mut run = SignpostRun::default();
    for (rec, fp) in &records {
        let fresh = !store.ingested().contains(fp);
        for id in &rec.retrieved_ids {
            if store.get(id).is_none() {
                unknown.insert(id.clone());
                continue;
            }
            let c = counts.entry(id.as_str()).or_default();
            c.retrieved += 1;
            c.answered += u64::from(rec.outcome == Outcome::Answered);
            c.hallucinated += u64::from(rec.outcome == Outcome::Hallucinated);
            if fresh {
                let ko = store.get_mut(id).expect("checked above");
                ko.usage.retrieval_count += 1;
                ko.usage.answered_count += u64::from(rec.outcome == Outcome::Answered);
                ko.usage.hallucination_count += u64::from(rec.outcome == Outcome::Hallucinated);
            }
        }
        if fresh {
            store.mark_ingested(fp.clone());
            run.new_records += 1;
        } else {
            run.skipped_records += 1;
        }
    }
    run.unknown_ids = unknown.into_iter().collect();

    let mut query_vectors: Vec<Embedding> = Vec::new();
    let mut seen_queries = BTreeSet::new();
    for (rec, _) in &records {
        if seen_queries.insert(rec.query_text.as_str()) {
            query_vectors.push(embedder.embed(&rec.query_text)?);
        }
    }

    let mut flags = Vec::new();
    for ko in store.iter() {
        let c = counts.get(ko.id.as_str()).copied().unwrap_or_default();
        let mut push = |kind, reason: String| {
            flags.push(SignpostFlag {
                ko_id: ko.id.clone(),
                kind,
                reason,
                window,
            })
        };
        if c.retrieved >= thresholds.r_min && (c.answered as f64) < thresholds.success_floor * c.retrieved as f64 {
            push(
                SignpostKind::Structural,
                format!("answered {} of {} retrievals", c.answered, c.retrieved),
            );
        }
        if c.retrieved == 0 && !query_vectors.is_empty() {
            let mut best = f64::NEG_INFINITY;
            for q in &query_vectors {
                match cosine_sim(q, &ko.vector) {
                    Ok(s) => best = best.max(s),
                    Err(Error::ZeroVector { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            if best >= thresholds.alpha - thresholds.nearmiss_delta {
                push(
                    SignpostKind::Header,
                    format!("never retrieved; nearest query similarity {best:.4}"),
                );
            }
        }
        if c.retrieved >= thresholds.h_min && (c.hallucinated as f64) > thresholds.h_rate * c.retrieved as f64 {
            push(
                SignpostKind::Conflict,
                format!("hallucinated in {} of {} retrievals", c.hallucinated, c.retrieved),
            );
        }
    }

    for f in &flags {
        let ko = store.get_mut(&f.ko_id).expect("flag from store");
        if !ko.usage.signposts.contains(&f.kind) {
            ko.usage.signposts.push(f.kind);
            ko.usage.signposts.sort();
        }
    }
    run.flags = flags;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueuedRegion {
    pub source_doc_id: String,
    pub span: (usize, usize),
    pub flag_count: usize,
}

/// Regions whose objects accumulated at least `queue_threshold` flags, most
/// flagged first, then by document id and span.
pub fn requeue_regions(store: &KnowledgeStore, flags: &[SignpostFlag], queue_threshold: usize) -> Vec<QueuedRegion> {
    let mut counts: BTreeMap<(String, (usize, usize)), usize> = BTreeMap::new();
    for f in flags {
        if let Some(ko) = store.get(&f.ko_id) {
            *counts
                .entry((ko.provenance.source_doc_id.clone(), ko.provenance.span))
                .or_insert(0) += 1;
        }
    }
    let mut queue: Vec<QueuedRegion> = counts
        .into_iter()
        .filter(|(_, n)| *n >= queue_threshold)
        .map(|((doc, span), n)| QueuedRegion {
            source_doc_id: doc,
            span,
            flag_count: n,
        })
        .collect();
    queue.sort_by(|a, b| {
        b.flag_count
            .cmp(&a.flag_count)
            .then_with(|| a.source_doc_id.cmp(&b.source_doc_id))
            .then(a.span.cmp(&b.span))
    });
    queue
}
