//! Stages B to D and end-to-end document disentanglement.
//!
//! For each candidate `theta` a document is segmented (Stage A), each
//! fragment gets a context header (B), fragments applicable to several
//! domains are cloned (C), and every piece becomes a [`KnowledgeObject`]
//! (D). The candidate minimizing `EI + lambda * loss` wins.

mod baseline;
mod domains;
mod header;
mod knowledge;
mod objective;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, Embedding};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::entanglement_index;
use crate::model::{DocType, Document, TopicLabel};
use crate::segment::{check_theta, recursive_segment, Fragment};
use crate::text::token_set;

pub use baseline::{baseline_chunks, BaselineChunk, BaselineChunking};
pub use domains::{applicable_domains, listed_domains, Domain, DomainTaxonomy};
pub use header::{
    synthesize_header, top_tokens, AnchorAwareGenerator, HeaderGenerator, TemplateGenerator, HEADER_SEPARATOR,
};
pub use knowledge::{
    assemble_knowledge_object, clone_for_domains, faithfulness_check, knowledge_object_id, object_metadata,
    DomainClone, KnowledgeObject, Provenance, SignpostKind, Usage, METADATA_KEYS,
};
pub use objective::{context_loss, LossBreakdown, LossWeights};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleQuery {
    pub text: String,
    /// Expected topic or domain tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegionUsage {
    pub retrieval_count: u64,
    pub failure_count: u64,
}

fn default_lambda() -> f64 {
    1.0
}

/// Operational context a document is restructured for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextProfile {
    #[serde(default)]
    pub functional_class: DocType,
    /// Keyed by region, e.g. `"doc#3-5"`. Informational.
    #[serde(default)]
    pub usage_stats: BTreeMap<String, RegionUsage>,
    #[serde(default)]
    pub example_queries: Vec<ExampleQuery>,
    #[serde(default)]
    pub prompt_terms: BTreeMap<String, f64>,
    /// 0-based segment indices that must stay together.
    #[serde(default)]
    pub dependency_groups: Vec<Vec<usize>>,
    /// 1-based inclusive segment spans that should stand alone.
    #[serde(default)]
    pub signposted_regions: Vec<(usize, usize)>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

impl Default for ContextProfile {
    fn default() -> Self {
        ContextProfile {
            functional_class: DocType::default(),
            usage_stats: BTreeMap::new(),
            example_queries: Vec::new(),
            prompt_terms: BTreeMap::new(),
            dependency_groups: Vec::new(),
            signposted_regions: Vec::new(),
            lambda: default_lambda(),
        }
    }
}

impl ContextProfile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        io::read_json(path)
    }

    /// Checks `lambda` and that every index and span fits a document of
    /// `n_segments` segments.
    pub fn validate_for(&self, n_segments: usize) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda {} must be >= 0", self.lambda)));
        }
        for group in &self.dependency_groups {
            if let Some(bad) = group.iter().find(|&&s| s >= n_segments) {
                return Err(Error::InvalidConfig(format!(
                    "dependency group index {bad} outside a {n_segments}-segment document"
                )));
            }
        }
        for &(s, e) in &self.signposted_regions {
            if s == 0 || s > e || e > n_segments {
                return Err(Error::InvalidConfig(format!(
                    "signposted region ({s}, {e}) outside a {n_segments}-segment document"
                )));
            }
        }
        Ok(())
    }
}

/// Most frequent label; ties go to the label seen first.
pub fn majority_topic(topics: &[TopicLabel]) -> Option<TopicLabel> {
    let mut counts: Vec<(&TopicLabel, usize)> = Vec::new();
    for t in topics {
        match counts.iter_mut().find(|(l, _)| *l == t) {
            Some(c) => c.1 += 1,
            None => counts.push((t, 1)),
        }
    }
    let mut best: Option<(&TopicLabel, usize)> = None;
    for (t, c) in counts {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((t, c));
        }
    }
    best.map(|(t, _)| t.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisentangleConfig {
    pub theta: f64,
    pub l_min: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Defaults to `theta - 0.04`, `theta`, `theta + 0.04`, kept inside (0, 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_thetas: Option<Vec<f64>>,
    #[serde(default)]
    pub baseline: BaselineChunking,
    #[serde(default)]
    pub loss_weights: LossWeights,
}

impl DisentangleConfig {
    pub fn new(theta: f64, alpha: f64) -> Self {
        DisentangleConfig {
            theta,
            l_min: 100,
            alpha,
            beta: 0.20,
            candidate_thetas: None,
            baseline: BaselineChunking::default(),
            loss_weights: LossWeights::default(),
        }
    }

    pub fn candidates(&self) -> Result<Vec<f64>> {
        check_theta(self.theta)?;
        let raw = match &self.candidate_thetas {
            Some(list) if !list.is_empty() => list.clone(),
            Some(_) => return Err(Error::InvalidConfig("candidate theta list is empty".into())),
            None => vec![self.theta - 0.04, self.theta, self.theta + 0.04],
        };
        let mut out: Vec<f64> = raw
            .into_iter()
            .map(|t| (t * 1e12).round() / 1e12)
            .filter(|t| *t > 0.0 && *t < 1.0)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        if out.is_empty() {
            return Err(Error::ThetaOutOfRange(self.theta));
        }
        Ok(out)
    }
}

/// Collaborators shared by every document of a run.
#[derive(Clone, Copy)]
pub struct PipelineContext<'a> {
    pub embedder: &'a dyn Embedder,
    pub generator: &'a dyn HeaderGenerator,
    pub taxonomy: Option<&'a DomainTaxonomy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementOutcome {
    pub doc_id: String,
    pub theta: f64,
    pub fragment_count: usize,
    pub knowledge_objects: Vec<KnowledgeObject>,
    /// EI of the document under fixed-window chunking; `None` when the
    /// document has no topic labels.
    pub ei_before: Option<f64>,
    /// EI over the knowledge objects' vectors.
    pub ei_after: Option<f64>,
    pub complete: bool,
    pub faithful: bool,
    pub objective_value: f64,
    pub loss: LossBreakdown,
}

/// EI of the document as a fixed-window chunker would index it.
pub fn baseline_ei(doc: &Document, embedder: &dyn Embedder, cfg: &BaselineChunking, alpha: f64) -> Result<Option<f64>> {
    if doc.topics().is_none() {
        return Ok(None);
    }
    let chunks = baseline_chunks(doc, cfg)?;
    let topics: Vec<TopicLabel> = chunks.iter().filter_map(|c| c.topic.clone()).collect();
    let vectors = chunks
        .iter()
        .map(|c| embedder.embed(&c.text))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(entanglement_index(&topics, &vectors, alpha)?.ei))
}

struct Candidate {
    theta: f64,
    fragments: usize,
    objects: Vec<KnowledgeObject>,
    ei_after: Option<f64>,
    loss: LossBreakdown,
    objective: f64,
}

fn query_tags(fragment_text: &str, psi: &ContextProfile) -> Vec<String> {
    let tokens = token_set(fragment_text);
    let tags: BTreeSet<String> = psi
        .example_queries
        .iter()
        .filter(|q| q.tag.is_some() && !token_set(&q.text).is_disjoint(&tokens))
        .filter_map(|q| q.tag.clone())
        .collect();
    tags.into_iter().collect()
}

fn objects_for_fragment(
    doc: &Document,
    topics: Option<&[TopicLabel]>,
    fragment: &Fragment,
    psi: &ContextProfile,
    ctx: &PipelineContext<'_>,
) -> Result<(String, Vec<KnowledgeObject>)> {
    let header = synthesize_header(fragment, doc, &psi.example_queries, ctx.generator)?;
    let mut domains = match ctx.taxonomy {
        Some(t) => applicable_domains(&fragment.text, doc.meta("domain"), t, Some(ctx.embedder))?,
        None => listed_domains(doc.meta("domain")),
    };
    if domains.is_empty() {
        // nothing known about the domain: one object with an empty tag
        domains.push(String::new());
    }
    let clones = clone_for_domains(&doc.id, fragment.span(), &fragment.text, &domains, ctx.taxonomy, ctx.generator)?;
    let topic = topics.and_then(|t| majority_topic(&t[fragment.segment_indices()]));
    let tags = query_tags(&fragment.text, psi);
    let objects = clones
        .into_iter()
        .map(|c| {
            let mut ko = assemble_knowledge_object(
                c.id,
                &c.text,
                &header,
                object_metadata(doc, &c.domain),
                Provenance {
                    source_doc_id: doc.id.clone(),
                    span: fragment.span(),
                    sibling_ids: c.sibling_ids,
                    boundary_confidence: fragment.boundary_confidence,
                },
                ctx.embedder,
            )?;
            ko.topic = topic.clone();
            ko.usage.query_type_tags = tags.clone();
            Ok(ko)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, objects))
}

fn run_candidate(
    doc: &Document,
    vectors: &[Embedding],
    psi: &ContextProfile,
    cfg: &DisentangleConfig,
    ctx: &PipelineContext<'_>,
    theta: f64,
) -> Result<Candidate> {
    let fragments = recursive_segment(doc, vectors, theta, cfg.l_min)?;
    let topics = doc.topics();
    let mut headers = Vec::new();
    let mut objects = Vec::new();
    for f in &fragments {
        let (header, kos) = objects_for_fragment(doc, topics.as_deref(), f, psi, ctx)?;
        headers.push(header);
        objects.extend(kos);
    }
    if !faithfulness_check(doc, &objects) {
        return Err(Error::FaithfulnessViolation(doc.id.clone()));
    }
    let ei_after = if topics.is_some() {
        let labels: Vec<TopicLabel> = objects.iter().filter_map(|k| k.topic.clone()).collect();
        let vecs: Vec<Embedding> = objects.iter().map(|k| k.vector.clone()).collect();
        Some(entanglement_index(&labels, &vecs, cfg.alpha)?.ei)
    } else {
        None
    };
    let loss = context_loss(&fragments, &headers, psi, &cfg.loss_weights);
    Ok(Candidate {
        theta,
        fragments: fragments.len(),
        objective: ei_after.unwrap_or(0.0) + psi.lambda * loss.total,
        objects,
        ei_after,
        loss,
    })
}

/// Restructures one document into knowledge objects.
///
/// Every candidate `theta` is run through all stages; the one with the
/// lowest `EI + lambda * loss` is kept, ties going to fewer objects and
/// then to the lower `theta`. Documents without topic labels are scored on
/// the loss alone and never count as complete.
pub fn disentangle_document(
    doc: &Document,
    vectors: &[Embedding],
    psi: &ContextProfile,
    cfg: &DisentangleConfig,
    ctx: &PipelineContext<'_>,
) -> Result<DisentanglementOutcome> {
    crate::metrics::check_alpha(cfg.alpha)?;
    if !(cfg.beta > 0.0 && cfg.beta < 1.0) {
        return Err(Error::InvalidConfig(format!("beta {} outside (0, 1)", cfg.beta)));
    }
    psi.validate_for(doc.len())?;
    if vectors.len() != doc.len() {
        return Err(Error::LengthMismatch {
            left: doc.len(),
            right: vectors.len(),
        });
    }
    let ei_before = baseline_ei(doc, ctx.embedder, &cfg.baseline, cfg.alpha)?;

    let candidates = cfg
        .candidates()?
        .into_par_iter()
        .map(|theta| run_candidate(doc, vectors, psi, cfg, ctx, theta))
        .collect::<Result<Vec<_>>>()?;
    let best = candidates
        .into_iter()
        .min_by(|a, b| {
            a.objective
                .total_cmp(&b.objective)
                .then(a.objects.len().cmp(&b.objects.len()))
                .then(a.theta.total_cmp(&b.theta))
        })
        .expect("at least one candidate");
    debug!(
        "{}: theta {} gives {} objects, objective {:.4}",
        doc.id,
        best.theta,
        best.objects.len(),
        best.objective
    );
    Ok(DisentanglementOutcome {
        doc_id: doc.id.clone(),
        theta: best.theta,
        fragment_count: best.fragments,
        complete: best.ei_after.is_some_and(|e| e <= cfg.beta),
        faithful: true,
        objective_value: best.objective,
        loss: best.loss,
        knowledge_objects: best.objects,
        ei_before,
        ei_after: best.ei_after,
    })
}

/// Runs [`disentangle_document`] over a corpus in parallel, keeping input
/// order. `vectors[i]` holds the segment vectors of `docs[i]`.
pub fn disentangle_corpus(
    docs: &[Document],
    vectors: &[Vec<Embedding>],
    psi: &ContextProfile,
    cfg: &DisentangleConfig,
    ctx: &PipelineContext<'_>,
) -> Result<Vec<DisentanglementOutcome>> {
    if docs.len() != vectors.len() {
        return Err(Error::LengthMismatch {
            left: docs.len(),
            right: vectors.len(),
        });
    }
    docs.par_iter()
        .zip(vectors.par_iter())
        .map(|(d, v)| disentangle_document(d, v, psi, cfg, ctx))
        .collect()
}
