//! Before/after comparison of a corpus indexed with fixed-window chunks
//! against the same corpus restructured into knowledge objects.

use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, Embedding};
use crate::error::{Error, Result};
use crate::metrics::{bootstrap_ci, mean, topk_precision};
use crate::model::{Document, TopicLabel};
use crate::pipeline::{baseline_chunks, BaselineChunking, DisentanglementOutcome};
use crate::synth::LabeledQuery;

/// Mean with a percentile-bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            level: 0.95,
            resamples: 1000,
            seed: 2024,
        }
    }
}

impl Estimate {
    pub fn of(values: &[f64], cfg: &BootstrapConfig) -> Result<Option<Self>> {
        let Some(value) = mean(values) else {
            return Ok(None);
        };
        let (ci_lo, ci_hi) = bootstrap_ci(values, cfg.level, cfg.resamples, cfg.seed)?;
        Ok(Some(Estimate {
            value,
            ci_lo,
            ci_hi,
            n: values.len(),
        }))
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub ei_before: Option<Estimate>,
    pub ei_after: Option<Estimate>,
    pub precision_before: Option<Estimate>,
    pub precision_after: Option<Estimate>,
    pub documents: usize,
    pub baseline_chunks: usize,
    pub knowledge_objects: usize,
    pub complete_documents: usize,
    pub faithful_documents: usize,
}

impl Comparison {
    /// `1 - after / before` of the mean EI.
    pub fn ei_relative_reduction(&self) -> Option<f64> {
        match (self.ei_before, self.ei_after) {
            (Some(b), Some(a)) if b.value > 0.0 => Some(1.0 - a.value / b.value),
            _ => None,
        }
    }

    /// Rows `(metric, estimate)` in a fixed order, for tabular reports.
    pub fn rows(&self) -> Vec<(&'static str, Option<Estimate>)> {
        vec![
            ("ei_before", self.ei_before),
            ("ei_after", self.ei_after),
            ("precision_before", self.precision_before),
            ("precision_after", self.precision_after),
        ]
    }
}

/// Top-`k` precision of each query over a pooled index.
pub fn query_precisions(
    queries: &[LabeledQuery],
    topics: &[TopicLabel],
    vectors: &[Embedding],
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Vec<f64>> {
    queries
        .iter()
        .map(|q| topk_precision(&embedder.embed(&q.text)?, &q.topic, topics, vectors, k))
        .collect()
}

/// Compares the baseline index of `docs` with the knowledge objects in
/// `outcomes`. Precision is measured only when queries are given and the
/// corpus carries topic labels.
pub fn compare(
    docs: &[Document],
    outcomes: &[DisentanglementOutcome],
    queries: &[LabeledQuery],
    embedder: &dyn Embedder,
    baseline: &BaselineChunking,
    k: usize,
    bootstrap: &BootstrapConfig,
) -> Result<Comparison> {
    if docs.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            left: docs.len(),
            right: outcomes.len(),
        });
    }
    let before: Vec<f64> = outcomes.iter().filter_map(|o| o.ei_before).collect();
    let after: Vec<f64> = outcomes.iter().filter_map(|o| o.ei_after).collect();

    let mut chunk_topics = Vec::new();
    let mut chunk_vectors = Vec::new();
    for doc in docs {
        for c in baseline_chunks(doc, baseline)? {
            if let Some(t) = c.topic {
                chunk_vectors.push(embedder.embed(&c.text)?);
                chunk_topics.push(t);
            }
        }
    }
    let mut ko_topics = Vec::new();
    let mut ko_vectors = Vec::new();
    for ko in outcomes.iter().flat_map(|o| &o.knowledge_objects) {
        if let Some(t) = &ko.topic {
            ko_topics.push(t.clone());
            ko_vectors.push(ko.vector.clone());
        }
    }
    let (precision_before, precision_after) = if queries.is_empty() || chunk_vectors.is_empty() || ko_vectors.is_empty() {
        (None, None)
    } else {
        (
            Estimate::of(&query_precisions(queries, &chunk_topics, &chunk_vectors, embedder, k)?, bootstrap)?,
            Estimate::of(&query_precisions(queries, &ko_topics, &ko_vectors, embedder, k)?, bootstrap)?,
        )
    };

    Ok(Comparison {
        ei_before: Estimate::of(&before, bootstrap)?,
        ei_after: Estimate::of(&after, bootstrap)?,
        precision_before,
        precision_after,
        documents: docs.len(),
        baseline_chunks: chunk_vectors.len(),
        knowledge_objects: outcomes.iter().map(|o| o.knowledge_objects.len()).sum(),
        complete_documents: outcomes.iter().filter(|o| o.complete).count(),
        faithful_documents: outcomes.iter().filter(|o| o.faithful).count(),
    })
}
