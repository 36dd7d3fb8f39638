//! Stage B: synthetic context headers.

use std::collections::BTreeMap;

use crate::embed::AnchorEmbedderConfig;
use crate::error::{Error, Result};
use crate::model::{Document, TopicLabel};
use crate::segment::Fragment;
use crate::text::{token_bag, tokenize};

use super::domains::Domain;
use super::ExampleQuery;

pub const HEADER_SEPARATOR: &str = " — ";
pub const HEADER_TOKENS: usize = 5;

/// Produces context headers and per-domain clone texts.
pub trait HeaderGenerator: Send + Sync {
    fn generate(&self, fragment_text: &str, parent: &Document, queries: &[ExampleQuery]) -> Result<String>;

    fn restructure_for_domain(&self, fragment_text: &str, domain: &Domain) -> Result<String>;
}

/// Deterministic template: title, doc type, metadata domain, metadata
/// geographic scope and the five most frequent fragment tokens, joined by
/// `" — "`. Missing metadata parts are left out.
///
/// ```
/// use untangle::model::{DocType, Document};
/// use untangle::pipeline::{HeaderGenerator, TemplateGenerator};
///
/// let doc = Document::from_segments("d", "Plan Guide", DocType::Reference, [("x", None)])
///     .with_metadata("domain", "benefits")
///     .with_metadata("geographic", "CA");
/// let text = "visit copay deductible annual limit visit copay deductible annual limit plan";
/// let header = TemplateGenerator.generate(text, &doc, &[]).unwrap();
/// assert_eq!(header, "Plan Guide — reference — benefits — CA — annual copay deductible limit visit");
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

/// The `n` most frequent tokens (ties broken alphabetically), returned in
/// alphabetical order.
pub fn top_tokens(text: &str, n: usize) -> Vec<String> {
    let mut counted: Vec<(String, usize)> = token_bag(text).into_iter().collect();
    counted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut top: Vec<String> = counted.into_iter().take(n).map(|(t, _)| t).collect();
    top.sort();
    top
}

impl HeaderGenerator for TemplateGenerator {
    fn generate(&self, fragment_text: &str, parent: &Document, _queries: &[ExampleQuery]) -> Result<String> {
        let tokens = top_tokens(fragment_text, HEADER_TOKENS).join(" ");
        let parts = [
            parent.title.as_str(),
            parent.doc_type.as_str(),
            parent.meta("domain").unwrap_or(""),
            parent.meta("geographic").unwrap_or(""),
            tokens.as_str(),
        ];
        Ok(parts
            .iter()
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join(HEADER_SEPARATOR))
    }

    fn restructure_for_domain(&self, fragment_text: &str, domain: &Domain) -> Result<String> {
        Ok(format!("[Domain: {}] {fragment_text}", domain.name))
    }
}

/// Template header over the fragment's dominant-topic tokens, followed by
/// the dominant topic's label. Tokens that vote for any other topic are left
/// out of the header, so it only adds weight to the dominant anchor.
#[derive(Debug, Clone)]
pub struct AnchorAwareGenerator {
    lexicon: BTreeMap<String, Vec<TopicLabel>>,
}

impl AnchorAwareGenerator {
    pub fn new(cfg: &AnchorEmbedderConfig) -> Self {
        AnchorAwareGenerator {
            lexicon: cfg.lexicon.clone(),
        }
    }

    /// Topic with the most lexicon votes; ties go to the topic voted first.
    pub fn dominant_topic(&self, text: &str) -> Option<TopicLabel> {
        let mut votes: Vec<(TopicLabel, f64)> = Vec::new();
        for tok in tokenize(text) {
            if let Some(topics) = self.lexicon.get(&tok) {
                let share = 1.0 / topics.len() as f64;
                for t in topics {
                    match votes.iter_mut().find(|(l, _)| l == t) {
                        Some(v) => v.1 += share,
                        None => votes.push((t.clone(), share)),
                    }
                }
            }
        }
        let mut best: Option<(TopicLabel, f64)> = None;
        for (t, v) in votes {
            if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                best = Some((t, v));
            }
        }
        best.map(|(t, _)| t)
    }
}

impl HeaderGenerator for AnchorAwareGenerator {
    fn generate(&self, fragment_text: &str, parent: &Document, queries: &[ExampleQuery]) -> Result<String> {
        let Some(topic) = self.dominant_topic(fragment_text) else {
            return TemplateGenerator.generate(fragment_text, parent, queries);
        };
        let on_topic: Vec<String> = tokenize(fragment_text)
            .into_iter()
            .filter(|tok| self.lexicon.get(tok).is_none_or(|ts| ts.iter().all(|t| *t == topic)))
            .collect();
        let base = TemplateGenerator.generate(&on_topic.join(" "), parent, queries)?;
        Ok(format!("{base}{HEADER_SEPARATOR}{topic}"))
    }

    fn restructure_for_domain(&self, fragment_text: &str, domain: &Domain) -> Result<String> {
        TemplateGenerator.restructure_for_domain(fragment_text, domain)
    }
}

/// Runs `gen` for a fragment of `parent` and rejects blank output.
pub fn synthesize_header(
    fragment: &Fragment,
    parent: &Document,
    queries: &[ExampleQuery],
    gen: &dyn HeaderGenerator,
) -> Result<String> {
    if fragment.doc_id != parent.id || fragment.end > parent.len() {
        return Err(Error::InvalidConfig(format!(
            "fragment {}..{} of {:?} does not belong to document {:?}",
            fragment.start, fragment.end, fragment.doc_id, parent.id
        )));
    }
    let header = gen.generate(&fragment.text, parent, queries)?;
    if header.trim().is_empty() {
        return Err(Error::GeneratorFailed("empty header".into()));
    }
    Ok(header)
}
