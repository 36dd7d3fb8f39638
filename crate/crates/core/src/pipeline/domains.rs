//! Stage C: domain applicability and controlled cloning.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine_sim, Embedder, Embedding};
use crate::error::{Error, Result};
use crate::io;
use crate::text::{token_set, tokenize};

fn default_keyword_min() -> usize {
    2
}

fn default_anchor_threshold() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub keywords: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Embedding>,
    #[serde(default = "default_anchor_threshold")]
    pub anchor_threshold: f64,
    #[serde(default = "default_keyword_min")]
    pub keyword_min: usize,
}

impl Domain {
    pub fn new(id: &str, name: &str, keywords: &[&str]) -> Self {
        Domain {
            id: id.to_string(),
            name: name.to_string(),
            keywords: keywords.iter().map(|k| k.to_lowercase()).collect(),
            anchor: None,
            anchor_threshold: default_anchor_threshold(),
            keyword_min: default_keyword_min(),
        }
    }

    fn keyword_hits(&self, tokens: &BTreeSet<String>) -> usize {
        self.keywords
            .iter()
            .filter(|k| tokens.contains(&k.to_lowercase()))
            .count()
    }
}

/// The exhaustive set of domains a fragment may be assigned to.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DomainTaxonomy {
    pub domains: Vec<Domain>,
}

impl DomainTaxonomy {
    pub fn new(domains: Vec<Domain>) -> Result<Self> {
        let t = DomainTaxonomy { domains };
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let t: DomainTaxonomy = io::read_json(path)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for d in &self.domains {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
            if let Some(a) = &d.anchor {
                if (a.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidConfig(format!(
                        "anchor of domain {:?} is not unit-norm",
                        d.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Domain> {
        self.domains.iter().find(|d| d.id == id)
    }

    /// Domain with the most keyword hits on `text`; first in taxonomy order
    /// on ties, `None` when nothing hits.
    pub fn best_keyword_match(&self, text: &str) -> Option<&Domain> {
        let tokens = token_set(text);
        let mut best: Option<(&Domain, usize)> = None;
        for d in &self.domains {
            let hits = d.keyword_hits(&tokens);
            if hits > 0 && best.is_none_or(|(_, b)| hits > b) {
                best = Some((d, hits));
            }
        }
        best.map(|(d, _)| d)
    }
}

/// Domain ids listed in a comma-separated metadata value.
pub fn listed_domains(metadata_domain: Option<&str>) -> Vec<String> {
    metadata_domain
        .into_iter()
        .flat_map(|v| v.split(','))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Domains that apply to `text`, in taxonomy order.
///
/// A domain applies when the document metadata lists it, when the text hits
/// at least `keyword_min` of its keywords, or when the text's vector is
/// closer than `anchor_threshold` to its anchor. The vector is only computed
/// if some domain has an anchor and an embedder is given. When nothing
/// applies the document's own metadata domain is returned, which may be
/// empty.
pub fn applicable_domains(
    text: &str,
    metadata_domain: Option<&str>,
    taxonomy: &DomainTaxonomy,
    embedder: Option<&dyn Embedder>,
) -> Result<Vec<String>> {
    if taxonomy.domains.is_empty() {
        return Err(Error::EmptyTaxonomy);
    }
    let listed = listed_domains(metadata_domain);
    let tokens: BTreeSet<String> = tokenize(text).into_iter().collect();
    let mut vector: Option<Embedding> = None;
    let mut out = Vec::new();
    for d in &taxonomy.domains {
        let mut applies = listed.contains(&d.id) || d.keyword_hits(&tokens) >= d.keyword_min;
        if !applies {
            if let (Some(anchor), Some(emb)) = (&d.anchor, embedder) {
                if vector.is_none() {
                    vector = Some(emb.embed(text)?);
                }
                let v = vector.as_ref().expect("just embedded");
                applies = cosine_sim(v, anchor)? > d.anchor_threshold;
            }
        }
        if applies {
            out.push(d.id.clone());
        }
    }
    if out.is_empty() {
        out = listed;
    }
    Ok(out)
}
