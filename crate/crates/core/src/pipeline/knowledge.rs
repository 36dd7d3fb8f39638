//! Stage D: knowledge-object assembly, cloning and the faithfulness check.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::embed::{Embedder, Embedding};
use crate::error::{Error, Result};
use crate::model::{Document, TopicLabel};
use crate::text::{bag_contains, token_bag};

use super::domains::{Domain, DomainTaxonomy};
use super::header::HeaderGenerator;

/// Metadata keys every knowledge object carries.
pub const METADATA_KEYS: [&str; 5] = ["domain", "geographic", "persona", "temporal", "doc_type"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SignpostKind {
    Structural,
    Header,
    Conflict,
}

impl fmt::Display for SignpostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignpostKind::Structural => "STRUCTURAL",
            SignpostKind::Header => "HEADER",
            SignpostKind::Conflict => "CONFLICT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_doc_id: String,
    /// 1-based inclusive segment span.
    pub span: (usize, usize),
    #[serde(default)]
    pub sibling_ids: Vec<String>,
    pub boundary_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub query_type_tags: Vec<String>,
    #[serde(default)]
    pub retrieval_count: u64,
    #[serde(default)]
    pub answered_count: u64,
    #[serde(default)]
    pub hallucination_count: u64,
    #[serde(default)]
    pub signposts: Vec<SignpostKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeObject {
    pub id: String,
    /// Header, a blank line, then the fragment text. This is what gets
    /// embedded.
    pub primary_text: String,
    pub raw_fragment: String,
    pub header: String,
    pub metadata: BTreeMap<String, String>,
    pub provenance: Provenance,
    pub usage: Usage,
    /// Majority ground-truth topic of the source segments, when labeled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<TopicLabel>,
    #[serde(serialize_with = "write_vector", deserialize_with = "read_vector")]
    pub vector: Embedding,
}

impl KnowledgeObject {
    pub fn domain(&self) -> &str {
        self.metadata.get("domain").map(String::as_str).unwrap_or("")
    }
}

/// Components are written with 17 significant digits, which round-trips
/// every finite `f64`.
fn write_vector<S: Serializer>(v: &Embedding, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::{Error as _, SerializeSeq};
    let mut seq = s.serialize_seq(Some(v.0.len()))?;
    for x in &v.0 {
        let raw = RawValue::from_string(format!("{x:.16e}")).map_err(S::Error::custom)?;
        seq.serialize_element(&raw)?;
    }
    seq.end()
}

fn read_vector<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Embedding, D::Error> {
    use serde::de::Error as _;
    Embedding::new(Vec::<f64>::deserialize(d)?).map_err(D::Error::custom)
}

/// `ko-` followed by a content hash of document id, span and domain.
pub fn knowledge_object_id(doc_id: &str, span: (usize, usize), domain: &str) -> String {
    let mut h = Sha256::new();
    h.update(doc_id.as_bytes());
    h.update([0]);
    h.update(span.0.to_le_bytes());
    h.update(span.1.to_le_bytes());
    h.update([0]);
    h.update(domain.as_bytes());
    let digest = h.finalize();
    let hex: String = digest[..12].iter().map(|b| format!("{b:02x}")).collect();
    format!("ko-{hex}")
}

/// The five metadata fields, with `domain` overridden.
pub fn object_metadata(doc: &Document, domain: &str) -> BTreeMap<String, String> {
    METADATA_KEYS
        .iter()
        .map(|k| {
            let v = match *k {
                "domain" => domain.to_string(),
                "doc_type" => doc.doc_type.as_str().to_string(),
                other => doc.meta(other).unwrap_or("").to_string(),
            };
            (k.to_string(), v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainClone {
    pub id: String,
    pub domain: String,
    pub text: String,
    pub sibling_ids: Vec<String>,
}

/// One text per domain. A single domain keeps the fragment as is; several
/// domains each get restructured text, a distinct id and links to all other
/// clones.
pub fn clone_for_domains(
    doc_id: &str,
    span: (usize, usize),
    fragment_text: &str,
    domains: &[String],
    taxonomy: Option<&DomainTaxonomy>,
    gen: &dyn HeaderGenerator,
) -> Result<Vec<DomainClone>> {
    match domains {
        [] => Err(Error::NoDomains),
        [only] => Ok(vec![DomainClone {
            id: knowledge_object_id(doc_id, span, only),
            domain: only.clone(),
            text: fragment_text.to_string(),
            sibling_ids: Vec::new(),
        }]),
        many => {
            let ids: Vec<String> = many
                .iter()
                .map(|d| knowledge_object_id(doc_id, span, d))
                .collect();
            many.iter()
                .zip(&ids)
                .map(|(d, id)| {
                    let domain = taxonomy
                        .and_then(|t| t.get(d))
                        .cloned()
                        .unwrap_or_else(|| Domain::new(d, d, &[]));
                    Ok(DomainClone {
                        id: id.clone(),
                        domain: d.clone(),
                        text: gen.restructure_for_domain(fragment_text, &domain)?,
                        sibling_ids: ids.iter().filter(|o| *o != id).cloned().collect(),
                    })
                })
                .collect()
        }
    }
}

/// Builds the record and embeds `header + "\n\n" + text`.
pub fn assemble_knowledge_object(
    id: String,
    fragment_text: &str,
    header: &str,
    metadata: BTreeMap<String, String>,
    provenance: Provenance,
    embedder: &dyn Embedder,
) -> Result<KnowledgeObject> {
    if header.trim().is_empty() || fragment_text.trim().is_empty() {
        return Err(Error::InvalidConfig("header and fragment must be non-empty".into()));
    }
    let primary_text = format!("{header}\n\n{fragment_text}");
    let vector = embedder.embed(&primary_text)?;
    Ok(KnowledgeObject {
        id,
        primary_text,
        raw_fragment: fragment_text.to_string(),
        header: header.to_string(),
        metadata,
        provenance,
        usage: Usage::default(),
        topic: None,
        vector,
    })
}

/// Every source token survives, counted with multiplicity, in the union of
/// the objects' raw fragments.
pub fn faithfulness_check(doc: &Document, objects: &[KnowledgeObject]) -> bool {
    let mut source: BTreeMap<String, usize> = BTreeMap::new();
    for seg in &doc.segments {
        for (t, n) in token_bag(&seg.text) {
            *source.entry(t).or_insert(0) += n;
        }
    }
    let mut covered: BTreeMap<String, usize> = BTreeMap::new();
    for ko in objects.iter().filter(|k| k.provenance.source_doc_id == doc.id) {
        for (t, n) in token_bag(&ko.raw_fragment) {
            *covered.entry(t).or_insert(0) += n;
        }
    }
    bag_contains(&covered, &source)
}
