//! Canonical document model and the JSON Lines corpus format.
//!
//! A corpus file holds one [`Document`] per line:
//!
//! ```json
//! {"id":"d1","title":"Plan Guide","doc_type":"reference","metadata":{"domain":"benefits"},
//!  "segments":[{"index":0,"text":"Outpatient copay rules.","topic":"billing"}]}
//! ```
//!
//! Unknown fields on documents and segments are kept in `extra` and written
//! back unchanged.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::io;
use crate::text::token_count;

/// A topic label drawn from a finite topic set. Equality is exact string
/// match.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicLabel(pub String);

impl TopicLabel {
    pub fn new(label: impl Into<String>) -> Self {
        TopicLabel(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TopicLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TopicLabel {
    fn from(s: &str) -> Self {
        TopicLabel(s.to_string())
    }
}

/// Functional class of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocType {
    Normative,
    Procedural,
    Reference,
    Computational,
    #[default]
    Unclassified,
}

impl DocType {
    pub const ALL: [DocType; 5] = [
        DocType::Normative,
        DocType::Procedural,
        DocType::Reference,
        DocType::Computational,
        DocType::Unclassified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DocType::Normative => "normative",
            DocType::Procedural => "procedural",
            DocType::Reference => "reference",
            DocType::Computational => "computational",
            DocType::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for DocType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "SegmentRecord", into = "SegmentRecord")]
pub struct Segment {
    /// Owning document; filled in from the enclosing record on read.
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub token_count: usize,
    pub topic: Option<TopicLabel>,
    pub extra: Map<String, Value>,
}

impl Segment {
    pub fn new(doc_id: &str, index: usize, text: impl Into<String>, topic: Option<&str>) -> Self {
        let text = text.into();
        Segment {
            doc_id: doc_id.to_string(),
            index,
            token_count: token_count(&text),
            text,
            topic: topic.map(TopicLabel::from),
            extra: Map::new(),
        }
    }

    /// Identifier used by the precomputed-vector adapter: `"{doc_id}#{index}"`.
    pub fn segment_id(&self) -> String {
        format!("{}#{}", self.doc_id, self.index)
    }
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    index: usize,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topic: Option<TopicLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_count: Option<usize>,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

impl From<SegmentRecord> for Segment {
    fn from(r: SegmentRecord) -> Self {
        Segment {
            doc_id: String::new(),
            index: r.index,
            token_count: r.token_count.unwrap_or_else(|| token_count(&r.text)),
            text: r.text,
            topic: r.topic,
            extra: r.extra,
        }
    }
}

impl From<Segment> for SegmentRecord {
    fn from(s: Segment) -> Self {
        SegmentRecord {
            index: s.index,
            text: s.text,
            topic: s.topic,
            token_count: Some(s.token_count),
            extra: s.extra,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub doc_type: DocType,
    /// Free-form context: `domain`, `geographic`, `temporal`, `persona`, ...
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub segments: Vec<Segment>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Document {
    /// Builds a document from `(text, topic)` pairs, numbering segments from 0.
    pub fn from_segments<'a>(
        id: &str,
        title: &str,
        doc_type: DocType,
        segments: impl IntoIterator<Item = (&'a str, Option<&'a str>)>,
    ) -> Self {
        let segments = segments
            .into_iter()
            .enumerate()
            .map(|(i, (text, topic))| Segment::new(id, i, text, topic))
            .collect();
        Document {
            id: id.to_string(),
            title: title.to_string(),
            doc_type,
            metadata: BTreeMap::new(),
            segments,
            extra: Map::new(),
        }
    }

    pub fn with_metadata(mut self, key: &str, value: &str) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Ground-truth topics, or `None` if any segment is unlabeled.
    pub fn topics(&self) -> Option<Vec<TopicLabel>> {
        self.segments.iter().map(|s| s.topic.clone()).collect()
    }

    pub fn require_topics(&self) -> Result<Vec<TopicLabel>> {
        self.topics()
            .ok_or_else(|| Error::MissingTopics(self.id.clone()))
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }
}

/// Checks the document invariants and returns the document unchanged when
/// they hold. All violations are reported, not just the first.
pub fn validate_document(doc: Document) -> std::result::Result<Document, Vec<Error>> {
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (pos, seg) in doc.segments.iter().enumerate() {
        if !seen.insert(seg.index) {
            errors.push(Error::DuplicateId(format!("{}#{}", doc.id, seg.index)));
        } else if seg.index != pos {
            errors.push(Error::IndexGap {
                doc_id: doc.id.clone(),
                expected: pos,
                found: seg.index,
            });
        }
        if seg.text.trim().is_empty() {
            errors.push(Error::EmptySegment {
                doc_id: doc.id.clone(),
                index: seg.index,
            });
        }
        let actual = token_count(&seg.text);
        if actual != seg.token_count {
            errors.push(Error::TokenCountMismatch {
                doc_id: doc.id.clone(),
                index: seg.index,
                declared: seg.token_count,
                actual,
            });
        }
    }
    if errors.is_empty() {
        Ok(doc)
    } else {
        Err(errors)
    }
}

/// Validates every document and checks corpus-wide id uniqueness.
pub fn validate_corpus(docs: Vec<Document>) -> std::result::Result<Vec<Document>, Vec<Error>> {
    let mut errors = Vec::new();
    let mut ids = HashSet::new();
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        if !ids.insert(doc.id.clone()) {
            errors.push(Error::DuplicateId(doc.id.clone()));
        }
        match validate_document(doc) {
            Ok(d) => out.push(d),
            Err(mut e) => errors.append(&mut e),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

fn attach_doc_ids(mut doc: Document) -> Document {
    for seg in &mut doc.segments {
        seg.doc_id.clone_from(&doc.id);
    }
    doc
}

pub fn read_corpus_from(reader: impl BufRead, path: &Path) -> Result<Vec<Document>> {
    let docs: Vec<Document> = io::read_jsonl_from(reader, path)?;
    Ok(docs.into_iter().map(attach_doc_ids).collect())
}

/// Reads a corpus file. Structural validation is left to
/// [`validate_corpus`].
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    read_corpus_from(io::open(path)?, path)
}

pub fn write_corpus(mut out: impl Write, docs: &[Document]) -> Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n").map_err(|e| Error::io("<corpus>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> Document {
        Document::from_segments(
            "d1",
            "Plan Guide",
            DocType::Reference,
            [("a b", Some("x")), ("c d e", Some("x")), ("f", Some("y"))],
        )
    }

    #[test]
    fn well_formed_document_is_returned_unchanged() {
        let doc = three();
        assert_eq!(validate_document(doc.clone()).unwrap(), doc);
    }

    #[test]
    fn validation_is_idempotent() {
        let once = validate_document(three()).unwrap();
        let twice = validate_document(once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn index_gap() {
        let mut doc = three();
        doc.segments.remove(1);
        doc.segments[1].index = 2;
        let errs = validate_document(doc).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].code(), "INDEX_GAP");
    }

    #[test]
    fn blank_segment() {
        let mut doc = three();
        doc.segments[0].text = "   ".into();
        doc.segments[0].token_count = 0;
        let errs = validate_document(doc).unwrap_err();
        assert_eq!(errs[0].code(), "EMPTY_SEGMENT");
    }

    #[test]
    fn duplicate_document_ids() {
        let errs = validate_corpus(vec![three(), three()]).unwrap_err();
        assert!(errs.iter().any(|e| e.code() == "DUPLICATE_ID"));
    }

    #[test]
    fn token_count_is_filled_when_absent() {
        let line = r#"{"id":"d","title":"t","doc_type":"procedural","metadata":{},"segments":[{"index":0,"text":"One two, three."}]}"#;
        let docs = read_corpus_from(line.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(docs[0].segments[0].token_count, 3);
        assert_eq!(docs[0].segments[0].doc_id, "d");
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let line = r#"{"id":"d","title":"t","doc_type":"normative","metadata":{"domain":"x"},"segments":[{"index":0,"text":"a","page":4}],"source":"upload"}"#;
        let docs = read_corpus_from(line.as_bytes(), Path::new("mem")).unwrap();
        let mut buf = Vec::new();
        write_corpus(&mut buf, &docs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(r#""source":"upload""#));
        assert!(text.contains(r#""page":4"#));
        let again = read_corpus_from(text.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(again, docs);
    }

    #[test]
    fn unknown_doc_type_is_rejected() {
        let line = r#"{"id":"d","doc_type":"memo","segments":[]}"#;
        let err = read_corpus_from(line.as_bytes(), Path::new("mem")).unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
    }
}
