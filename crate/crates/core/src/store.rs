//! Knowledge-object store: exact top-k cosine search behind conjunctive
//! metadata filters, persisted as JSON Lines.
//!
//! File layout: a header line `{"schema_version":1,"dim":d}` followed by
//! one knowledge object per line, in insertion order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{dot, Embedding};
use crate::error::{Error, Result};
use crate::io;
use crate::pipeline::{KnowledgeObject, METADATA_KEYS};

pub const SCHEMA_VERSION: u64 = 1;

/// Field to required value; all constraints must hold.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetadataFilter(pub BTreeMap<String, String>);

impl MetadataFilter {
    pub fn new<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let f = MetadataFilter(
            pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        );
        f.validate()?;
        Ok(f)
    }

    /// Parses `key=value`.
    pub fn parse_constraint(s: &str) -> Result<(String, String)> {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("filter {s:?} is not key=value")))?;
        Ok((k.trim().to_string(), v.trim().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for k in self.0.keys() {
            if !METADATA_KEYS.contains(&k.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "unknown filter field {k:?}; expected one of {METADATA_KEYS:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn matches(&self, ko: &KnowledgeObject) -> bool {
        self.0
            .iter()
            .all(|(k, v)| ko.metadata.get(k).is_some_and(|m| m == v))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeStore {
    objects: HashMap<String, KnowledgeObject>,
    order: Vec<String>,
    dim: usize,
    ingested: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    schema_version: u64,
    dim: usize,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    ingested: BTreeSet<String>,
}

impl KnowledgeStore {
    /// A store holding exactly `objects`, in order.
    pub fn index(objects: Vec<KnowledgeObject>) -> Result<Self> {
        let mut s = KnowledgeStore::default();
        s.insert(objects)?;
        Ok(s)
    }

    /// Appends objects. Nothing is added if any object is rejected.
    pub fn insert(&mut self, objects: Vec<KnowledgeObject>) -> Result<()> {
        let mut dim = self.dim;
        let mut fresh = BTreeSet::new();
        for ko in &objects {
            if dim == 0 {
                dim = ko.vector.dim();
            } else if ko.vector.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: ko.vector.dim(),
                });
            }
            if self.objects.contains_key(&ko.id) || !fresh.insert(ko.id.as_str()) {
                return Err(Error::DuplicateId(ko.id.clone()));
            }
        }
        self.dim = dim;
        for ko in objects {
            self.order.push(ko.id.clone());
            self.objects.insert(ko.id.clone(), ko);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Vector dimension; 0 for an empty store.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeObject> {
        self.objects.get(id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut KnowledgeObject> {
        self.objects.get_mut(id)
    }

    /// Objects in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &KnowledgeObject> {
        self.order.iter().map(|id| &self.objects[id])
    }

    pub fn ids(&self) -> &[String] {
        &self.order
    }

    /// Fingerprints of interaction records already applied to the counters.
    pub fn ingested(&self) -> &BTreeSet<String> {
        &self.ingested
    }

    pub(crate) fn mark_ingested(&mut self, fingerprint: String) -> bool {
        self.ingested.insert(fingerprint)
    }

    /// Top `k` objects passing `filter`, by cosine similarity descending and
    /// then id ascending.
    pub fn query(
        &self,
        query: &Embedding,
        k: usize,
        filter: Option<&MetadataFilter>,
    ) -> Result<Vec<(&KnowledgeObject, f64)>> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if let Some(f) = filter {
            f.validate()?;
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        if query.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        let nq = query.norm();
        if nq == 0.0 {
            return Err(Error::ZeroVector { index: None });
        }
        let mut hits: Vec<(&KnowledgeObject, f64)> = self
            .iter()
            .filter(|ko| filter.is_none_or(|f| f.matches(ko)))
            .map(|ko| {
                let sim = (dot(&query.0, &ko.vector.0) / (nq * ko.vector.norm())).clamp(-1.0, 1.0);
                (ko, if sim.is_nan() { -1.0 } else { sim })
            })
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
        hits.truncate(k);
        Ok(hits)
    }

    /// Removes every object derived from `doc_id` whose span overlaps
    /// `span`, then appends `replacements`. Returns the removed ids.
    pub fn replace_source_region(
        &mut self,
        doc_id: &str,
        span: (usize, usize),
        replacements: Vec<KnowledgeObject>,
    ) -> Result<Vec<String>> {
        let overlaps = |ko: &KnowledgeObject| {
            let (s, e) = ko.provenance.span;
            ko.provenance.source_doc_id == doc_id && s <= span.1 && span.0 <= e
        };
        let removed: Vec<String> = self.iter().filter(|ko| overlaps(ko)).map(|ko| ko.id.clone()).collect();
        let mut trial = self.clone();
        for id in &removed {
            trial.objects.remove(id);
        }
        trial.order.retain(|id| trial.objects.contains_key(id));
        if trial.order.is_empty() {
            trial.dim = 0;
        }
        trial.insert(replacements)?;
        *self = trial;
        Ok(removed)
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let header = StoreHeader {
            schema_version: SCHEMA_VERSION,
            dim: self.dim,
            ingested: self.ingested.clone(),
        };
        let io_err = |e| Error::io("<store>", e);
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n").map_err(io_err)?;
        for ko in self.iter() {
            serde_json::to_writer(&mut out, ko)?;
            out.write_all(b"\n").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    pub fn read_from(reader: impl BufRead, path: &Path) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header_line = loop {
            match lines.next() {
                None => return Ok(KnowledgeStore::default()),
                Some((_, line)) => {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
            }
        };
        let version: serde_json::Value = serde_json::from_str(&header_line).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            source,
        })?;
        let v = version.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
        if v != SCHEMA_VERSION {
            return Err(Error::SchemaVersionMismatch(v));
        }
        let header: StoreHeader = serde_json::from_value(version).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            source,
        })?;
        let mut objects = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            objects.push(serde_json::from_str(&line).map_err(|source| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?);
        }
        let mut store = KnowledgeStore::index(objects)?;
        if !store.is_empty() && store.dim != header.dim {
            return Err(Error::DimMismatch {
                expected: header.dim,
                found: store.dim,
            });
        }
        store.ingested = header.ingested;
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        KnowledgeStore::read_from(io::open(path)?, path)
    }
}
