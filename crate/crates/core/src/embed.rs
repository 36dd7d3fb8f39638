//! Embedding vectors, cosine similarity and the pluggable [`Embedder`]
//! contract.
//!
//! Three embedders ship with the crate:
//!
//! * [`TableEmbedder`]: exact text to vector lookup, for hand-built fixtures.
//! * [`AnchorEmbedder`]: synthetic geometry with a planted cross-topic cosine.
//! * [`PrecomputedVectors`]: vectors produced by an external model, keyed by
//!   segment id (and optionally by text).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{Document, Segment, TopicLabel};
use crate::text::tokenize;

/// A dense real vector. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }
}

impl From<Vec<f64>> for Embedding {
    fn from(v: Vec<f64>) -> Self {
        Embedding(v)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `<v, w> / (|v| |w|)`, clamped to `[-1, 1]`.
pub fn cosine_sim(v: &Embedding, w: &Embedding) -> Result<f64> {
    if v.dim() != w.dim() {
        return Err(Error::DimMismatch {
            expected: v.dim(),
            found: w.dim(),
        });
    }
    let nv = v.norm();
    let nw = w.norm();
    if nv == 0.0 || nw == 0.0 {
        return Err(Error::ZeroVector { index: None });
    }
    Ok((dot(&v.0, &w.0) / (nv * nw)).clamp(-1.0, 1.0))
}

pub fn normalize(v: &Embedding) -> Result<Embedding> {
    let n = v.norm();
    if n == 0.0 {
        return Err(Error::ZeroVector { index: None });
    }
    Ok(Embedding(v.0.iter().map(|x| x / n).collect()))
}

/// The embedding function: a deterministic map from text to a fixed-width
/// vector.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Embedding>;

    /// Embeds a corpus segment. Adapters keyed by segment id override this.
    fn embed_segment(&self, segment: &Segment) -> Result<Embedding> {
        self.embed(&segment.text)
    }
}

/// One vector per segment, in segment order.
pub fn embed_segments(doc: &Document, embedder: &dyn Embedder) -> Result<Vec<Embedding>> {
    doc.segments
        .iter()
        .map(|seg| {
            let v = embedder
                .embed_segment(seg)
                .map_err(|e| Error::SegmentEmbedding {
                    index: seg.index,
                    source: Box::new(e),
                })?;
            if v.dim() != embedder.dim() {
                return Err(Error::SegmentEmbedding {
                    index: seg.index,
                    source: Box::new(Error::DimMismatch {
                        expected: embedder.dim(),
                        found: v.dim(),
                    }),
                });
            }
            Ok(v)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFallback {
    #[default]
    Error,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEmbedderConfig {
    pub dim: usize,
    pub entries: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub fallback: TableFallback,
}

/// Exact-text lookup table.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    cfg: TableEmbedderConfig,
}

impl TableEmbedder {
    pub fn new(cfg: TableEmbedderConfig) -> Result<Self> {
        for (text, v) in &cfg.entries {
            if v.len() != cfg.dim {
                return Err(Error::InvalidConfig(format!(
                    "table entry {text:?} has {} components, expected {}",
                    v.len(),
                    cfg.dim
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(TableEmbedder { cfg })
    }

    pub fn from_pairs<'a>(dim: usize, pairs: impl IntoIterator<Item = (&'a str, Vec<f64>)>) -> Result<Self> {
        TableEmbedder::new(TableEmbedderConfig {
            dim,
            entries: pairs.into_iter().map(|(t, v)| (t.to_string(), v)).collect(),
            fallback: TableFallback::Error,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        TableEmbedder::new(io::read_json(path)?)
    }
}

impl Embedder for TableEmbedder {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        match self.cfg.entries.get(text) {
            Some(v) => Ok(Embedding(v.clone())),
            None => match self.cfg.fallback {
                TableFallback::Error => Err(Error::MissingVector(text.to_string())),
                TableFallback::Zero => Ok(Embedding(vec![0.0; self.cfg.dim])),
            },
        }
    }
}

/// Synthetic geometry: one unit anchor per topic with a planted pairwise
/// cosine, plus hash-seeded noise per text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEmbedderConfig {
    pub dim: usize,
    pub cross_anchor_sim: f64,
    pub noise_scale: f64,
    pub seed: u64,
    pub anchors: BTreeMap<TopicLabel, Vec<f64>>,
    /// Token to topic(s) map used when embedding free text.
    #[serde(default)]
    pub lexicon: BTreeMap<String, Vec<TopicLabel>>,
}

impl AnchorEmbedderConfig {
    /// Builds anchors `a_i = normalize(sqrt(1 - mu) e_i + sqrt(mu) g)` where
    /// `e_i` are the first `k` standard basis vectors and `g` is basis vector
    /// `k`. Distinct anchors then have cosine exactly `mu` (up to rounding).
    pub fn planted(
        topics: &[TopicLabel],
        dim: usize,
        cross_anchor_sim: f64,
        noise_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let k = topics.len();
        if !(0.0..1.0).contains(&cross_anchor_sim) {
            return Err(Error::InvalidConfig(format!(
                "cross_anchor_sim {cross_anchor_sim} outside [0, 1)"
            )));
        }
        let needed = if cross_anchor_sim > 0.0 { k + 1 } else { k };
        if dim < needed.max(1) {
            return Err(Error::InvalidConfig(format!(
                "{k} topics with cross-anchor similarity {cross_anchor_sim} need dim >= {needed}, got {dim}"
            )));
        }
        let own = (1.0 - cross_anchor_sim).sqrt();
        let shared = cross_anchor_sim.sqrt();
        let mut anchors = BTreeMap::new();
        for (i, topic) in topics.iter().enumerate() {
            let mut v = vec![0.0; dim];
            v[i] = own;
            if cross_anchor_sim > 0.0 {
                v[k] = shared;
            }
            let v = normalize(&Embedding(v))?.0;
            if anchors.insert(topic.clone(), v).is_some() {
                return Err(Error::DuplicateId(topic.0.clone()));
            }
        }
        let cfg = AnchorEmbedderConfig {
            dim,
            cross_anchor_sim,
            noise_scale,
            seed,
            anchors,
            lexicon: BTreeMap::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_lexicon(mut self, lexicon: BTreeMap<String, Vec<TopicLabel>>) -> Result<Self> {
        self.lexicon = lexicon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise_scale {} must be a finite non-negative number",
                self.noise_scale
            )));
        }
        for (topic, a) in &self.anchors {
            if a.len() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    found: a.len(),
                });
            }
            let n = dot(a, a).sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "anchor for {topic} has norm {n}"
                )));
            }
        }
        let anchors: Vec<_> = self.anchors.iter().collect();
        for (i, (ti, ai)) in anchors.iter().enumerate() {
            for (tj, aj) in &anchors[i + 1..] {
                let c = dot(ai, aj);
                if (c - self.cross_anchor_sim).abs() > 1e-9 {
                    return Err(Error::InvalidConfig(format!(
                        "anchors {ti} and {tj} have cosine {c}, expected {}",
                        self.cross_anchor_sim
                    )));
                }
            }
        }
        for (token, topics) in &self.lexicon {
            for t in topics {
                if !self.anchors.contains_key(t) {
                    return Err(Error::InvalidConfig(format!(
                        "lexicon token {token:?} refers to unknown topic {t}"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Unit noise direction for `text`.
///
/// The text's FNV-1a 64-bit hash is combined with the seed as
/// `splitmix64(fnv1a(text) ^ splitmix64(seed))`; that value seeds a ChaCha8
/// stream from which `dim` standard normal draws are taken and normalized.
pub fn noise_direction(text: &str, seed: u64, dim: usize) -> Embedding {
    let mixed = splitmix64(fnv1a64(text.as_bytes()) ^ splitmix64(seed));
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Ok(u) = normalize(&Embedding(v)) {
            return u;
        }
    }
}

fn add_noise(base: &[f64], text: &str, cfg: &AnchorEmbedderConfig) -> Result<Embedding> {
    let u = noise_direction(text, cfg.seed, cfg.dim);
    let v: Vec<f64> = base
        .iter()
        .zip(&u.0)
        .map(|(b, n)| b + cfg.noise_scale * n)
        .collect();
    normalize(&Embedding(v))
}

/// `normalize(anchor(topic) + sigma * u(text))`; with zero noise the anchor
/// itself is returned bit for bit.
pub fn anchor_embed(topic: &TopicLabel, text: &str, cfg: &AnchorEmbedderConfig) -> Result<Embedding> {
    let anchor = cfg
        .anchors
        .get(topic)
        .ok_or_else(|| Error::UnknownTopic(topic.0.clone()))?;
    if cfg.noise_scale == 0.0 {
        return Ok(Embedding(anchor.clone()));
    }
    add_noise(anchor, text, cfg)
}

/// Text embedder over an [`AnchorEmbedderConfig`].
///
/// Tokens found in the lexicon vote for their topic(s); the anchors are mixed
/// in proportion to the votes, renormalized, and perturbed by the per-text
/// noise. A text whose recognized tokens all belong to one topic embeds
/// exactly like [`anchor_embed`] for that topic. Text with no recognized
/// token maps to its noise direction alone.
#[derive(Debug, Clone)]
pub struct AnchorEmbedder {
    cfg: AnchorEmbedderConfig,
}

impl AnchorEmbedder {
    pub fn new(cfg: AnchorEmbedderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AnchorEmbedder { cfg })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        AnchorEmbedder::new(io::read_json(path)?)
    }

    pub fn config(&self) -> &AnchorEmbedderConfig {
        &self.cfg
    }

    /// Lexicon votes per topic for `text`.
    pub fn topic_weights(&self, text: &str) -> BTreeMap<&TopicLabel, f64> {
        let mut weights: BTreeMap<&TopicLabel, f64> = BTreeMap::new();
        for tok in tokenize(text) {
            if let Some(topics) = self.cfg.lexicon.get(&tok) {
                let share = 1.0 / topics.len() as f64;
                for t in topics {
                    *weights.entry(t).or_insert(0.0) += share;
                }
            }
        }
        weights
    }
}

impl Embedder for AnchorEmbedder {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        let weights = self.topic_weights(text);
        if weights.is_empty() {
            return Ok(noise_direction(text, self.cfg.seed, self.cfg.dim));
        }
        if weights.len() == 1 {
            let topic = *weights.keys().next().expect("one entry");
            return anchor_embed(topic, text, &self.cfg);
        }
        let total: f64 = weights.values().sum();
        let mut mix = vec![0.0; self.cfg.dim];
        for (topic, w) in &weights {
            let a = &self.cfg.anchors[*topic];
            for (m, x) in mix.iter_mut().zip(a) {
                *m += (w / total) * x;
            }
        }
        let mix = normalize(&Embedding(mix))?;
        if self.cfg.noise_scale == 0.0 {
            return Ok(mix);
        }
        add_noise(&mix.0, text, &self.cfg)
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct VectorRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub vector: Vec<f64>,
}

/// Vectors computed outside the toolkit. Records are keyed by `segment_id`
/// (`"{doc_id}#{index}"`); records carrying a `text` key also serve
/// free-text lookups such as knowledge-object texts and queries.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedVectors {
    dim: usize,
    by_segment: HashMap<String, Embedding>,
    by_text: HashMap<String, Embedding>,
}

impl PrecomputedVectors {
    pub fn from_records(records: Vec<VectorRecord>) -> Result<Self> {
        let mut out = PrecomputedVectors::default();
        for (i, rec) in records.into_iter().enumerate() {
            if i == 0 {
                out.dim = rec.vector.len();
            } else if rec.vector.len() != out.dim {
                return Err(Error::DimMismatch {
                    expected: out.dim,
                    found: rec.vector.len(),
                });
            }
            let v = Embedding::new(rec.vector)?;
            if let Some(id) = rec.segment_id {
                if out.by_segment.insert(id.clone(), v.clone()).is_some() {
                    return Err(Error::DuplicateId(id));
                }
            }
            if let Some(text) = rec.text {
                out.by_text.insert(text, v);
            }
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        PrecomputedVectors::from_records(io::read_jsonl(path)?)
    }
}

impl Embedder for PrecomputedVectors {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        self.by_text
            .get(text)
            .cloned()
            .ok_or_else(|| Error::MissingVector(text.to_string()))
    }

    fn embed_segment(&self, segment: &Segment) -> Result<Embedding> {
        let id = segment.segment_id();
        match self.by_segment.get(&id) {
            Some(v) => Ok(v.clone()),
            None => self.embed(&segment.text).map_err(|_| Error::MissingVector(id)),
        }
    }
}
