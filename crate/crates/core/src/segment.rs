//! Boundary detection over the consecutive-similarity profile, with
//! recursive refinement into fragments.
//!
//! Segments are numbered from 1 here. Gap `g` sits between segments `g`
//! and `g + 1`, and `profile[g - 1] = sim(s_g, s_{g+1})`. A gap is a
//! boundary when its similarity is strictly below `theta`.

use serde::{Deserialize, Serialize};

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::metrics::norms;
use crate::model::Document;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityProfile(pub Vec<f64>);

impl SimilarityProfile {
    /// Similarity at gap `g` (1-based).
    pub fn at_gap(&self, g: usize) -> f64 {
        self.0[g - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sorted, deduplicated boundary gaps.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundarySet(pub Vec<usize>);

impl BoundarySet {
    pub fn new(mut gaps: Vec<usize>) -> Self {
        gaps.sort_unstable();
        gaps.dedup();
        BoundarySet(gaps)
    }

    pub fn gaps(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, gap: usize) -> bool {
        self.0.binary_search(&gap).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A contiguous run of segments produced by Stage A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub doc_id: String,
    /// First segment, 1-based inclusive.
    pub start: usize,
    /// Last segment, 1-based inclusive.
    pub end: usize,
    pub text: String,
    pub token_count: usize,
    pub depth: usize,
    /// `clamp(theta - sim, 0, 1)` for the gap that opened the fragment; 1.0
    /// at the document start.
    pub boundary_confidence: f64,
}

impl Fragment {
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    pub fn segment_count(&self) -> usize {
        self.end - self.start + 1
    }

    /// 0-based segment indices covered by the fragment.
    pub fn segment_indices(&self) -> std::ops::Range<usize> {
        self.start - 1..self.end
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::ThetaOutOfRange(theta))
    }
}

pub fn similarity_profile(vectors: &[Embedding]) -> Result<SimilarityProfile> {
    let ns = norms(vectors)?;
    let mut values = Vec::with_capacity(vectors.len().saturating_sub(1));
    for i in 1..vectors.len() {
        let (a, b) = (&vectors[i - 1], &vectors[i]);
        if a.dim() != b.dim() {
            return Err(Error::DimMismatch {
                expected: a.dim(),
                found: b.dim(),
            });
        }
        let d: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
        values.push((d / (ns[i - 1] * ns[i])).clamp(-1.0, 1.0));
    }
    Ok(SimilarityProfile(values))
}

pub fn detect_boundaries(profile: &SimilarityProfile, theta: f64) -> Result<BoundarySet> {
    check_theta(theta)?;
    Ok(BoundarySet(
        profile
            .0
            .iter()
            .enumerate()
            .filter(|(_, s)| **s < theta)
            .map(|(i, _)| i + 1)
            .collect(),
    ))
}

struct Piece {
    /// 0-based half-open segment range.
    lo: usize,
    hi: usize,
    depth: usize,
    confidence: f64,
}

fn confidence(theta: f64, sim: f64) -> f64 {
    (theta - sim).clamp(0.0, 1.0)
}

/// Cuts `[lo, hi)` at the detected gaps of its own profile.
fn cut(
    vectors: &[Embedding],
    lo: usize,
    hi: usize,
    depth: usize,
    opening: f64,
    theta: f64,
) -> Result<Vec<Piece>> {
    let profile = similarity_profile(&vectors[lo..hi])?;
    let gaps = detect_boundaries(&profile, theta)?;
    let mut pieces = Vec::with_capacity(gaps.0.len() + 1);
    let mut start = lo;
    let mut conf = opening;
    for &g in gaps.gaps() {
        pieces.push(Piece {
            lo: start,
            hi: lo + g,
            depth,
            confidence: conf,
        });
        start = lo + g;
        conf = confidence(theta, profile.at_gap(g));
    }
    pieces.push(Piece {
        lo: start,
        hi,
        depth,
        confidence: conf,
    });
    Ok(pieces)
}

/// Stage A. Top-level boundaries split the document; any fragment longer
/// than `l_min` tokens and spanning at least three segments is re-cut over
/// its own profile at the same `theta`, until no new boundary appears.
/// The result tiles `1..=n` in document order.
pub fn recursive_segment(
    doc: &Document,
    vectors: &[Embedding],
    theta: f64,
    l_min: usize,
) -> Result<Vec<Fragment>> {
    check_theta(theta)?;
    if l_min == 0 {
        return Err(Error::InvalidConfig("l_min must be at least 1".into()));
    }
    if vectors.len() != doc.segments.len() {
        return Err(Error::LengthMismatch {
            left: doc.segments.len(),
            right: vectors.len(),
        });
    }
    if doc.is_empty() {
        return Ok(Vec::new());
    }
    let tokens = |p: &Piece| -> usize {
        doc.segments[p.lo..p.hi]
            .iter()
            .map(|s| s.token_count)
            .sum()
    };

    let mut done = Vec::new();
    // depth-first, children pushed in reverse so output stays in order
    let mut stack: Vec<Piece> = cut(vectors, 0, doc.len(), 0, 1.0, theta)?;
    stack.reverse();
    while let Some(piece) = stack.pop() {
        if tokens(&piece) > l_min && piece.hi - piece.lo >= 3 {
            let children = cut(
                vectors,
                piece.lo,
                piece.hi,
                piece.depth + 1,
                piece.confidence,
                theta,
            )?;
            if children.len() > 1 {
                stack.extend(children.into_iter().rev());
                continue;
            }
        }
        done.push(piece);
    }

    Ok(done
        .into_iter()
        .map(|p| {
            let segs = &doc.segments[p.lo..p.hi];
            Fragment {
                doc_id: doc.id.clone(),
                start: p.lo + 1,
                end: p.hi,
                text: segs
                    .iter()
                    .map(|s| s.text.as_str())
                    .collect::<Vec<_>>()
                    .join("\n"),
                token_count: segs.iter().map(|s| s.token_count).sum(),
                depth: p.depth,
                boundary_confidence: p.confidence,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DocType;

    fn vecs(rows: &[[f64; 2]]) -> Vec<Embedding> {
        rows.iter().map(|r| Embedding(r.to_vec())).collect()
    }

    /// Unit vectors whose consecutive cosines follow `profile`.
    fn chain(profile: &[f64]) -> Vec<Embedding> {
        let mut angle: f64 = 0.0;
        let mut out = vec![Embedding(vec![1.0, 0.0])];
        for s in profile {
            angle += s.acos();
            out.push(Embedding(vec![angle.cos(), angle.sin()]));
        }
        out
    }

    fn doc_of(n: usize, words: usize) -> Document {
        let text = vec!["w"; words].join(" ");
        Document::from_segments(
            "d",
            "t",
            DocType::Procedural,
            (0..n).map(|_| (text.as_str(), None)).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn profile_cases() {
        let p = similarity_profile(&vecs(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(p.0, vec![1.0, 0.0]);
        assert!(similarity_profile(&vecs(&[[1.0, 0.0]])).unwrap().is_empty());
        let p = similarity_profile(&vecs(&[[0.3, 0.4]; 4])).unwrap();
        assert!(p.0.iter().all(|s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn profile_zero_vector_reports_index() {
        match similarity_profile(&vecs(&[[1.0, 0.0], [0.0, 0.0]])).unwrap_err() {
            Error::ZeroVector { index } => assert_eq!(index, Some(1)),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn detect_cases() {
        let p = SimilarityProfile(vec![0.9, 0.5, 0.88]);
        assert_eq!(detect_boundaries(&p, 0.72).unwrap().0, vec![2]);
        let p = SimilarityProfile(vec![0.9; 4]);
        assert!(detect_boundaries(&p, 0.72).unwrap().is_empty());
        let p = SimilarityProfile(vec![0.3, 0.3]);
        assert_eq!(detect_boundaries(&p, 0.72).unwrap().0, vec![1, 2]);
        assert_eq!(detect_boundaries(&p, 1.0).unwrap_err().code(), "THETA_OUT_OF_RANGE");
        // strict: equal to theta is not a boundary
        let p = SimilarityProfile(vec![0.72]);
        assert!(detect_boundaries(&p, 0.72).unwrap().is_empty());
    }

    #[test]
    fn two_topic_document_splits_once() {
        let doc = doc_of(6, 60);
        let vectors = chain(&[0.9, 0.9, 0.3, 0.9, 0.9]);
        let frags = recursive_segment(&doc, &vectors, 0.72, 100).unwrap();
        let spans: Vec<_> = frags.iter().map(Fragment::span).collect();
        assert_eq!(spans, vec![(1, 3), (4, 6)]);
        assert!(frags.iter().all(|f| f.depth == 0));
        assert_eq!(frags[0].boundary_confidence, 1.0);
        assert!((frags[1].boundary_confidence - 0.42).abs() < 1e-9);
        assert_eq!(frags[0].token_count, 180);
        assert_eq!(frags[0].text.lines().count(), 3);
    }

    #[test]
    fn single_segment() {
        let doc = doc_of(1, 5);
        let frags = recursive_segment(&doc, &vecs(&[[1.0, 0.0]]), 0.72, 100).unwrap();
        assert_eq!(frags.len(), 1);
        assert_eq!(frags[0].span(), (1, 1));
        assert_eq!(frags[0].depth, 0);
        assert_eq!(frags[0].boundary_confidence, 1.0);
    }

    #[test]
    fn short_fragment_is_not_resplit() {
        // every gap is low but the whole document is under l_min tokens,
        // so only the top-level pass applies
        let doc = doc_of(4, 2);
        let vectors = chain(&[0.1, 0.1, 0.1]);
        let frags = recursive_segment(&doc, &vectors, 0.72, 100).unwrap();
        assert_eq!(frags.len(), 4);
        assert!(frags.iter().all(|f| f.depth == 0));
    }

    #[test]
    fn length_mismatch() {
        let doc = doc_of(3, 2);
        assert_eq!(
            recursive_segment(&doc, &vecs(&[[1.0, 0.0]]), 0.72, 10).unwrap_err().code(),
            "LENGTH_MISMATCH"
        );
    }
}
