//! Entanglement, retrieval and agreement measures.
//!
//! The Entanglement Index of a labeled, embedded segment sequence is the
//! share of cross-topic pairs `(i, j)`, `i < j`, whose cosine similarity is
//! strictly above the threshold `alpha`:
//!
//! ```text
//! EI = |{(i, j) : i < j, topic_i != topic_j, sim(v_i, v_j) > alpha}|
//!    / |{(i, j) : i < j, topic_i != topic_j}|
//! ```
//!
//! A sequence with no cross-topic pair is *pure* and reported with `EI = 0`.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{dot, Embedding};
use crate::error::{Error, Result};
use crate::model::TopicLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntangledPair {
    pub i: usize,
    pub j: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    pub alpha: f64,
    pub cross_topic_pair_count: usize,
    pub entangled_pair_count: usize,
    pub ei: f64,
    pub pure: bool,
    pub entangled_pairs: Vec<EntangledPair>,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// Norms of every vector, failing on the first zero vector.
pub(crate) fn norms(vectors: &[Embedding]) -> Result<Vec<f64>> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let n = v.norm();
            if n == 0.0 {
                Err(Error::ZeroVector { index: Some(i) })
            } else {
                Ok(n)
            }
        })
        .collect()
}

fn check_dims(vectors: &[Embedding]) -> Result<()> {
    if let Some(first) = vectors.first() {
        for v in vectors {
            if v.dim() != first.dim() {
                return Err(Error::DimMismatch {
                    expected: first.dim(),
                    found: v.dim(),
                });
            }
        }
    }
    Ok(())
}

fn cos_with_norms(a: &Embedding, na: f64, b: &Embedding, nb: f64) -> f64 {
    (dot(&a.0, &b.0) / (na * nb)).clamp(-1.0, 1.0)
}

/// Scans every cross-topic pair once, returning the pair count and the
/// entangled pairs in lexicographic `(i, j)` order.
fn scan_pairs(
    topics: &[TopicLabel],
    vectors: &[Embedding],
    alpha: f64,
) -> Result<(usize, Vec<EntangledPair>)> {
    if topics.len() != vectors.len() {
        return Err(Error::LengthMismatch {
            left: topics.len(),
            right: vectors.len(),
        });
    }
    check_alpha(alpha)?;
    check_dims(vectors)?;
    let ns = norms(vectors)?;
    let mut cross = 0;
    let mut pairs = Vec::new();
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            if topics[i] == topics[j] {
                continue;
            }
            cross += 1;
            let sim = cos_with_norms(&vectors[i], ns[i], &vectors[j], ns[j]);
            if sim > alpha {
                pairs.push(EntangledPair { i, j, similarity: sim });
            }
        }
    }
    Ok((cross, pairs))
}

/// The set of cross-topic pairs with similarity strictly above `alpha`.
pub fn entangled_pairs(
    topics: &[TopicLabel],
    vectors: &[Embedding],
    alpha: f64,
) -> Result<Vec<EntangledPair>> {
    scan_pairs(topics, vectors, alpha).map(|(_, p)| p)
}

pub fn entanglement_index(
    topics: &[TopicLabel],
    vectors: &[Embedding],
    alpha: f64,
) -> Result<EntanglementReport> {
    let (cross, pairs) = scan_pairs(topics, vectors, alpha)?;
    let ei = if cross == 0 {
        0.0
    } else {
        pairs.len() as f64 / cross as f64
    };
    Ok(EntanglementReport {
        alpha,
        cross_topic_pair_count: cross,
        entangled_pair_count: pairs.len(),
        ei,
        pure: cross == 0,
        entangled_pairs: pairs,
    })
}

/// Indices ranked by cosine similarity to `query`, descending, ties by
/// ascending index.
pub fn rank_by_similarity(query: &Embedding, vectors: &[Embedding]) -> Result<Vec<(usize, f64)>> {
    let nq = query.norm();
    if nq == 0.0 {
        return Err(Error::ZeroVector { index: None });
    }
    let ns = norms(vectors)?;
    let mut ranked = Vec::with_capacity(vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        if v.dim() != query.dim() {
            return Err(Error::DimMismatch {
                expected: query.dim(),
                found: v.dim(),
            });
        }
        ranked.push((i, cos_with_norms(query, nq, v, ns[i])));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Share of the top `k` segments labeled `relevant`. The denominator is
/// always `k`: when fewer than `k` segments exist, the empty slots count as
/// misses.
pub fn topk_precision(
    query: &Embedding,
    relevant: &TopicLabel,
    topics: &[TopicLabel],
    vectors: &[Embedding],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if vectors.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if topics.len() != vectors.len() {
        return Err(Error::LengthMismatch {
            left: topics.len(),
            right: vectors.len(),
        });
    }
    let ranked = rank_by_similarity(query, vectors)?;
    let hits = ranked
        .iter()
        .take(k)
        .filter(|(i, _)| &topics[*i] == relevant)
        .count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub detected_count: usize,
    pub true_count: usize,
}

impl SegmentationScore {
    /// Scores from raw counts. Both sets empty is a perfect score; exactly
    /// one empty scores zero.
    pub fn from_counts(matched: usize, detected_count: usize, true_count: usize) -> Self {
        let (precision, recall, f1) = match (detected_count, true_count) {
            (0, 0) => (1.0, 1.0, 1.0),
            (0, _) | (_, 0) => (0.0, 0.0, 0.0),
            (d, t) => {
                let p = matched as f64 / d as f64;
                let r = matched as f64 / t as f64;
                let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
                (p, r, f)
            }
        };
        SegmentationScore {
            precision,
            recall,
            f1,
            matched,
            detected_count,
            true_count,
        }
    }
}

pub(crate) fn check_gaps(gaps: &[usize], n_segments: usize) -> Result<BTreeSet<usize>> {
    let max = n_segments.saturating_sub(1);
    gaps.iter()
        .map(|&g| {
            if g >= 1 && g <= max {
                Ok(g)
            } else {
                Err(Error::GapOutOfRange { gap: g, max })
            }
        })
        .collect()
}

/// Exact-position boundary matching for one document of `n_segments`
/// segments. Gap `g` is the boundary between segments `g` and `g + 1`
/// (1-based).
pub fn boundary_f1(detected: &[usize], truth: &[usize], n_segments: usize) -> Result<SegmentationScore> {
    let d = check_gaps(detected, n_segments)?;
    let t = check_gaps(truth, n_segments)?;
    let matched = d.intersection(&t).count();
    Ok(SegmentationScore::from_counts(matched, d.len(), t.len()))
}

/// Cohen's kappa for two binary label sequences.
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let a_yes = a.iter().filter(|x| **x).count() as f64 / n;
    let b_yes = b.iter().filter(|x| **x).count() as f64 / n;
    let p_o = agree / n;
    let p_e = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
    if p_e >= 1.0 {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// The `ceil(p / 100 * N)`-th smallest value (1-based), `p` in `(0, 100]`.
pub fn nearest_rank_percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidConfig(format!("percentile {p} outside (0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let x = p * sorted.len() as f64 / 100.0;
    // p * N / 100 can land a hair above an integer (2.5% of 1000)
    let rank = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    };
    let rank = (rank as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Percentile bootstrap interval for the mean.
///
/// Draws `resamples` samples of size `N` with replacement from a ChaCha8
/// stream seeded with `seed`; the bounds are the nearest-rank
/// `(1 - level) / 2` and `1 - (1 - level) / 2` percentiles of the resampled
/// means.
pub fn bootstrap_ci(values: &[f64], level: f64, resamples: usize, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if resamples == 0 {
        return Err(Error::InvalidConfig("resamples must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level {level} outside (0, 1)")));
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..n {
            let x = values[rng.random_range(0..n)];
            sum += x;
            lo = lo.min(x);
            hi = hi.max(x);
        }
        // rounding can push the sum of equal values past them
        means.push((sum / n as f64).clamp(lo, hi));
    }
    let tail = (1.0 - level) / 2.0 * 100.0;
    Ok((
        nearest_rank_percentile(&means, tail)?,
        nearest_rank_percentile(&means, 100.0 - tail)?,
    ))
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && xs[idx[end + 1]] == xs[idx[start]] {
            end += 1;
        }
        // 1-based average rank of the tie block
        let avg = (start + end) as f64 / 2.0 + 1.0;
        for &i in &idx[start..=end] {
            ranks[i] = avg;
        }
        start = end + 1;
    }
    ranks
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let mx = mean(&rx).expect("non-empty");
    let my = mean(&ry).expect("non-empty");
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero rank variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(names: &[&str]) -> Vec<TopicLabel> {
        names.iter().map(|n| TopicLabel::from(*n)).collect()
    }

    fn v(rows: &[[f64; 2]]) -> Vec<Embedding> {
        rows.iter().map(|r| Embedding(r.to_vec())).collect()
    }

    fn fixture() -> (Vec<TopicLabel>, Vec<Embedding>) {
        (
            t(&["A", "A", "B", "B"]),
            v(&[[1.0, 0.0], [1.0, 0.0], [0.8, 0.6], [0.0, 1.0]]),
        )
    }

    #[test]
    fn entangled_pairs_fixture() {
        let (topics, vectors) = fixture();
        let pairs: Vec<_> = entangled_pairs(&topics, &vectors, 0.75)
            .unwrap()
            .iter()
            .map(|p| (p.i, p.j))
            .collect();
        assert_eq!(pairs, vec![(0, 2), (1, 2)]);
        assert!(entangled_pairs(&topics, &vectors, 0.99).unwrap().is_empty());
        let same = t(&["A", "A", "A", "A"]);
        assert!(entangled_pairs(&same, &vectors, 0.1).unwrap().is_empty());
    }

    #[test]
    fn entanglement_index_fixture() {
        let (topics, vectors) = fixture();
        let r = entanglement_index(&topics, &vectors, 0.75).unwrap();
        assert_eq!(r.cross_topic_pair_count, 4);
        assert_eq!(r.entangled_pair_count, 2);
        assert_eq!(r.ei, 0.5);
        assert!(!r.pure);
    }

    #[test]
    fn pure_document() {
        let (_, vectors) = fixture();
        let r = entanglement_index(&t(&["A"; 4]), &vectors, 0.5).unwrap();
        assert_eq!(r.ei, 0.0);
        assert!(r.pure);
    }

    #[test]
    fn ei_errors() {
        let (topics, vectors) = fixture();
        assert_eq!(
            entanglement_index(&topics[..3], &vectors, 0.5).unwrap_err().code(),
            "LENGTH_MISMATCH"
        );
        for bad in [0.0, 1.0, -0.2, f64::NAN] {
            assert_eq!(
                entanglement_index(&topics, &vectors, bad).unwrap_err().code(),
                "ALPHA_OUT_OF_RANGE"
            );
        }
    }

    #[test]
    fn strict_threshold() {
        // similarity exactly at alpha is not entangled
        let topics = t(&["A", "B"]);
        let vectors = v(&[[1.0, 0.0], [0.5, 0.75f64.sqrt()]]);
        let sim = crate::embed::cosine_sim(&vectors[0], &vectors[1]).unwrap();
        let r = entanglement_index(&topics, &vectors, sim).unwrap();
        assert_eq!(r.entangled_pair_count, 0);
    }

    #[test]
    fn topk_fixture() {
        let (topics, vectors) = fixture();
        let q = Embedding(vec![1.0, 0.0]);
        let a = TopicLabel::from("A");
        assert_eq!(topk_precision(&q, &a, &topics, &vectors, 2).unwrap(), 1.0);
        assert!((topk_precision(&q, &a, &topics, &vectors, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(topk_precision(&q, &a, &topics, &vectors, 4).unwrap(), 0.5);
        // denominator stays k beyond the corpus size
        assert_eq!(topk_precision(&q, &a, &topics, &vectors, 8).unwrap(), 0.25);
        assert_eq!(
            topk_precision(&q, &a, &[], &[], 2).unwrap_err().code(),
            "EMPTY_CORPUS"
        );
    }

    #[test]
    fn topk_ties_prefer_lower_index() {
        let topics = t(&["B", "A"]);
        let vectors = v(&[[1.0, 0.0], [1.0, 0.0]]);
        let q = Embedding(vec![1.0, 0.0]);
        assert_eq!(topk_precision(&q, &"A".into(), &topics, &vectors, 1).unwrap(), 0.0);
    }

    #[test]
    fn boundary_f1_cases() {
        let s = boundary_f1(&[2], &[2], 5).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = boundary_f1(&[2, 5], &[2, 7], 10).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        let s = boundary_f1(&[], &[], 10).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = boundary_f1(&[], &[3], 10).unwrap();
        assert_eq!(s.f1, 0.0);
        let s = boundary_f1(&[3], &[], 10).unwrap();
        assert_eq!(s.f1, 0.0);
        assert_eq!(boundary_f1(&[0], &[], 10).unwrap_err().code(), "GAP_OUT_OF_RANGE");
        assert_eq!(boundary_f1(&[10], &[], 10).unwrap_err().code(), "GAP_OUT_OF_RANGE");
    }

    fn marks(n: usize, yes: &[usize]) -> Vec<bool> {
        (1..=n).map(|g| yes.contains(&g)).collect()
    }

    #[test]
    fn kappa_cases() {
        let a = marks(10, &[2, 5]);
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
        let k = cohen_kappa(&a, &marks(10, &[2, 7])).unwrap();
        assert!((k - 0.375).abs() < 1e-12, "{k}");
        let k = cohen_kappa(&[true, false], &[false, true]).unwrap();
        assert!((k + 1.0).abs() < 1e-12);
        assert_eq!(cohen_kappa(&[true; 3], &[true; 3]).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&[], &[]).unwrap_err().code(), "EMPTY_INPUT");
        assert_eq!(cohen_kappa(&[true], &[]).unwrap_err().code(), "LENGTH_MISMATCH");
    }

    #[test]
    fn percentile_cases() {
        let tenths: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(nearest_rank_percentile(&[0.9], 90.0).unwrap(), 0.9);
        assert_eq!(nearest_rank_percentile(&tenths, 90.0).unwrap(), 0.9);
        assert_eq!(nearest_rank_percentile(&tenths, 50.0).unwrap(), 0.5);
        assert_eq!(nearest_rank_percentile(&tenths, 100.0).unwrap(), 1.0);
        assert_eq!(nearest_rank_percentile(&tenths, 0.1).unwrap(), 0.1);
        assert_eq!(nearest_rank_percentile(&[], 50.0).unwrap_err().code(), "EMPTY_INPUT");
        let thousand: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(nearest_rank_percentile(&thousand, 2.5).unwrap(), 25.0);
        assert_eq!(nearest_rank_percentile(&thousand, 97.5).unwrap(), 975.0);
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        assert_eq!(bootstrap_ci(&[5.0, 5.0, 5.0], 0.95, 200, 9).unwrap(), (5.0, 5.0));
        assert_eq!(bootstrap_ci(&[0.1; 7], 0.95, 200, 9).unwrap(), (0.1, 0.1));
        assert_eq!(bootstrap_ci(&[3.25], 0.95, 50, 1).unwrap(), (3.25, 3.25));
        assert_eq!(bootstrap_ci(&[], 0.95, 50, 1).unwrap_err().code(), "EMPTY_INPUT");
    }

    #[test]
    fn bootstrap_is_reproducible_and_bounded() {
        let xs = [0.2, 0.9, 0.4, 0.4, 1.0, 0.0, 0.6];
        let a = bootstrap_ci(&xs, 0.95, 1000, 42).unwrap();
        assert_eq!(a, bootstrap_ci(&xs, 0.95, 1000, 42).unwrap());
        assert!(0.0 <= a.0 && a.0 <= a.1 && a.1 <= 1.0);
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        let r = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(
            spearman_rho(&[1.0, 1.0], &[1.0, 2.0]).unwrap_err().code(),
            "DEGENERATE"
        );
    }

    #[test]
    fn spearman_ties_use_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
